"""Document embedding extraction."""
from dataclasses import dataclass
import numpy as np
from .forward import POOLINGS
from .forward import forward_batch


@dataclass(frozen=True)
class EmbeddingSet:
    """Pooled document embeddings with their logits and labels."""

    # (n, Hid) one embedding per document, in dataset order
    features: np.ndarray
    # (n, num_classes) classifier outputs
    logits: np.ndarray
    # (n,) class ids, -1 where a document is unlabeled
    labels: np.ndarray
    # the document identifiers
    doc_ids: tuple

    def __len__(self):
        return self.features.shape[0]


def document_labels(dataset):
    """Return the (n,) label array of a dataset with -1 for missing labels."""
    return np.array([-1 if doc.label is None else doc.label for doc in dataset], dtype=np.int64)


def extract_embeddings(params, dataset, mask=None, pooling='cls_last', batch_size=64):
    """
    Return the pooled embeddings of every document in a dataset.

    Args:
        params (ModelParams): the model parameters
        dataset (list): the DocumentInput objects
        mask (AttentionHeadMask): the head mask, None for the plain model
        pooling (str): 'cls_last' for the final-layer CLS state, 'avg_avg'
            for the mean over all layers and token positions
        batch_size (int): the number of documents per forward pass

    Returns (EmbeddingSet):
        the embeddings in dataset order

    """
    if pooling not in POOLINGS:
        raise ValueError('pooling must be one of {}, got {!r}'.format(POOLINGS, pooling))
    hidden, classes = params.config.hidden, params.config.num_classes
    features, logits = [np.zeros((0, hidden))], [np.zeros((0, classes))]
    for start in range(0, len(dataset), batch_size):
        trace = forward_batch(params, dataset[start:start + batch_size], mask)
        features.append(trace.pool(pooling))
        logits.append(trace.logits)
    return EmbeddingSet(
        features=np.concatenate(features, axis=0),
        logits=np.concatenate(logits, axis=0),
        labels=document_labels(dataset),
        doc_ids=tuple(document.doc_id for document in dataset),
    )


# explicitly define the outward facing API of this module
__all__ = [
    EmbeddingSet.__name__,
    document_labels.__name__,
    extract_embeddings.__name__,
]
