"""Small random models and documents shared by the test cases."""
import numpy as np
from ..model.config import DocumentInput
from ..model.config import ModelConfig


def tiny_config(**overrides):
    """Return a model small enough for finite differences."""
    values = dict(
        num_layers=2,
        num_heads=2,
        hidden=8,
        ffn_width=6,
        text_vocab=7,
        num_patch_features=3,
        max_seq_len=6,
        num_classes=3,
    )
    values.update(overrides)
    return ModelConfig(**values)


def random_documents(config, count, seed=0, max_len=None, prefix='doc'):
    """
    Return documents of random length with random tokens and patches.

    Every document has at least one text token and one patch; labels cycle
    through the classes of the config.

    """
    rng = np.random.default_rng(seed)
    max_len = max_len or config.max_seq_len - 1
    documents = []
    for index in range(count):
        length = int(rng.integers(2, max_len + 1))
        num_patches = int(rng.integers(1, length))
        documents.append(DocumentInput(
            text_token_ids=rng.integers(0, config.text_vocab, size=length - num_patches).tolist(),
            patch_vectors=rng.normal(size=(num_patches, config.num_patch_features)),
            label=index % config.num_classes,
            doc_id='{}-{}'.format(prefix, index),
        ))
    return documents


def clustered_documents(config, per_class, seed=0, separation=3.0, prefix='doc'):
    """
    Return documents whose patches cluster around one mean per class.

    Text tokens come from disjoint vocabulary ranges per class when the
    vocabulary is large enough.

    """
    rng = np.random.default_rng(seed)
    means = separation * rng.normal(size=(config.num_classes, config.num_patch_features))
    width = max(1, config.text_vocab // config.num_classes)
    documents = []
    for label in range(config.num_classes):
        low = min(label * width, config.text_vocab - width)
        for index in range(per_class):
            documents.append(DocumentInput(
                text_token_ids=rng.integers(low, low + width, size=2).tolist(),
                patch_vectors=means[label] + 0.1 * rng.normal(size=(2, config.num_patch_features)),
                label=label,
                doc_id='{}-{}-{}'.format(prefix, label, index),
            ))
    return documents


# explicitly define the outward facing API of this module
__all__ = [
    tiny_config.__name__,
    random_documents.__name__,
    clustered_documents.__name__,
]
