"""Shape configuration, attention head masks and document inputs."""
from dataclasses import dataclass
from dataclasses import field
import numpy as np
from ..errors import ConfigurationError
from ..errors import ContractError
from ..errors import ShapeError


@dataclass(frozen=True)
class ModelConfig:
    """The shape hyperparameters of the encoder-classifier."""

    # the number of encoder layers N
    num_layers: int = 4
    # the number of attention heads H per layer
    num_heads: int = 4
    # the hidden width Hid (divisible by num_heads)
    hidden: int = 64
    # the width of the feed-forward block
    ffn_width: int = 128
    # the size of the text token vocabulary
    text_vocab: int = 200
    # the length of each visual patch vector
    num_patch_features: int = 16
    # the longest sequence (CLS + text + patches) the model accepts
    max_seq_len: int = 64
    # the number of classifier outputs
    num_classes: int = 10

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise TypeError('{} must be of type: int'.format(name))
            if value < 1:
                raise ConfigurationError('{} must be >= 1, got {}'.format(name, value))
        if self.hidden % self.num_heads != 0:
            msg = 'hidden ({}) must be divisible by num_heads ({})'
            raise ConfigurationError(msg.format(self.hidden, self.num_heads))

    @property
    def head_dim(self):
        """Return the width of a single attention head."""
        return self.hidden // self.num_heads


class AttentionHeadMask:
    """A binary (num_layers, num_heads) matrix gating attention heads."""

    def __init__(self, mask):
        """
        Initialize a new attention head mask.

        Args:
            mask (array-like): a (N, H) matrix with entries exactly 0 or 1

        """
        values = np.array(mask, dtype=np.float64)
        if values.ndim != 2 or 0 in values.shape:
            raise ShapeError('mask must be a non-empty 2-D matrix, got {}'.format(values.shape))
        if not np.all((values == 0) | (values == 1)):
            raise ContractError('mask entries must be exactly 0 or 1')
        values.setflags(write=False)
        self._mask = values

    @classmethod
    def all_ones(cls, num_layers, num_heads):
        """Return the identity mask that keeps every head."""
        return cls(np.ones((num_layers, num_heads)))

    @classmethod
    def from_bitmap(cls, rows):
        """Return a mask from row strings such as ['1011', '1101']."""
        return cls([[int(bit) for bit in row] for row in rows])

    @property
    def values(self):
        """Return the read-only (N, H) float matrix."""
        return self._mask

    @property
    def shape(self):
        """Return the (num_layers, num_heads) dimensions."""
        return self._mask.shape

    @property
    def is_identity(self):
        """Return True if no head is masked."""
        return bool(np.all(self._mask == 1))

    def zeros_per_layer(self):
        """Return the number of masked heads in each layer."""
        return (self._mask == 0).sum(axis=1)

    def to_bitmap(self):
        """Return the mask as one '0'/'1' string per layer."""
        return [''.join(str(int(bit)) for bit in row) for row in self._mask]

    def __eq__(self, other):
        if not isinstance(other, AttentionHeadMask):
            return NotImplemented
        return np.array_equal(self._mask, other._mask)

    def __hash__(self):
        return hash(tuple(self.to_bitmap()))

    def __repr__(self):
        return '{}({})'.format(self.__class__.__name__, '/'.join(self.to_bitmap()))


@dataclass(frozen=True, eq=False)
class DocumentInput:
    """A multi-modal document: text token ids plus visual patch vectors."""

    # indices into the text vocabulary
    text_token_ids: tuple = ()
    # (num_patches, num_patch_features) patch vectors
    patch_vectors: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    # the class id, None for unlabeled documents
    label: object = None
    # a corpus-unique identifier
    doc_id: str = ''

    def __post_init__(self):
        ids = tuple(int(token) for token in self.text_token_ids)
        object.__setattr__(self, 'text_token_ids', ids)
        patches = np.array(self.patch_vectors, dtype=np.float64)
        if patches.size == 0:
            patches = patches.reshape(0, patches.shape[-1] if patches.ndim == 2 else 0)
        if patches.ndim != 2:
            raise ShapeError('patch_vectors must be 2-D, got {}'.format(patches.shape))
        patches.setflags(write=False)
        object.__setattr__(self, 'patch_vectors', patches)
        if self.label is not None:
            object.__setattr__(self, 'label', int(self.label))

    @property
    def seq_len(self):
        """Return the encoder sequence length including the CLS token."""
        return 1 + len(self.text_token_ids) + self.patch_vectors.shape[0]

    def with_label(self, label):
        """Return a copy of this document carrying a different label."""
        return DocumentInput(self.text_token_ids, self.patch_vectors, label, self.doc_id)

    def __eq__(self, other):
        if not isinstance(other, DocumentInput):
            return NotImplemented
        return (
            self.doc_id == other.doc_id and
            self.label == other.label and
            self.text_token_ids == other.text_token_ids and
            self.patch_vectors.shape == other.patch_vectors.shape and
            np.array_equal(self.patch_vectors, other.patch_vectors)
        )

    __hash__ = None


def check_document(config, document):
    """
    Raise an error if a document does not fit a model configuration.

    Args:
        config (ModelConfig): the model shape
        document (DocumentInput): the document to validate

    Returns:
        None

    """
    if document.seq_len > config.max_seq_len:
        msg = 'document {!r} has length {} > max_seq_len {}'
        raise ContractError(msg.format(document.doc_id, document.seq_len, config.max_seq_len))
    ids = document.text_token_ids
    if ids and (min(ids) < 0 or max(ids) >= config.text_vocab):
        msg = 'document {!r} has token ids outside [0, {})'
        raise ContractError(msg.format(document.doc_id, config.text_vocab))
    patches = document.patch_vectors
    if patches.shape[0] and patches.shape[1] != config.num_patch_features:
        msg = 'document {!r} has patch width {}, expected {}'
        raise ShapeError(msg.format(document.doc_id, patches.shape[1], config.num_patch_features))


def check_mask(config, mask):
    """Raise an error if a mask does not match the (N, H) model geometry."""
    if mask.shape != (config.num_layers, config.num_heads):
        msg = 'mask shape {} does not match (num_layers, num_heads) = {}'
        raise ShapeError(msg.format(mask.shape, (config.num_layers, config.num_heads)))


# explicitly define the outward facing API of this module
__all__ = [
    ModelConfig.__name__,
    AttentionHeadMask.__name__,
    DocumentInput.__name__,
    check_document.__name__,
    check_mask.__name__,
]
