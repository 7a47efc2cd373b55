"""A toy multi-modal transformer encoder-classifier with head masking."""
from .backward import backward
from .backward import backward_batch
from .config import AttentionHeadMask
from .config import DocumentInput
from .config import ModelConfig
from .embed import EmbeddingSet
from .embed import extract_embeddings
from .forward import ForwardTrace
from .forward import forward
from .forward import forward_batch
from .params import ModelParams
from .params import init_params
from .params import load_params
from .params import save_params
from .params import snapshot_pretrained
from .train import Checkpoint
from .train import TrainConfig
from .train import fine_tune


# explicitly define the outward facing API of this package
__all__ = [
    AttentionHeadMask.__name__,
    Checkpoint.__name__,
    DocumentInput.__name__,
    EmbeddingSet.__name__,
    ForwardTrace.__name__,
    ModelConfig.__name__,
    ModelParams.__name__,
    TrainConfig.__name__,
    backward.__name__,
    backward_batch.__name__,
    extract_embeddings.__name__,
    fine_tune.__name__,
    forward.__name__,
    forward_batch.__name__,
    init_params.__name__,
    load_params.__name__,
    save_params.__name__,
    snapshot_pretrained.__name__,
]
