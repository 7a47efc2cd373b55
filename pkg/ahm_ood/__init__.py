"""Out-of-distribution detection with attention head masking."""
from .ahm import AhmConfig
from .ahm import AhmEnsemble
from .ahm import run_search
from .data import SyntheticSpec
from .data import generate
from .data import make_cross_split
from .data import make_intra_split
from .harness import ExperimentConfig
from .harness import load_config
from .harness import run_experiment
from .methods import ALL_METHODS
from .metrics import auroc
from .metrics import fpr_at_tpr
from .model import AttentionHeadMask
from .model import DocumentInput
from .model import ModelConfig
from .model import TrainConfig
from .model import fine_tune
from .model import init_params
from .scoring import fit_contexts
from .scoring import score_dataset


# define the outward facing API of this package
__all__ = [
    'ALL_METHODS',
    AhmConfig.__name__,
    AhmEnsemble.__name__,
    AttentionHeadMask.__name__,
    DocumentInput.__name__,
    ExperimentConfig.__name__,
    ModelConfig.__name__,
    SyntheticSpec.__name__,
    TrainConfig.__name__,
    auroc.__name__,
    fine_tune.__name__,
    fit_contexts.__name__,
    fpr_at_tpr.__name__,
    generate.__name__,
    init_params.__name__,
    load_config.__name__,
    make_cross_split.__name__,
    make_intra_split.__name__,
    run_experiment.__name__,
    run_search.__name__,
    score_dataset.__name__,
]
