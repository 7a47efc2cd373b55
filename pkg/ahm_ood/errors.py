"""Exceptions raised by the ahm_ood package."""


class AhmOodError(Exception):
    """Base class for every error raised deliberately by this package."""


class ShapeError(AhmOodError, ValueError):
    """An array argument has the wrong dimensions."""


class ContractError(AhmOodError, ValueError):
    """A documented precondition of an operation does not hold."""


class InsufficientDataError(AhmOodError, ValueError):
    """Too few samples to estimate a statistic."""


class DegenerateSubspaceError(AhmOodError, ValueError):
    """Training features leave no residual outside the principal subspace."""


class ConfigurationError(AhmOodError, ValueError):
    """A configuration value or combination of values is invalid."""


class TrainingFailureError(AhmOodError, RuntimeError):
    """Fine-tuning diverged."""

    def __init__(self, epoch, message):
        """
        Initialize a new training failure.

        Args:
            epoch (int): the 1-based epoch in which training diverged
            message (str): a description of the failure

        """
        super(TrainingFailureError, self).__init__(
            'epoch {}: {}'.format(epoch, message))
        self.epoch = epoch


class DatasetParseError(AhmOodError, ValueError):
    """A dataset file contains a malformed line."""

    def __init__(self, path, line_number, message):
        super(DatasetParseError, self).__init__(
            '{}:{}: {}'.format(path, line_number, message))
        self.path = path
        self.line_number = line_number


class RunFailureError(AhmOodError, RuntimeError):
    """A single experiment run could not complete."""

    def __init__(self, protocol, seed, message, silhouettes=None):
        super(RunFailureError, self).__init__(
            '[{} seed={}] {}'.format(protocol, seed, message))
        self.protocol = protocol
        self.seed = seed
        self.silhouettes = silhouettes


# explicitly define the outward facing API of this module
__all__ = [
    AhmOodError.__name__,
    ShapeError.__name__,
    ContractError.__name__,
    InsufficientDataError.__name__,
    DegenerateSubspaceError.__name__,
    ConfigurationError.__name__,
    TrainingFailureError.__name__,
    DatasetParseError.__name__,
    RunFailureError.__name__,
]
