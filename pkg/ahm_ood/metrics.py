"""Detection metrics, the checkpoint silhouette filter and run aggregation."""
from dataclasses import dataclass
import math
import numpy as np
from scipy.spatial.distance import cdist
from sklearn.metrics import roc_auc_score
from sklearn.metrics import silhouette_samples
from .errors import ContractError


# above this many (id, ood) pairs AUROC switches to the rank-based path
EXACT_PAIR_LIMIT = 10 ** 7


# slack on tpr * n so exact products are not rounded up by representation error
_TPR_SLACK = 1e-12


@dataclass(frozen=True)
class BinaryScoreSet:
    """Scores of ID (positive) and OOD (negative) documents."""

    id_scores: np.ndarray
    ood_scores: np.ndarray

    def __post_init__(self):
        for name in ('id_scores', 'ood_scores'):
            values = np.asarray(getattr(self, name), dtype=np.float64).ravel()
            if values.size == 0:
                raise ContractError('{} must not be empty'.format(name))
            if not np.all(np.isfinite(values)):
                raise ContractError('{} must be finite'.format(name))
            values.setflags(write=False)
            object.__setattr__(self, name, values)

    @classmethod
    def from_scores(cls, scores, is_ood):
        """Return the set from parallel score and OOD-flag sequences."""
        scores = np.asarray(scores, dtype=np.float64)
        is_ood = np.asarray(is_ood, dtype=bool)
        return cls(scores[~is_ood], scores[is_ood])

    def swapped(self):
        """Return the set with the ID and OOD roles exchanged."""
        return BinaryScoreSet(self.ood_scores, self.id_scores)


@dataclass(frozen=True)
class MetricSummary:
    """Mean and population standard deviation of metrics over runs."""

    auroc_mean: float
    auroc_std: float
    fpr_mean: float
    fpr_std: float
    n_runs: int


def _as_score_set(scores):
    if isinstance(scores, BinaryScoreSet):
        return scores
    raise TypeError('scores must be a BinaryScoreSet, got {}'.format(type(scores).__name__))


def auroc_pairs(scores):
    """Return the AUROC by comparing every (id, ood) pair, ties counted 1/2."""
    scores = _as_score_set(scores)
    wins = 0.0
    # chunk the ID side so the comparison matrix stays small
    for start in range(0, len(scores.id_scores), 1024):
        chunk = scores.id_scores[start:start + 1024, None]
        wins += np.sum(chunk > scores.ood_scores) + 0.5 * np.sum(chunk == scores.ood_scores)
    return float(wins / (len(scores.id_scores) * len(scores.ood_scores)))


def auroc_rank(scores):
    """Return the AUROC from the rank statistic of the pooled scores."""
    scores = _as_score_set(scores)
    labels = np.concatenate([np.ones(len(scores.id_scores)), np.zeros(len(scores.ood_scores))])
    values = np.concatenate([scores.id_scores, scores.ood_scores])
    return float(roc_auc_score(labels, values))


def auroc(scores):
    """
    Return the probability that a random ID score beats a random OOD score.

    Args:
        scores (BinaryScoreSet): the ID and OOD scores

    Returns (float):
        the AUROC in [0, 1], ties counted as half a win

    """
    scores = _as_score_set(scores)
    if len(scores.id_scores) * len(scores.ood_scores) <= EXACT_PAIR_LIMIT:
        return auroc_pairs(scores)
    return auroc_rank(scores)


def fpr_at_tpr(scores, tpr_target=0.95):
    """
    Return the OOD acceptance rate at the threshold admitting tpr_target of ID.

    Scores >= the threshold are predicted ID. The threshold is the largest
    value that still admits at least tpr_target of the ID scores.

    Args:
        scores (BinaryScoreSet): the ID and OOD scores
        tpr_target (float): the true positive rate to reach, in (0, 1]

    Returns (float):
        the fraction of OOD scores >= the threshold

    """
    scores = _as_score_set(scores)
    if not 0 < tpr_target <= 1:
        raise ContractError('tpr_target must be in (0, 1], got {}'.format(tpr_target))
    ranked = np.sort(scores.id_scores)[::-1]
    needed = max(1, int(math.ceil(tpr_target * len(ranked) - _TPR_SLACK)))
    threshold = ranked[needed - 1]
    return float(np.mean(scores.ood_scores >= threshold))


def silhouette(features, labels):
    """
    Return the mean silhouette coefficient of labeled embeddings.

    Distances are euclidean. Members of singleton clusters score 0, as do
    points whose intra and nearest-cluster distances are both 0.

    Args:
        features (np.ndarray): (n, Hid) embeddings
        labels (array-like): (n,) cluster ids

    Returns (float):
        the mean coefficient in [-1, 1]

    """
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels)
    if len(labels) != len(features):
        raise ContractError('got {} labels for {} embeddings'.format(len(labels), len(features)))
    clusters = np.unique(labels)
    if len(clusters) < 2:
        raise ContractError('silhouette needs at least 2 clusters, got {}'.format(len(clusters)))
    if len(clusters) == len(labels):
        return 0.0
    # silhouette_samples sets singleton members to 0 and maps 0 / 0 to 0
    distances = cdist(features, features, metric='euclidean')
    values = silhouette_samples(distances, labels, metric='precomputed')
    return float(np.nan_to_num(values).mean())


def mean_std(values):
    """Return the arithmetic mean and population standard deviation."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ContractError('cannot summarize an empty list of runs')
    return float(values.mean()), float(values.std())


def aggregate_runs(aurocs, fprs):
    """
    Summarize the metrics of several runs.

    Args:
        aurocs (list): the AUROC of each run
        fprs (list): the FPR at 95% TPR of each run

    Returns (MetricSummary):
        means, population stds and the number of runs

    """
    if len(aurocs) != len(fprs):
        raise ContractError('got {} AUROCs and {} FPRs'.format(len(aurocs), len(fprs)))
    auroc_mean, auroc_std = mean_std(aurocs)
    fpr_mean, fpr_std = mean_std(fprs)
    return MetricSummary(auroc_mean, auroc_std, fpr_mean, fpr_std, len(aurocs))


# explicitly define the outward facing API of this module
__all__ = [
    BinaryScoreSet.__name__,
    MetricSummary.__name__,
    auroc.__name__,
    auroc_pairs.__name__,
    auroc_rank.__name__,
    fpr_at_tpr.__name__,
    silhouette.__name__,
    mean_std.__name__,
    aggregate_runs.__name__,
]
