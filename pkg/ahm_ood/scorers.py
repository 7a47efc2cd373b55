"""
Post-hoc OOD scoring functions.

Every scorer returns HIGHER values for more in-distribution inputs. Each
accepts a single document (1-D feature / logit vectors, returning a float)
or a batch (2-D arrays, returning an array).
"""
from functools import wraps
import logging
import numpy as np
from scipy.special import logsumexp
from scipy.special import rel_entr
from scipy.special import softmax
from .errors import ContractError
from .errors import DegenerateSubspaceError
from .linalg import fit_pca
from .linalg import knn_distances
from .linalg import l2_normalize
from .linalg import mahalanobis_sq


logger = logging.getLogger(__name__)


# templates are clamped from below before taking logarithms
KL_TEMPLATE_FLOOR = 1e-12


# residual mass below this fraction of the total centered mass is degenerate
_DEGENERATE_RESIDUAL_RATIO = 1e-10


def _rowwise(count=1):
    """
    Return a decorator that batches the first `count` array arguments.

    1-D inputs are scored as a single row and the score is returned as a
    float; 2-D inputs return one score per row.

    """
    def decorator(function):
        @wraps(function)
        def wrapper(*args, **kwargs):
            arrays = [np.asarray(arg, dtype=np.float64) for arg in args[:count]]
            single = arrays[0].ndim == 1
            arrays = [np.atleast_2d(array) for array in arrays]
            scores = function(*arrays, *args[count:], **kwargs)
            return float(scores[0]) if single else scores
        return wrapper
    return decorator


@_rowwise()
def msp(logits):
    """Return the maximum softmax probability."""
    return softmax(logits, axis=-1).max(axis=-1)


@_rowwise()
def max_logit(logits):
    """Return the largest logit."""
    return logits.max(axis=-1)


@_rowwise()
def energy(logits, temperature=1.0):
    """Return temperature * logsumexp(logits / temperature)."""
    if temperature <= 0:
        raise ContractError('temperature must be > 0')
    return temperature * logsumexp(logits / temperature, axis=-1)


def class_templates(logits, labels, num_classes):
    """
    Return the per-class mean softmax vectors of training logits.

    Args:
        logits (np.ndarray): (n, C) training logits
        labels (np.ndarray): (n,) training class ids
        num_classes (int): the number of classes C

    Returns (np.ndarray):
        (C, C) rows of probability vectors; classes without samples get
        the uniform vector

    """
    probs = softmax(np.atleast_2d(logits), axis=-1)
    templates = np.full((num_classes, num_classes), 1.0 / num_classes)
    for label in range(num_classes):
        members = probs[labels == label]
        if len(members):
            templates[label] = members.mean(axis=0)
    return templates


@_rowwise()
def kl_matching(logits, kl_templates):
    """Return -min_k KL(softmax(logits) || template_k)."""
    probs = softmax(logits, axis=-1)
    templates = np.maximum(np.asarray(kl_templates, dtype=np.float64), KL_TEMPLATE_FLOOR)
    divergences = rel_entr(probs[:, None, :], templates[None, :, :]).sum(axis=-1)
    return -divergences.min(axis=1)


@_rowwise(2)
def grad_norm(pooled_embedding, logits):
    """
    Return the L1 norm of the KL(uniform || softmax) gradient on the head.

    The gradient is the outer product of the embedding and
    softmax(logits) - uniform, so its L1 norm factorizes. Peaked (ID-like)
    predictions give larger norms.

    """
    logits = np.atleast_2d(logits)
    uniform = 1.0 / logits.shape[1]
    deviation = np.abs(softmax(logits, axis=-1) - uniform).sum(axis=-1)
    return deviation * np.abs(pooled_embedding).sum(axis=-1)


@_rowwise()
def mahalanobis_score(feature, gaussian):
    """Return -min_c of the squared Mahalanobis distance to the class means."""
    distances = np.stack([
        mahalanobis_sq(feature, mean, gaussian.precision)
        for mean in gaussian.class_means
    ], axis=1)
    return -distances.min(axis=1)


@_rowwise()
def knn_score(feature, knn_reference, k):
    """Return minus the distance of the normalized feature to its k-th neighbor."""
    distances = knn_distances(l2_normalize(feature), knn_reference, k, 'euclidean')
    return -distances[:, k - 1]


def fit_vim(train_features, train_logits, pca_dim):
    """
    Fit the principal subspace and virtual-logit scale.

    Args:
        train_features (np.ndarray): (n, Hid) training features
        train_logits (np.ndarray): (n, C) training logits
        pca_dim (int): the principal subspace dimension d

    Returns (tuple):
        the PcaBasis and alpha = sum(max logit) / sum(residual norm)

    """
    pca = fit_pca(train_features, pca_dim)
    residuals = pca.residual_norms(train_features)
    centered_mass = np.linalg.norm(np.atleast_2d(train_features) - pca.mean, axis=1).sum()
    residual_mass = residuals.sum()
    if residual_mass <= _DEGENERATE_RESIDUAL_RATIO * max(centered_mass, 1.0):
        msg = 'train features have no residual outside the top-{} subspace'.format(pca_dim)
        raise DegenerateSubspaceError(msg)
    alpha = float(np.max(train_logits, axis=1).sum() / residual_mass)
    if not alpha > 0:
        msg = 'virtual logit scale must be positive, got {:.4g}'.format(alpha)
        raise DegenerateSubspaceError(msg)
    return pca, alpha


@_rowwise(2)
def vim_score(feature, logits, pca, vim_alpha):
    """Return logsumexp(logits) - alpha * residual norm."""
    return logsumexp(np.atleast_2d(logits), axis=-1) - vim_alpha * pca.residual_norms(feature)


@_rowwise()
def residual_score(feature, pca):
    """Return minus the residual norm outside the principal subspace."""
    return -pca.residual_norms(feature)


@_rowwise(2)
def neco_score(feature, logits, pca):
    """Return (principal norm / centered norm) * max logit, 0 for zero norms."""
    centered = feature - pca.mean
    total = np.linalg.norm(centered, axis=1)
    principal = np.linalg.norm(centered @ pca.components.T, axis=1)
    ratio = np.divide(principal, total, out=np.zeros_like(total), where=total > 0)
    return ratio * np.atleast_2d(logits).max(axis=-1)


def fit_normalizer(scores):
    """
    Return the (mean, std) of train scores used to z-normalize a model.

    A zero std is flagged and replaced by 1.

    """
    scores = np.asarray(scores, dtype=np.float64)
    mean, std = float(scores.mean()), float(scores.std())
    if std == 0:
        logger.warning('degenerate score normalizer (std = 0); using std = 1')
        std = 1.0
    return mean, std


@_rowwise(2)
def gnome_score(feature_finetuned, feature_pretrained, gaussian_ft, gaussian_pt, normalizers):
    """
    Return the sum of z-normalized Mahalanobis scores of two models.

    Args:
        feature_finetuned: features from the fine-tuned model
        feature_pretrained: features of the same documents from the
            pre-fine-tuning snapshot
        gaussian_ft (GaussianStats): statistics of the fine-tuned features
        gaussian_pt (GaussianStats): statistics of the snapshot features
        normalizers (tuple): ((mean, std) fine-tuned, (mean, std) snapshot)

    """
    (mean_ft, std_ft), (mean_pt, std_pt) = normalizers
    std_ft = std_ft or 1.0
    std_pt = std_pt or 1.0
    finetuned = (mahalanobis_score(feature_finetuned, gaussian_ft) - mean_ft) / std_ft
    pretrained = (mahalanobis_score(feature_pretrained, gaussian_pt) - mean_pt) / std_pt
    return finetuned + pretrained


# explicitly define the outward facing API of this module
__all__ = [
    msp.__name__,
    max_logit.__name__,
    energy.__name__,
    class_templates.__name__,
    kl_matching.__name__,
    grad_norm.__name__,
    mahalanobis_score.__name__,
    knn_score.__name__,
    fit_vim.__name__,
    vim_score.__name__,
    residual_score.__name__,
    neco_score.__name__,
    fit_normalizer.__name__,
    gnome_score.__name__,
]
