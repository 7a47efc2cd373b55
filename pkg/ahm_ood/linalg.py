"""Dense float64 matrix kernel used by the model, the scorers and the metrics."""
from dataclasses import dataclass
import logging
import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import softmax
from .errors import ContractError
from .errors import InsufficientDataError
from .errors import ShapeError


logger = logging.getLogger(__name__)


# the default ridge added to the shared covariance
DEFAULT_REGULARIZATION = 1e-6


# eigenvalues below this fraction of the largest one are treated as null
_NULL_EIGENVALUE_RATIO = 1e-10


# tolerance on |m - m^T| for symmetric inputs
_SYMMETRY_TOLERANCE = 1e-8


# the supported nearest neighbor metrics
KNN_METRICS = ('euclidean', 'cosine')


def as_matrix(values, name='matrix'):
    """
    Return a validated 2-D float64 C-contiguous copy of the input.

    Args:
        values (array-like): the values to convert
        name (str): the argument name used in error messages

    Returns (np.ndarray):
        a (rows, cols) float64 array with only finite entries

    """
    matrix = np.array(values, dtype=np.float64, order='C', copy=True)
    if matrix.ndim != 2:
        msg = '{} must be 2-D, got shape {}'.format(name, matrix.shape)
        raise ShapeError(msg)
    if not np.all(np.isfinite(matrix)):
        raise ContractError('{} contains NaN or Inf entries'.format(name))
    return matrix


def matmul(a, b):
    """
    Return the matrix product of two dense matrices.

    Args:
        a (np.ndarray): a (n, k) matrix
        b (np.ndarray): a (k, m) matrix

    Returns (np.ndarray):
        the (n, m) product

    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        msg = 'cannot multiply shapes {} and {}'.format(a.shape, b.shape)
        raise ShapeError(msg)
    return a @ b


def softmax_rows(m):
    """Return the row-wise softmax of a matrix (max-shifted for stability)."""
    return softmax(np.asarray(m, dtype=np.float64), axis=-1)


@dataclass(frozen=True)
class GaussianStats:
    """Class-conditional Gaussians sharing one covariance matrix."""

    # the sorted class ids, one per row of class_means
    classes: np.ndarray
    # (C, Hid) per-class feature averages
    class_means: np.ndarray
    # (Hid, Hid) pooled within-class covariance plus the ridge
    shared_covariance: np.ndarray
    # (Hid, Hid) pseudo-inverse of shared_covariance
    precision: np.ndarray


@dataclass(frozen=True)
class PcaBasis:
    """The top principal directions of a feature matrix."""

    # (Hid,) feature mean removed before projecting
    mean: np.ndarray
    # (d, Hid) orthonormal rows, the principal directions
    components: np.ndarray
    # (d,) variances along the components, non-increasing
    eigenvalues: np.ndarray

    @property
    def dim(self):
        """Return the number of retained components."""
        return self.components.shape[0]

    def project(self, features):
        """Return the centered features projected onto the subspace."""
        centered = np.atleast_2d(features) - self.mean
        return (centered @ self.components.T) @ self.components

    def residual_norms(self, features):
        """Return the norm of each centered feature outside the subspace."""
        centered = np.atleast_2d(features) - self.mean
        residual = centered - (centered @ self.components.T) @ self.components
        return np.linalg.norm(residual, axis=1)


def symmetric_eig(m):
    """
    Return the full eigendecomposition of a symmetric matrix.

    Args:
        m (np.ndarray): a symmetric (n, n) matrix

    Returns (tuple):
        - eigenvalues (np.ndarray): (n,) values sorted non-increasing
        - eigenvectors (np.ndarray): (n, n) orthonormal columns matching the
          eigenvalues, each with its largest-magnitude entry positive

    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError('expected a square matrix, got {}'.format(m.shape))
    asymmetry = np.max(np.abs(m - m.T)) if m.size else 0.0
    if asymmetry > _SYMMETRY_TOLERANCE:
        msg = 'matrix is not symmetric (max |m - m^T| = {:.3g})'.format(asymmetry)
        raise ContractError(msg)
    # eigh reads the lower triangle only, so symmetrize first
    eigenvalues, eigenvectors = np.linalg.eigh(0.5 * (m + m.T))
    order = np.argsort(-eigenvalues, kind='stable')
    eigenvalues = eigenvalues[order]
    eigenvectors = eigenvectors[:, order]
    # fix the sign of each eigenvector so results are reproducible
    pivots = np.argmax(np.abs(eigenvectors), axis=0)
    signs = np.sign(eigenvectors[pivots, np.arange(eigenvectors.shape[1])])
    signs[signs == 0] = 1.0
    return eigenvalues, eigenvectors * signs


def pseudo_inverse(m):
    """Return the symmetric pseudo-inverse of a positive semi-definite matrix."""
    eigenvalues, eigenvectors = symmetric_eig(m)
    largest = eigenvalues[0] if eigenvalues.size else 0.0
    keep = eigenvalues > _NULL_EIGENVALUE_RATIO * max(largest, 0.0)
    if largest <= 0:
        keep[:] = False
    inverse = np.zeros_like(eigenvalues)
    inverse[keep] = 1.0 / eigenvalues[keep]
    precision = (eigenvectors * inverse) @ eigenvectors.T
    return 0.5 * (precision + precision.T)


def fit_gaussian_stats(features, labels, regularization=DEFAULT_REGULARIZATION):
    """
    Fit class means and a shared covariance to labeled features.

    Args:
        features (np.ndarray): (O, Hid) training features
        labels (array-like): (O,) integer class ids
        regularization (float): ridge added to the covariance diagonal

    Returns (GaussianStats):
        the fitted class-conditional Gaussian statistics

    """
    features = as_matrix(features, 'features')
    labels = np.asarray(labels)
    if labels.shape != (features.shape[0],):
        msg = 'expected {} labels, got shape {}'.format(features.shape[0], labels.shape)
        raise ShapeError(msg)
    if regularization < 0:
        raise ContractError('regularization must be >= 0')
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size == 0:
        raise InsufficientDataError('no training features')
    if np.any(counts < 2):
        sparse = classes[counts < 2].tolist()
        raise InsufficientDataError('classes {} have fewer than 2 samples'.format(sparse))
    hidden = features.shape[1]
    means = np.empty((classes.size, hidden))
    scatter = np.zeros((hidden, hidden))
    for index, label in enumerate(classes):
        members = features[labels == label]
        means[index] = members.mean(axis=0)
        centered = members - means[index]
        scatter += centered.T @ centered
    covariance = scatter / features.shape[0] + regularization * np.eye(hidden)
    covariance = 0.5 * (covariance + covariance.T)
    return GaussianStats(
        classes=classes,
        class_means=means,
        shared_covariance=covariance,
        precision=pseudo_inverse(covariance),
    )


def mahalanobis_sq(x, mean, precision):
    """
    Return the squared Mahalanobis distance (x - mean)^T P (x - mean).

    Args:
        x (np.ndarray): a (Hid,) vector or a (n, Hid) batch of vectors
        mean (np.ndarray): the (Hid,) center
        precision (np.ndarray): the (Hid, Hid) precision matrix

    Returns (float or np.ndarray):
        the distance for a vector, or (n,) distances for a batch

    """
    x = np.asarray(x, dtype=np.float64)
    diff = np.atleast_2d(x) - np.asarray(mean, dtype=np.float64)
    if diff.shape[1] != precision.shape[0]:
        msg = 'dimension mismatch: {} vs {}'.format(diff.shape, precision.shape)
        raise ShapeError(msg)
    distances = np.maximum(np.einsum('ij,jk,ik->i', diff, precision, diff), 0.0)
    return float(distances[0]) if x.ndim == 1 else distances


def fit_pca(features, d):
    """
    Fit the top-d principal components of a feature matrix.

    Args:
        features (np.ndarray): (n, Hid) samples
        d (int): the number of components to keep

    Returns (PcaBasis):
        the mean, the (d, Hid) components and their variances

    """
    features = as_matrix(features, 'features')
    rows, hidden = features.shape
    if not 1 <= d <= min(rows, hidden):
        msg = 'd must be in [1, {}], got {}'.format(min(rows, hidden), d)
        raise ShapeError(msg)
    mean = features.mean(axis=0)
    centered = features - mean
    covariance = centered.T @ centered / rows
    eigenvalues, eigenvectors = symmetric_eig(covariance)
    return PcaBasis(
        mean=mean,
        components=np.ascontiguousarray(eigenvectors[:, :d].T),
        eigenvalues=eigenvalues[:d],
    )


def l2_normalize(features):
    """Return the rows scaled to unit L2 norm; zero rows stay zero."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    norms = np.linalg.norm(features, axis=1, keepdims=True)
    return np.divide(features, norms, out=np.zeros_like(features), where=norms > 0)


def pairwise_distances(queries, reference, metric='euclidean'):
    """
    Return the full (n_queries, n_reference) distance matrix.

    Cosine distance is 1 - cos(angle); a zero vector has cosine 0 to all rows.

    """
    if metric not in KNN_METRICS:
        raise ContractError('unknown metric {!r}'.format(metric))
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    reference = np.atleast_2d(np.asarray(reference, dtype=np.float64))
    if queries.shape[1] != reference.shape[1]:
        msg = 'dimension mismatch: {} vs {}'.format(queries.shape, reference.shape)
        raise ShapeError(msg)
    if metric == 'euclidean':
        return cdist(queries, reference, metric='euclidean')
    return 1.0 - l2_normalize(queries) @ l2_normalize(reference).T


def knn_search(queries, reference, k, metric='euclidean'):
    """
    Return the exact k nearest reference rows of every query.

    Args:
        queries (np.ndarray): (n, Hid) query rows
        reference (np.ndarray): (m, Hid) reference rows
        k (int): the number of neighbors, at most m
        metric (str): 'euclidean' or 'cosine'

    Returns (tuple):
        - distances (np.ndarray): (n, k) ascending distances
        - indices (np.ndarray): (n, k) reference rows, ties by lower index

    """
    reference = np.atleast_2d(reference)
    if not 1 <= k <= reference.shape[0]:
        msg = 'k must be in [1, {}], got {}'.format(reference.shape[0], k)
        raise ContractError(msg)
    distances = pairwise_distances(queries, reference, metric)
    indices = np.argsort(distances, axis=1, kind='stable')[:, :k]
    return np.take_along_axis(distances, indices, axis=1), indices


def knn_distances(queries, reference, k, metric='euclidean'):
    """Return the (n, k) ascending distances to the k nearest reference rows."""
    return knn_search(queries, reference, k, metric)[0]


# explicitly define the outward facing API of this module
__all__ = [
    GaussianStats.__name__,
    PcaBasis.__name__,
    as_matrix.__name__,
    matmul.__name__,
    softmax_rows.__name__,
    symmetric_eig.__name__,
    pseudo_inverse.__name__,
    fit_gaussian_stats.__name__,
    mahalanobis_sq.__name__,
    fit_pca.__name__,
    l2_normalize.__name__,
    pairwise_distances.__name__,
    knn_search.__name__,
    knn_distances.__name__,
]
