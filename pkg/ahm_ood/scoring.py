"""Fitting scorer statistics and routing documents to their features."""
from dataclasses import dataclass
import logging
import numpy as np
from ._registration import FeatureRoute
from ._registration import routes_for
from ._registration import scorer_entry
from .ahm import ensemble_embed
from .errors import ConfigurationError
from .linalg import DEFAULT_REGULARIZATION
from .linalg import fit_gaussian_stats
from .linalg import fit_pca
from .linalg import l2_normalize
from .model.embed import extract_embeddings
from .scorers import class_templates
from .scorers import fit_normalizer
from .scorers import fit_vim
from .scorers import mahalanobis_score


logger = logging.getLogger(__name__)


# the default number of neighbors of the knn scorer
DEFAULT_KNN_K = 10


@dataclass(frozen=True)
class ScorerContext:
    """Statistics fitted on training features for one feature route."""

    # class means and shared precision of the train features
    gaussian: object = None
    # (O, Hid) L2-normalized train features
    knn_reference: np.ndarray = None
    # the neighbor rank used by the knn scorer
    knn_k: int = DEFAULT_KNN_K
    # principal subspace of the train features (ViM, residual, NECO)
    pca: object = None
    # the virtual logit scale, > 0
    vim_alpha: float = None
    # (Hid, C) classifier weight and (C,) bias
    classifier_weight: np.ndarray = None
    classifier_bias: np.ndarray = None
    # (C, C) per-class mean softmax vectors of the train logits
    kl_templates: np.ndarray = None
    # the energy temperature
    temperature: float = 1.0
    # statistics of the pre-fine-tuning snapshot features
    pretrained_gaussian: object = None
    # ((mean, std) fine-tuned, (mean, std) snapshot) of train Mahalanobis scores
    gnome_normalizers: tuple = None


@dataclass(frozen=True)
class FeatureBundle:
    """The features of a dataset along one route."""

    embeddings: object
    # the snapshot model's cls_last embeddings, when a scorer needs them
    pretrained: object = None


@dataclass(frozen=True)
class OodScore:
    """The score of one document under one method (higher = more ID)."""

    method: str
    doc_id: str
    value: float


def default_pca_dim(num_classes, hidden):
    """Return num_classes clamped to [1, hidden - 1]."""
    return int(min(max(num_classes, 1), max(hidden - 1, 1)))


class FeatureExtractor:
    """Computes and memoizes the embeddings of datasets along feature routes."""

    def __init__(self, params, pretrained_params=None, ensemble=None, batch_size=64):
        """
        Initialize a new feature extractor.

        Args:
            params (ModelParams): the fine-tuned parameters
            pretrained_params (ModelParams): the pre-fine-tuning snapshot
            ensemble (AhmEnsemble): the masks for the AHM routes
            batch_size (int): the number of documents per forward pass

        """
        self.params = params
        self.pretrained_params = pretrained_params
        self.ensemble = ensemble
        self.batch_size = batch_size
        self._cache = {}

    def _memoized(self, key, compute):
        if key is None or key[0] is None:
            return compute()
        if key not in self._cache:
            self._cache[key] = compute()
        return self._cache[key]

    def embeddings(self, dataset, route, name=None):
        """
        Return the EmbeddingSet of a dataset along a route.

        Args:
            dataset (list): the DocumentInput objects
            route (FeatureRoute): the pooling and masking to apply
            name (str): a cache key for the dataset, None to skip caching

        """
        if route.ahm and self.ensemble is None:
            raise ConfigurationError('AHM features requested without an ensemble')

        def compute():
            if route.ahm:
                return ensemble_embed(self.params, dataset, self.ensemble,
                                      route.pooling, self.batch_size)
            return extract_embeddings(self.params, dataset, None, route.pooling, self.batch_size)

        return self._memoized((name, route), compute)

    def pretrained_embeddings(self, dataset, name=None):
        """Return the snapshot model's cls_last embeddings of a dataset."""
        if self.pretrained_params is None:
            raise ConfigurationError('mah_Gnome requires the pre-fine-tuning snapshot')

        def compute():
            return extract_embeddings(self.pretrained_params, dataset, None,
                                      'cls_last', self.batch_size)

        return self._memoized((name, 'pretrained'), compute)

    def bundle(self, dataset, route, needs_pretrained=False, name=None):
        """Return the FeatureBundle of a dataset along a route."""
        pretrained = self.pretrained_embeddings(dataset, name) if needs_pretrained else None
        return FeatureBundle(self.embeddings(dataset, route, name), pretrained)


def fit_scorer_context(train, params, needs=('gaussian', 'knn', 'vim', 'kl'),
                       pretrained_train=None, knn_k=DEFAULT_KNN_K, pca_dim=None,
                       regularization=DEFAULT_REGULARIZATION, temperature=1.0):
    """
    Fit the statistics the scorers of one feature route read.

    Args:
        train (EmbeddingSet): the train embeddings along the route
        params (ModelParams): the fine-tuned parameters (classifier head)
        needs (iterable): the statistics to fit, any of 'gaussian', 'knn',
            'pca', 'vim', 'kl', 'pretrained'; 'vim' fits the PCA basis and
            the virtual logit scale
        pretrained_train (EmbeddingSet): the snapshot's train embeddings
        knn_k (int): the neighbor rank of the knn scorer
        pca_dim (int): the principal subspace dimension, None for the default
        regularization (float): the covariance ridge
        temperature (float): the energy temperature

    Returns (ScorerContext):
        the fitted statistics; unneeded fields stay None

    """
    needs = set(needs)
    config = params.config
    fields = dict(
        knn_k=knn_k,
        classifier_weight=params['classifier_weight'],
        classifier_bias=params['classifier_bias'],
        temperature=temperature,
    )
    if 'gaussian' in needs or 'pretrained' in needs:
        fields['gaussian'] = fit_gaussian_stats(train.features, train.labels, regularization)
    if 'knn' in needs:
        fields['knn_reference'] = l2_normalize(train.features)
    if 'kl' in needs:
        fields['kl_templates'] = class_templates(train.logits, train.labels, config.num_classes)
    if 'pca' in needs or 'vim' in needs:
        dim = pca_dim or default_pca_dim(config.num_classes, config.hidden)
        if 'vim' in needs:
            fields['pca'], fields['vim_alpha'] = fit_vim(train.features, train.logits, dim)
        else:
            fields['pca'] = fit_pca(train.features, dim)
    if 'pretrained' in needs:
        if pretrained_train is None:
            raise ConfigurationError('mah_Gnome requires snapshot train embeddings')
        pretrained = fit_gaussian_stats(pretrained_train.features, pretrained_train.labels, regularization)
        fields['pretrained_gaussian'] = pretrained
        fields['gnome_normalizers'] = (
            fit_normalizer(mahalanobis_score(train.features, fields['gaussian'])),
            fit_normalizer(mahalanobis_score(pretrained_train.features, pretrained)),
        )
    return ScorerContext(**fields)


def fit_contexts(extractor, train_set, methods, knn_k=DEFAULT_KNN_K, pca_dim=None,
                 regularization=DEFAULT_REGULARIZATION, train_name='train'):
    """
    Fit one ScorerContext per feature route the methods use.

    AHM routes are fitted on the ensembled train embeddings so the
    statistics live in the same geometry as the scored features.

    Returns (dict):
        a mapping of FeatureRoute to ScorerContext

    """
    contexts = {}
    for route, needs in routes_for(methods).items():
        train = extractor.embeddings(train_set, route, train_name)
        pretrained = None
        if 'pretrained' in needs:
            pretrained = extractor.pretrained_embeddings(train_set, train_name)
        contexts[route] = fit_scorer_context(
            train, extractor.params, needs, pretrained, knn_k, pca_dim, regularization)
        logger.debug('fitted %s statistics for %s', sorted(needs), route)
    return contexts


def score_dataset(method, dataset, params, context, ensemble=None, pretrained_params=None,
                  extractor=None, name=None):
    """
    Score every document of a dataset with one method.

    Args:
        method (str): the registered method name
        dataset (list): the DocumentInput objects
        params (ModelParams): the fine-tuned parameters
        context (ScorerContext or dict): the fitted statistics, or a mapping
            of FeatureRoute to statistics
        ensemble (AhmEnsemble): required by the *_AHM methods
        pretrained_params (ModelParams): required by mah_Gnome
        extractor (FeatureExtractor): a shared extractor to reuse features
        name (str): a cache key for the dataset within the extractor

    Returns (list):
        one OodScore per document, in dataset order

    """
    entry = scorer_entry(method)
    if extractor is None:
        extractor = FeatureExtractor(params, pretrained_params, ensemble)
    if entry.route.ahm and extractor.ensemble is None:
        raise ConfigurationError('{} requires an AHM ensemble'.format(method))
    if isinstance(context, dict):
        if entry.route not in context:
            raise ConfigurationError('no statistics fitted for {} ({})'.format(method, entry.route))
        context = context[entry.route]
    bundle = extractor.bundle(dataset, entry.route, 'pretrained' in entry.needs, name)
    values = np.atleast_1d(entry.function(bundle, context))
    return [
        OodScore(method, doc_id, float(value))
        for doc_id, value in zip(bundle.embeddings.doc_ids, values)
    ]


# explicitly define the outward facing API of this module
__all__ = [
    ScorerContext.__name__,
    FeatureBundle.__name__,
    FeatureRoute.__name__,
    OodScore.__name__,
    FeatureExtractor.__name__,
    default_pca_dim.__name__,
    fit_scorer_context.__name__,
    fit_contexts.__name__,
    score_dataset.__name__,
]
