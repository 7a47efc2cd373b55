"""Registration of the OOD scorers and the features each one consumes."""
from collections import OrderedDict
from dataclasses import dataclass
from .errors import ConfigurationError
from .methods import ALL_METHODS
from . import scorers


@dataclass(frozen=True)
class FeatureRoute:
    """Which embeddings a scorer reads."""

    # 'cls_last' or 'avg_avg'
    pooling: str = 'cls_last'
    # whether the embeddings come from the masked ensemble
    ahm: bool = False


# the plain fine-tuned final-layer CLS features
PLAIN_CLS = FeatureRoute('cls_last', False)
# the plain fine-tuned all-layer average features
PLAIN_AVG = FeatureRoute('avg_avg', False)
# the ensembled final-layer CLS features
AHM_CLS = FeatureRoute('cls_last', True)
# the ensembled all-layer average features
AHM_AVG = FeatureRoute('avg_avg', True)


@dataclass(frozen=True)
class ScorerEntry:
    """A registered scorer."""

    name: str
    route: FeatureRoute
    # the ScorerContext statistics the scorer reads
    needs: frozenset
    # callable(bundle, context) -> (n,) scores
    function: object


# the registry of scorers keyed by method name
_SCORERS = OrderedDict()


def _register_scorer(name, route, needs, function):
    """
    Register a scorer under a method name.

    Args:
        name (str): the method name used in configs and reports
        route (FeatureRoute): the embeddings the scorer reads
        needs (iterable): the fitted statistics the scorer reads, any of
            'gaussian', 'knn', 'pca', 'vim', 'kl', 'pretrained'
        function (callable): maps (FeatureBundle, ScorerContext) to scores

    Returns:
        None

    """
    _SCORERS[name] = ScorerEntry(name, route, frozenset(needs), function)


def _mahalanobis(bundle, context):
    return scorers.mahalanobis_score(bundle.embeddings.features, context.gaussian)


def _knn(bundle, context):
    return scorers.knn_score(bundle.embeddings.features, context.knn_reference, context.knn_k)


_register_scorer('energy', PLAIN_CLS, (), lambda bundle, context: scorers.energy(
    bundle.embeddings.logits, context.temperature))
_register_scorer('gradNorm', PLAIN_CLS, (), lambda bundle, context: scorers.grad_norm(
    bundle.embeddings.features, bundle.embeddings.logits))
_register_scorer('kl', PLAIN_CLS, ('kl',), lambda bundle, context: scorers.kl_matching(
    bundle.embeddings.logits, context.kl_templates))
_register_scorer('knn', PLAIN_CLS, ('knn',), _knn)
_register_scorer('Mahalanobis', PLAIN_CLS, ('gaussian',), _mahalanobis)
_register_scorer('mah_AvgAvg', PLAIN_AVG, ('gaussian',), _mahalanobis)
_register_scorer('mah_Gnome', PLAIN_CLS, ('gaussian', 'pretrained'), lambda bundle, context: scorers.gnome_score(
    bundle.embeddings.features, bundle.pretrained.features,
    context.gaussian, context.pretrained_gaussian, context.gnome_normalizers))
_register_scorer('maxLogit', PLAIN_CLS, (), lambda bundle, context: scorers.max_logit(
    bundle.embeddings.logits))
_register_scorer('msp', PLAIN_CLS, (), lambda bundle, context: scorers.msp(
    bundle.embeddings.logits))
_register_scorer('neco', PLAIN_CLS, ('pca',), lambda bundle, context: scorers.neco_score(
    bundle.embeddings.features, bundle.embeddings.logits, context.pca))
_register_scorer('residual', PLAIN_CLS, ('pca',), lambda bundle, context: scorers.residual_score(
    bundle.embeddings.features, context.pca))
_register_scorer('vim', PLAIN_CLS, ('vim',), lambda bundle, context: scorers.vim_score(
    bundle.embeddings.features, bundle.embeddings.logits, context.pca, context.vim_alpha))
_register_scorer('knn_AHM', AHM_CLS, ('knn',), _knn)
_register_scorer('mah_AHM', AHM_CLS, ('gaussian',), _mahalanobis)
_register_scorer('mah_AvgAvg_AHM', AHM_AVG, ('gaussian',), _mahalanobis)


# the registry and the published method list must agree
assert list(_SCORERS) == ALL_METHODS


def scorer_entry(name):
    """Return the registered scorer for a method name."""
    try:
        return _SCORERS[name]
    except KeyError:
        raise ConfigurationError('unknown scorer {!r}; expected one of {}'.format(name, ALL_METHODS))


def routes_for(methods):
    """Return the routes used by methods and the statistics each route needs."""
    needs = OrderedDict()
    for name in methods:
        entry = scorer_entry(name)
        needs.setdefault(entry.route, set()).update(entry.needs)
    return needs


# explicitly define the outward facing API of this module
__all__ = [
    FeatureRoute.__name__,
    ScorerEntry.__name__,
    scorer_entry.__name__,
    routes_for.__name__,
]
