"""Test cases for the OOD scoring functions and their feature routing."""
from unittest import TestCase
import numpy as np
from numpy.testing import assert_allclose
from scipy.special import softmax
from ..ahm import AhmEnsemble
from ..errors import ConfigurationError
from ..errors import DegenerateSubspaceError
from ..linalg import GaussianStats
from ..linalg import fit_gaussian_stats
from ..linalg import fit_pca
from ..linalg import l2_normalize
from ..methods import ALL_METHODS
from ..model import AttentionHeadMask
from ..model import ModelParams
from ..model import init_params
from ..model import snapshot_pretrained
from ..model.embed import EmbeddingSet
from ..scorers import class_templates
from ..scorers import energy
from ..scorers import fit_normalizer
from ..scorers import fit_vim
from ..scorers import gnome_score
from ..scorers import grad_norm
from ..scorers import kl_matching
from ..scorers import knn_score
from ..scorers import mahalanobis_score
from ..scorers import max_logit
from ..scorers import msp
from ..scorers import neco_score
from ..scorers import residual_score
from ..scorers import vim_score
from ..scoring import FeatureExtractor
from ..scoring import default_pca_dim
from ..scoring import fit_contexts
from ..scoring import fit_scorer_context
from ..scoring import score_dataset
from .._registration import AHM_CLS
from .._registration import PLAIN_CLS
from .._registration import routes_for
from .._registration import scorer_entry
from .fixtures import clustered_documents
from .fixtures import tiny_config


def _identity_gaussian(means):
    """Return Gaussian statistics with identity covariance."""
    means = np.asarray(means, dtype=np.float64)
    eye = np.eye(means.shape[1])
    return GaussianStats(np.arange(len(means)), means, eye, eye)


class ShouldComputeMaximumSoftmaxProbability(TestCase):
    def test(self):
        self.assertAlmostEqual(1 / 3, msp([0.0, 0.0, 0.0]), places=15)
        self.assertAlmostEqual(1.0, msp([10.0, -10.0]), places=8)
        logits = np.random.default_rng(0).normal(size=5)
        oracle = max(np.exp(logits) / np.exp(logits).sum())
        self.assertAlmostEqual(oracle, msp(logits), delta=1e-12)
        batch = np.random.default_rng(1).normal(size=(4, 3))
        assert_allclose(softmax(batch, axis=1).max(axis=1), msp(batch), rtol=0, atol=1e-12)


class ShouldComputeMaxLogit(TestCase):
    def test(self):
        self.assertEqual(3.0, max_logit([1.0, 2.0, 3.0]))
        self.assertEqual(-2.5, max_logit([-2.5, -2.5]))
        logits = np.random.default_rng(2).normal(size=7)
        self.assertEqual(sorted(logits)[-1], max_logit(logits))


class ShouldComputeEnergyStably(TestCase):
    def test(self):
        self.assertAlmostEqual(np.log(2.0), energy([0.0, 0.0]), places=12)
        self.assertAlmostEqual(4.5, energy([4.5]), places=14)
        self.assertAlmostEqual(1000.0, energy([1000.0, 0.0]), places=9)
        logits = np.random.default_rng(3).normal(size=4)
        self.assertAlmostEqual(energy(logits) + 7.0, energy(logits + 7.0), delta=1e-12)
        oracle = 2.0 * np.log(np.exp(logits / 2.0).sum())
        self.assertAlmostEqual(oracle, energy(logits, temperature=2.0), delta=1e-12)


class ShouldBuildClassTemplates(TestCase):
    def test(self):
        rng = np.random.default_rng(4)
        logits = rng.normal(size=(6, 3))
        templates = class_templates(logits, np.array([0, 0, 1, 1, 0, 1]), 3)
        assert_allclose(np.ones(3), templates.sum(axis=1), rtol=0, atol=1e-10)
        assert_allclose(softmax(logits[[0, 1, 4]], axis=1).mean(axis=0), templates[0], atol=1e-12)
        assert_allclose(np.full(3, 1 / 3), templates[2])


class ShouldMatchKlTemplates(TestCase):
    def test(self):
        logits = np.array([1.0, 0.0, -1.0])
        templates = np.stack([softmax(logits), np.full(3, 1 / 3)])
        self.assertAlmostEqual(0.0, kl_matching(logits, templates), delta=1e-12)
        rng = np.random.default_rng(5)
        templates = softmax(rng.normal(size=(3, 3)), axis=1)
        for _ in range(20):
            logits = rng.normal(size=3) * 3
            p = softmax(logits)
            oracle = -min(sum(p[i] * np.log(p[i] / q[i]) for i in range(3)) for q in templates)
            score = kl_matching(logits, templates)
            self.assertAlmostEqual(oracle, score, delta=1e-10)
            self.assertLessEqual(score, 0.0)


class ShouldClampEmptyTemplateEntries(TestCase):
    def test(self):
        score = kl_matching([0.0, 0.0], [[1.0, 0.0]])
        self.assertTrue(np.isfinite(score))
        self.assertLess(score, -5.0)


class ShouldComputeGradNormInClosedForm(TestCase):
    def test(self):
        rng = np.random.default_rng(6)
        embedding = rng.normal(size=8)
        self.assertEqual(0.0, grad_norm(embedding, np.full(4, 2.5)))
        for _ in range(10):
            embedding, logits = rng.normal(size=8), rng.normal(size=4)
            gradient = np.outer(embedding, softmax(logits) - 0.25)
            self.assertAlmostEqual(np.abs(gradient).sum(), grad_norm(embedding, logits), delta=1e-12)
            self.assertAlmostEqual(2 * grad_norm(embedding, logits), grad_norm(2 * embedding, logits),
                                   delta=1e-12)
        peaked, flat = np.array([9.0, 0.0, 0.0, 0.0]), np.array([0.1, 0.0, 0.0, 0.0])
        self.assertGreater(grad_norm(embedding, peaked), grad_norm(embedding, flat))


class ShouldScoreMahalanobisToNearestMean(TestCase):
    def test(self):
        gaussian = _identity_gaussian([[0.0, 0.0], [10.0, 0.0]])
        self.assertAlmostEqual(-1.0, mahalanobis_score([1.0, 0.0], gaussian), places=12)
        self.assertEqual(0.0, mahalanobis_score([10.0, 0.0], gaussian))
        rng = np.random.default_rng(7)
        features = rng.normal(size=(30, 4))
        stats = fit_gaussian_stats(features, np.arange(30) % 3)
        query = rng.normal(size=4)
        oracle = max(-(query - mean) @ stats.precision @ (query - mean) for mean in stats.class_means)
        self.assertAlmostEqual(oracle, mahalanobis_score(query, stats), delta=1e-10)


class ShouldScoreKthNeighborDistance(TestCase):
    def test(self):
        rng = np.random.default_rng(8)
        reference = l2_normalize(rng.normal(size=(12, 5)))
        self.assertAlmostEqual(0.0, knn_score(reference[3] * 2.0, reference, 1), delta=1e-12)
        query = rng.normal(size=5)
        unit = query / np.linalg.norm(query)
        oracle = sorted(np.linalg.norm(unit - row) for row in reference)
        self.assertAlmostEqual(-oracle[-1], knn_score(query, reference, 12), delta=1e-12)
        self.assertAlmostEqual(-oracle[3], knn_score(query, reference, 4), delta=1e-12)
        self.assertAlmostEqual(knn_score(query, reference, 4), knn_score(5 * query, reference, 4),
                               delta=1e-12)


class ShouldRaiseErrorOnDegenerateVimSubspace(TestCase):
    def test(self):
        rng = np.random.default_rng(9)
        basis = rng.normal(size=(2, 6))
        features = rng.normal(size=(20, 2)) @ basis
        logits = rng.uniform(1.0, 2.0, size=(20, 3))
        self.assertRaises(DegenerateSubspaceError, fit_vim, features, logits, 2)
        full = rng.normal(size=(20, 6))
        self.assertRaises(DegenerateSubspaceError, fit_vim, full, logits, 6)
        self.assertRaises(DegenerateSubspaceError, fit_vim, full, -logits, 2)
        _, alpha = fit_vim(full, logits, 2)
        self.assertTrue(np.isfinite(alpha))
        self.assertGreater(alpha, 0.0)


class ShouldScoreVirtualLogit(TestCase):
    def test(self):
        rng = np.random.default_rng(10)
        features = rng.normal(size=(40, 6))
        logits = rng.uniform(0.5, 2.0, size=(40, 3))
        pca, alpha = fit_vim(features, logits, 2)
        inside = pca.mean + np.array([1.5, -0.5]) @ pca.components
        query_logits = rng.normal(size=3)
        self.assertAlmostEqual(energy(query_logits), vim_score(inside, query_logits, pca, alpha),
                               delta=1e-12)
        direction = rng.normal(size=6)
        direction -= pca.components.T @ (pca.components @ direction)
        scores = [vim_score(inside + t * direction, query_logits, pca, alpha) for t in (0.0, 1.0, 2.0)]
        self.assertTrue(scores[0] > scores[1] > scores[2])
        query = rng.normal(size=6)
        centered = query - pca.mean
        residual = np.linalg.norm(centered - pca.components.T @ (pca.components @ centered))
        oracle = np.log(np.exp(query_logits).sum()) - alpha * residual
        self.assertAlmostEqual(oracle, vim_score(query, query_logits, pca, alpha), delta=1e-10)


class ShouldScoreResidualNorm(TestCase):
    def test(self):
        rng = np.random.default_rng(11)
        pca = fit_pca(rng.normal(size=(30, 5)), 2)
        inside = pca.mean + np.array([0.3, 2.0]) @ pca.components
        self.assertAlmostEqual(0.0, residual_score(inside, pca), delta=1e-12)
        queries = rng.normal(size=(10, 5))
        scores = residual_score(queries, pca)
        self.assertTrue(np.all(scores <= 0.0))
        for query, score in zip(queries, scores):
            centered = query - pca.mean
            projected = sum((centered @ component) * component for component in pca.components)
            self.assertAlmostEqual(-np.linalg.norm(centered - projected), score, delta=1e-10)


class ShouldScoreNeco(TestCase):
    def test(self):
        rng = np.random.default_rng(12)
        pca = fit_pca(rng.normal(size=(30, 5)), 2)
        logits = np.array([0.5, 3.0, -1.0])
        inside = pca.mean + np.array([1.0, 1.0]) @ pca.components
        self.assertAlmostEqual(3.0, neco_score(inside, logits, pca), delta=1e-12)
        direction = rng.normal(size=5)
        direction -= pca.components.T @ (pca.components @ direction)
        self.assertAlmostEqual(0.0, neco_score(pca.mean + direction, logits, pca), delta=1e-12)
        self.assertEqual(0.0, neco_score(pca.mean, logits, pca))
        query = rng.normal(size=5)
        centered = query - pca.mean
        ratio = np.linalg.norm(pca.components @ centered) / np.linalg.norm(centered)
        self.assertAlmostEqual(ratio * 3.0, neco_score(query, logits, pca), delta=1e-10)


class ShouldCombineNormalizedMahalanobisScores(TestCase):
    def test(self):
        rng = np.random.default_rng(13)
        gaussian = _identity_gaussian(rng.normal(size=(3, 4)))
        other = fit_gaussian_stats(rng.normal(size=(12, 4)), np.arange(12) % 2)
        feature, snapshot = rng.normal(size=4), rng.normal(size=4)
        single = (mahalanobis_score(feature, gaussian) - 0.5) / 2.0
        self.assertAlmostEqual(2 * single, gnome_score(feature, feature, gaussian, gaussian,
                                                       ((0.5, 2.0), (0.5, 2.0))), delta=1e-12)
        oracle = single + (mahalanobis_score(snapshot, other) + 1.0) / 3.0
        score = gnome_score(feature, snapshot, gaussian, other, ((0.5, 2.0), (-1.0, 3.0)))
        self.assertAlmostEqual(oracle, score, delta=1e-10)
        self.assertEqual(0.0, gnome_score(gaussian.class_means[0], gaussian.class_means[1],
                                          gaussian, gaussian, ((0.0, 1.0), (0.0, 1.0))))


class ShouldSubstituteUnitStdForDegenerateNormalizer(TestCase):
    def test(self):
        with self.assertLogs('ahm_ood.scorers', level='WARNING'):
            self.assertEqual((-3.0, 1.0), fit_normalizer([-3.0, -3.0, -3.0]))
        mean, std = fit_normalizer([1.0, 3.0])
        self.assertEqual((2.0, 1.0), (mean, std))


class ShouldScoreBatchesLikeRows(TestCase):
    def test(self):
        rng = np.random.default_rng(14)
        logits = rng.normal(size=(5, 3))
        batch = energy(logits)
        self.assertEqual((5,), batch.shape)
        for row, value in zip(logits, batch):
            self.assertAlmostEqual(energy(row), value, delta=1e-14)


class ShouldRegisterEveryMethod(TestCase):
    def test(self):
        self.assertEqual(15, len(ALL_METHODS))
        for method in ALL_METHODS:
            self.assertEqual(method, scorer_entry(method).name)
        self.assertTrue(scorer_entry('knn_AHM').route.ahm)
        self.assertEqual('avg_avg', scorer_entry('mah_AvgAvg_AHM').route.pooling)
        self.assertRaises(ConfigurationError, scorer_entry, 'odin')
        routes = routes_for(['knn', 'Mahalanobis', 'knn_AHM'])
        self.assertEqual({'knn', 'gaussian'}, routes[PLAIN_CLS])
        self.assertEqual({'knn'}, routes[AHM_CLS])


class ShouldClampDefaultPcaDimension(TestCase):
    def test(self):
        self.assertEqual(3, default_pca_dim(3, 8))
        self.assertEqual(7, default_pca_dim(10, 8))
        self.assertEqual(1, default_pca_dim(0, 8))


class ShouldRouteAhmScoresThroughEnsemble(TestCase):
    def test(self):
        config = tiny_config()
        params = init_params(config, 15)
        train = clustered_documents(config, 4, seed=16, prefix='train')
        test = clustered_documents(config, 2, seed=17, prefix='test')
        ones = AttentionHeadMask.all_ones(config.num_layers, config.num_heads)
        extractor = FeatureExtractor(params, ensemble=AhmEnsemble((ones,), ()))
        methods = ['knn', 'knn_AHM', 'Mahalanobis', 'mah_AHM']
        contexts = fit_contexts(extractor, train, methods, knn_k=3)
        self.assertEqual({PLAIN_CLS, AHM_CLS}, set(contexts))
        for plain, masked in (('knn', 'knn_AHM'), ('Mahalanobis', 'mah_AHM')):
            a = score_dataset(plain, test, params, contexts, extractor=extractor, name='test')
            b = score_dataset(masked, test, params, contexts, extractor=extractor, name='test')
            self.assertEqual([document.doc_id for document in test], [score.doc_id for score in a])
            self.assertEqual([score.value for score in a], [score.value for score in b])
            self.assertEqual({masked}, {score.method for score in b})


class ShouldRaiseErrorOnAhmMethodWithoutEnsemble(TestCase):
    def test(self):
        config = tiny_config()
        params = init_params(config, 18)
        documents = clustered_documents(config, 2)
        extractor = FeatureExtractor(params)
        contexts = fit_contexts(extractor, documents, ['knn'], knn_k=2)
        self.assertRaises(ConfigurationError, score_dataset, 'knn_AHM', documents, params, contexts)
        self.assertRaises(ConfigurationError, fit_contexts, extractor, documents, ['mah_AHM'])
        self.assertRaises(ConfigurationError, fit_contexts, extractor, documents, ['mah_Gnome'])
        self.assertRaises(ConfigurationError, score_dataset, 'mah_AvgAvg', documents, params, contexts)
        self.assertRaises(ConfigurationError, score_dataset, 'odin', documents, params, contexts)


class ShouldScoreGnomeWithSnapshot(TestCase):
    def test(self):
        config = tiny_config()
        params = init_params(config, 19)
        snapshot = snapshot_pretrained(init_params(config, 20))
        train = clustered_documents(config, 4, seed=21)
        extractor = FeatureExtractor(params, snapshot)
        contexts = fit_contexts(extractor, train, ['mah_Gnome'])
        context = contexts[PLAIN_CLS]
        scores = score_dataset('mah_Gnome', train, params, context, extractor=extractor)
        values = np.array([score.value for score in scores])
        # both train score sets are z-normalized, so their sum averages to zero
        self.assertAlmostEqual(0.0, values.mean(), delta=1e-9)
        self.assertIsNotNone(context.pretrained_gaussian)


class ShouldAverageConstantStatesBeforeMahalanobis(TestCase):
    def test(self):
        config = tiny_config(num_layers=1)
        v = np.linspace(-1.0, 1.0, config.hidden)
        zeros = {name: np.zeros_like(value) for name, value in init_params(config, 22).items()}
        zeros['layers.0.b_ff2'] = v
        params = ModelParams(config, zeros)
        train = clustered_documents(config, 3, seed=23)
        contexts = fit_contexts(FeatureExtractor(params), train, ['mah_AvgAvg'])
        gaussian = next(iter(contexts.values())).gaussian
        scores = score_dataset('mah_AvgAvg', train[:4], params, contexts)
        for score in scores:
            self.assertAlmostEqual(mahalanobis_score(v, gaussian), score.value, delta=1e-12)


class ShouldFitSubspaceWithoutVirtualLogitScale(TestCase):
    def test(self):
        config = tiny_config()
        params = init_params(config, 24)
        rng = np.random.default_rng(25)
        # full-rank features whose max logits sum below zero
        train = EmbeddingSet(
            features=rng.normal(size=(40, config.hidden)),
            logits=rng.normal(size=(40, config.num_classes)) - 10.0,
            labels=np.arange(40) % config.num_classes,
            doc_ids=tuple('doc-{}'.format(index) for index in range(40)),
        )
        for method in ('residual', 'neco'):
            context = fit_scorer_context(train, params, needs=scorer_entry(method).needs)
            self.assertEqual(default_pca_dim(config.num_classes, config.hidden), context.pca.dim)
            self.assertIsNone(context.vim_alpha)
        self.assertRaises(DegenerateSubspaceError, fit_scorer_context, train, params,
                          needs=scorer_entry('vim').needs)
        needs = routes_for(['residual', 'vim'])[PLAIN_CLS]
        self.assertEqual({'pca', 'vim'}, needs)
