"""Test cases for the detection metrics and run aggregation."""
from unittest import TestCase
import numpy as np
from ..errors import ContractError
from ..metrics import BinaryScoreSet
from ..metrics import aggregate_runs
from ..metrics import auroc
from ..metrics import auroc_pairs
from ..metrics import auroc_rank
from ..metrics import fpr_at_tpr
from ..metrics import mean_std
from ..metrics import silhouette


def _sweep_fpr(id_scores, ood_scores, tpr_target):
    """Return the FPR at the largest candidate threshold meeting the TPR."""
    best = None
    for threshold in sorted(set(id_scores) | set(ood_scores)):
        tpr = np.mean(np.asarray(id_scores) >= threshold)
        if tpr >= tpr_target:
            best = threshold
    return np.mean(np.asarray(ood_scores) >= best)


def _silhouette_oracle(features, labels):
    """Return the mean silhouette coefficient by its definition."""
    values = []
    for i, (x, label) in enumerate(zip(features, labels)):
        same = [np.linalg.norm(x - y) for j, (y, other) in enumerate(zip(features, labels))
                if other == label and j != i]
        if not same:
            values.append(0.0)
            continue
        a = np.mean(same)
        b = min(
            np.mean([np.linalg.norm(x - y) for y, other in zip(features, labels) if other == cluster])
            for cluster in set(labels) if cluster != label
        )
        values.append(0.0 if max(a, b) == 0 else (b - a) / max(a, b))
    return np.mean(values)


class ShouldValidateBinaryScoreSet(TestCase):
    def test(self):
        self.assertRaises(ContractError, BinaryScoreSet, [], [1.0])
        self.assertRaises(ContractError, BinaryScoreSet, [1.0], [])
        self.assertRaises(ContractError, BinaryScoreSet, [np.nan], [1.0])
        self.assertRaises(ContractError, BinaryScoreSet, [1.0], [np.inf])
        scores = BinaryScoreSet.from_scores([0.1, 0.9, 0.4], [True, False, True])
        self.assertEqual([0.9], scores.id_scores.tolist())
        self.assertEqual([0.1, 0.4], scores.ood_scores.tolist())
        self.assertRaises(TypeError, auroc, ([1.0], [0.0]))


class ShouldComputeAurocByPairCount(TestCase):
    def test(self):
        self.assertEqual(1.0, auroc(BinaryScoreSet([2.0, 3.0], [0.0, 1.0])))
        self.assertEqual(0.5, auroc(BinaryScoreSet([1.0, 2.0, 2.0], [2.0, 1.0, 2.0])))
        self.assertEqual(0.25, auroc(BinaryScoreSet([1.0, 3.0], [2.0, 4.0])))
        self.assertEqual(0.0, auroc(BinaryScoreSet([0.0], [1.0])))


class ShouldAgreeBetweenAurocImplementations(TestCase):
    def test(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n_id, n_ood = rng.integers(1, 250, size=2)
            # coarse rounding forces ties
            scores = BinaryScoreSet(np.round(rng.normal(0.5, 1.0, n_id), 1),
                                    np.round(rng.normal(0.0, 1.0, n_ood), 1))
            exact = auroc_pairs(scores)
            self.assertAlmostEqual(exact, auroc_rank(scores), delta=1e-12)
            self.assertAlmostEqual(1.0, exact + auroc(scores.swapped()), delta=1e-12)
            self.assertTrue(0.0 <= exact <= 1.0)


class ShouldBeInvariantToIncreasingTransforms(TestCase):
    def test(self):
        rng = np.random.default_rng(1)
        id_scores, ood_scores = rng.normal(1.0, 1.0, 40), rng.normal(0.0, 1.0, 30)
        base = auroc(BinaryScoreSet(id_scores, ood_scores))
        transformed = auroc(BinaryScoreSet(np.exp(id_scores) * 3 + 1, np.exp(ood_scores) * 3 + 1))
        self.assertEqual(base, transformed)
        self.assertEqual(base, auroc(BinaryScoreSet(id_scores ** 3, ood_scores ** 3)))


class ShouldComputeFprAtTpr(TestCase):
    def test(self):
        self.assertEqual(0.0, fpr_at_tpr(BinaryScoreSet([5.0, 6.0, 7.0], [1.0, 2.0])))
        self.assertEqual(1.0, fpr_at_tpr(BinaryScoreSet([5.0, 6.0, 7.0], [7.0, 9.0])))
        # 20 ID scores: 95% TPR admits the 19 largest
        id_scores = np.arange(20.0)
        self.assertEqual(0.5, fpr_at_tpr(BinaryScoreSet(id_scores, [0.5, 1.0])))
        self.assertEqual(1.0, fpr_at_tpr(BinaryScoreSet(id_scores, [0.5, 1.0]), 1.0))
        self.assertRaises(ContractError, fpr_at_tpr, BinaryScoreSet([1.0], [0.0]), 0.0)
        self.assertRaises(ContractError, fpr_at_tpr, BinaryScoreSet([1.0], [0.0]), 1.5)


class ShouldMatchThresholdSweepOracle(TestCase):
    def test(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            id_scores = np.round(rng.normal(1.0, 1.0, 20), 1)
            ood_scores = np.round(rng.normal(0.0, 1.0, 20), 1)
            scores = BinaryScoreSet(id_scores, ood_scores)
            for target in (0.5, 0.8, 0.95, 1.0):
                self.assertEqual(_sweep_fpr(id_scores, ood_scores, target), fpr_at_tpr(scores, target))


class ShouldRaiseFprWithTprTarget(TestCase):
    def test(self):
        rng = np.random.default_rng(3)
        scores = BinaryScoreSet(rng.normal(1.0, 1.0, 60), rng.normal(0.0, 1.0, 45))
        rates = [fpr_at_tpr(scores, target) for target in np.linspace(0.05, 1.0, 20)]
        self.assertEqual(sorted(rates), rates)


class ShouldComputeSilhouetteOfSeparatedClusters(TestCase):
    def test(self):
        features = np.array([[0.0, 0.0]] * 3 + [[5.0, 5.0]] * 3)
        self.assertEqual(1.0, silhouette(features, [0, 0, 0, 1, 1, 1]))
        self.assertEqual(0.0, silhouette(np.zeros((4, 2)), [0, 0, 1, 1]))
        self.assertEqual(0.0, silhouette(np.eye(3), [0, 1, 2]))


class ShouldMatchSilhouetteDoubleLoopOracle(TestCase):
    def test(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            features = rng.normal(size=(12, 3))
            labels = np.arange(12) % 3
            rng.shuffle(labels)
            value = silhouette(features, labels)
            self.assertAlmostEqual(_silhouette_oracle(features, labels), value, delta=1e-10)
            self.assertTrue(-1.0 <= value <= 1.0)
            renamed = np.array([7, 3, 5])[labels]
            self.assertAlmostEqual(value, silhouette(features, renamed), delta=1e-12)


class ShouldScoreSingletonClusterMembersAsZero(TestCase):
    def test(self):
        features = np.array([[0.0], [0.1], [4.0]])
        labels = [0, 0, 1]
        self.assertAlmostEqual(_silhouette_oracle(features, labels), silhouette(features, labels),
                               delta=1e-12)


class ShouldRaiseErrorOnSingleCluster(TestCase):
    def test(self):
        self.assertRaises(ContractError, silhouette, np.ones((3, 2)), [1, 1, 1])
        self.assertRaises(ContractError, silhouette, np.ones((3, 2)), [0, 1])


class ShouldAggregateRuns(TestCase):
    def test(self):
        summary = aggregate_runs([0.9], [0.2])
        self.assertEqual((0.9, 0.0, 0.2, 0.0, 1), (summary.auroc_mean, summary.auroc_std,
                                                    summary.fpr_mean, summary.fpr_std, summary.n_runs))
        summary = aggregate_runs([0.8, 1.0], [0.0, 0.5])
        self.assertAlmostEqual(0.9, summary.auroc_mean, places=12)
        self.assertAlmostEqual(0.1, summary.auroc_std, places=12)
        self.assertAlmostEqual(0.25, summary.fpr_std, places=12)
        values = np.random.default_rng(5).uniform(size=5)
        mean = sum(values) / 5
        std = np.sqrt(sum((value - mean) ** 2 for value in values) / 5)
        self.assertAlmostEqual(mean, mean_std(values)[0], delta=1e-12)
        self.assertAlmostEqual(std, mean_std(values)[1], delta=1e-12)
        self.assertRaises(ContractError, aggregate_runs, [], [])
        self.assertRaises(ContractError, aggregate_runs, [0.5], [0.1, 0.2])
