"""Test cases for fine-tuning and parameter snapshots."""
from unittest import TestCase
import numpy as np
from numpy.testing import assert_array_equal
from ..errors import ConfigurationError
from ..errors import ContractError
from ..errors import TrainingFailureError
from ..model import TrainConfig
from ..model import extract_embeddings
from ..model import fine_tune
from ..model import init_params
from ..model import snapshot_pretrained
from ..model.train import clip_grad_norm
from .fixtures import clustered_documents
from .fixtures import tiny_config


class ShouldValidateTrainConfig(TestCase):
    def test(self):
        self.assertRaises(ConfigurationError, TrainConfig, epochs=0)
        self.assertRaises(ConfigurationError, TrainConfig, learning_rate=-1.0)
        self.assertRaises(ConfigurationError, TrainConfig, adam_beta1=1.0)
        self.assertRaises(ConfigurationError, TrainConfig, max_grad_norm=0.0)


class ShouldClipGlobalGradientNorm(TestCase):
    def test(self):
        grads = {'a': np.array([3.0]), 'b': np.array([4.0])}
        self.assertAlmostEqual(5.0, clip_grad_norm(grads, 1.0))
        total = np.sqrt(grads['a'][0] ** 2 + grads['b'][0] ** 2)
        self.assertAlmostEqual(1.0, total, places=9)
        small = {'a': np.array([0.1])}
        clip_grad_norm(small, 1.0)
        self.assertEqual(0.1, small['a'][0])


class ShouldLeaveParamsUnchangedAtZeroLearningRate(TestCase):
    def test(self):
        config = tiny_config()
        params = init_params(config, 0)
        documents = clustered_documents(config, 4)
        tuned, checkpoints = fine_tune(params, documents, TrainConfig(epochs=3, learning_rate=0.0, batch_size=4))
        self.assertEqual(params, tuned)
        self.assertEqual(3, len(checkpoints))
        for checkpoint in checkpoints:
            self.assertEqual(params, checkpoint.params)


class ShouldFineTuneDeterministically(TestCase):
    def test(self):
        config = tiny_config()
        params = init_params(config, 1)
        documents = clustered_documents(config, 4, seed=2)
        settings = TrainConfig(epochs=3, batch_size=5, seed=3, grad_accumulation_steps=2, weight_decay=0.01)
        first_params, first = fine_tune(params, documents, settings, documents)
        second_params, second = fine_tune(params, documents, settings, documents)
        self.assertEqual(first_params, second_params)
        self.assertEqual([c.summary() for c in first], [c.summary() for c in second])
        for a, b in zip(first, second):
            self.assertEqual(a.params, b.params)


class ShouldSeparateSeparableClasses(TestCase):
    def test(self):
        config = tiny_config(num_classes=2)
        documents = clustered_documents(config, 10, seed=4, separation=4.0)
        settings = TrainConfig(epochs=50, learning_rate=1e-2, batch_size=8, seed=5)
        _, checkpoints = fine_tune(init_params(config, 6), documents, settings, documents)
        self.assertGreaterEqual(checkpoints[-1].train_accuracy, 0.99)
        self.assertLess(checkpoints[-1].train_loss, checkpoints[0].train_loss)


class ShouldRecordCheckpointsFromEvalDelay(TestCase):
    def test(self):
        config = tiny_config()
        documents = clustered_documents(config, 3)
        settings = TrainConfig(epochs=4, batch_size=4, eval_delay=3)
        _, checkpoints = fine_tune(init_params(config, 7), documents, settings, documents)
        self.assertEqual([3, 4], [checkpoint.epoch for checkpoint in checkpoints])


class ShouldRaiseErrorOnDivergence(TestCase):
    def test(self):
        config = tiny_config()
        documents = clustered_documents(config, 4)
        settings = TrainConfig(epochs=3, learning_rate=1e300, batch_size=2, max_grad_norm=1e300)
        with self.assertRaises(TrainingFailureError) as context:
            fine_tune(init_params(config, 8), documents, settings)
        self.assertGreaterEqual(context.exception.epoch, 1)


class ShouldRaiseErrorOnUnlabeledTrainingDocument(TestCase):
    def test(self):
        config = tiny_config()
        documents = clustered_documents(config, 2)
        documents[0] = documents[0].with_label(None)
        self.assertRaises(ContractError, fine_tune, init_params(config, 0), documents, TrainConfig(epochs=1))
        self.assertRaises(ContractError, fine_tune, init_params(config, 0), [], TrainConfig(epochs=1))


class ShouldKeepSnapshotFrozen(TestCase):
    def test(self):
        config = tiny_config()
        params = init_params(config, 9)
        snapshot = snapshot_pretrained(params)
        self.assertEqual(snapshot, snapshot_pretrained(snapshot))
        documents = clustered_documents(config, 4, seed=10)
        tuned, _ = fine_tune(params, documents, TrainConfig(epochs=2, learning_rate=1e-2, batch_size=4))
        self.assertEqual(params, snapshot)
        before = extract_embeddings(snapshot, documents).features
        after = extract_embeddings(tuned, documents).features
        self.assertFalse(np.allclose(before, after))
        with self.assertRaises(ValueError):
            snapshot['cls_embedding'][0] = 1.0
        assert_array_equal(params['cls_embedding'], snapshot['cls_embedding'])
