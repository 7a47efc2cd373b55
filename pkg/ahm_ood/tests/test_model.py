"""Test cases for the masked encoder forward and backward passes."""
import os
import tempfile
from unittest import TestCase
import numpy as np
from numpy.testing import assert_allclose
from numpy.testing import assert_array_equal
from scipy.special import softmax
from ..errors import ConfigurationError
from ..errors import ContractError
from ..errors import ShapeError
from ..model import AttentionHeadMask
from ..model import DocumentInput
from ..model import ModelConfig
from ..model import ModelParams
from ..model import backward
from ..model import backward_batch
from ..model import extract_embeddings
from ..model import forward
from ..model import forward_batch
from ..model import init_params
from ..model import load_params
from ..model import save_params
from ..model.backward import cross_entropy
from ..model.forward import LAYER_NORM_EPS
from ..model.forward import gelu
from .fixtures import random_documents
from .fixtures import tiny_config


def _with(params, **changes):
    """Return parameters with some tensors replaced."""
    tensors = params.to_dict()
    tensors.update(changes)
    return ModelParams(params.config, tensors)


class ShouldValidateModelConfig(TestCase):
    def test(self):
        self.assertRaises(ConfigurationError, ModelConfig, hidden=10, num_heads=4)
        self.assertRaises(ConfigurationError, ModelConfig, num_layers=0)
        self.assertRaises(TypeError, ModelConfig, hidden=8.0)
        self.assertEqual(16, ModelConfig(hidden=64, num_heads=4).head_dim)


class ShouldValidateAttentionHeadMask(TestCase):
    def test(self):
        self.assertRaises(ContractError, AttentionHeadMask, [[1, 0.5]])
        self.assertRaises(ShapeError, AttentionHeadMask, [1, 0])
        mask = AttentionHeadMask.all_ones(3, 4)
        self.assertTrue(mask.is_identity)
        self.assertTrue(np.all(mask.values == 1))
        self.assertEqual(mask, AttentionHeadMask.from_bitmap(mask.to_bitmap()))
        self.assertEqual([1, 0], AttentionHeadMask([[1, 0, 1], [1, 1, 1]]).zeros_per_layer().tolist())


class ShouldMatchAllOnesMaskBitForBit(TestCase):
    def test(self):
        config = tiny_config()
        params = init_params(config, 0)
        ones = AttentionHeadMask.all_ones(config.num_layers, config.num_heads)
        documents = random_documents(config, 100, seed=1)
        for start in range(0, 100, 25):
            batch = documents[start:start + 25]
            plain = forward_batch(params, batch)
            masked = forward_batch(params, batch, ones)
            assert_array_equal(plain.logits, masked.logits)
            for a, b in zip(plain.layer_states, masked.layer_states):
                assert_array_equal(a, b)


class ShouldZeroFullyMaskedLayer(TestCase):
    def test(self):
        config = tiny_config()
        params = init_params(config, 2)
        mask = AttentionHeadMask([[0, 0], [1, 1]])
        trace = forward_batch(params, random_documents(config, 4, seed=3), mask)
        assert_array_equal(np.zeros_like(trace.attention_contexts[0]), trace.attention_contexts[0])
        self.assertTrue(np.any(trace.attention_contexts[1] != 0))
        # the residual stream still carries the embedded inputs
        self.assertTrue(np.any(trace.layer_states[0] != 0))


class ShouldZeroMaskedHeadSlice(TestCase):
    def test(self):
        config = tiny_config(num_heads=4, hidden=8)
        params = init_params(config, 4)
        mask = AttentionHeadMask([[1, 0, 1, 1], [1, 1, 1, 0]])
        trace = forward_batch(params, random_documents(config, 5, seed=5), mask)
        width = config.head_dim
        assert_array_equal(0.0, trace.attention_contexts[0][..., width:2 * width])
        assert_array_equal(0.0, trace.attention_contexts[1][..., 3 * width:])
        self.assertTrue(np.any(trace.attention_contexts[0][..., :width] != 0))


class ShouldMatchHandUnrolledSingleHead(TestCase):
    def test(self):
        config = tiny_config(num_layers=1, num_heads=1, hidden=2, ffn_width=3, text_vocab=3, num_classes=2)
        params = init_params(config, 6)
        document = DocumentInput([2], np.zeros((0, config.num_patch_features)), 0, 'pair')
        trace = forward(params, document)
        x = np.stack([
            params['cls_embedding'] + params['position_embedding'][0],
            params['token_embedding'][2] + params['position_embedding'][1],
        ])

        def norm(rows, scale, offset):
            out = np.zeros_like(rows)
            for i, row in enumerate(rows):
                mean = sum(row) / len(row)
                var = sum((value - mean) ** 2 for value in row) / len(row)
                out[i] = [(value - mean) / np.sqrt(var + LAYER_NORM_EPS) for value in row]
            return out * scale + offset

        layer = 'layers.0.{}'
        h = norm(x, params[layer.format('ln1_scale')], params[layer.format('ln1_offset')])
        q = h @ params[layer.format('w_q')]
        k = h @ params[layer.format('w_k')]
        v = h @ params[layer.format('w_v')]
        context = np.zeros((2, 2))
        for i in range(2):
            scores = [q[i] @ k[j] / np.sqrt(2.0) for j in range(2)]
            weights = np.exp(np.array(scores) - max(scores))
            weights = weights / weights.sum()
            context[i] = weights[0] * v[0] + weights[1] * v[1]
        assert_allclose(context, trace.attention_contexts[0], rtol=0, atol=1e-10)
        x1 = x + context @ params[layer.format('w_o')]
        h2 = norm(x1, params[layer.format('ln2_scale')], params[layer.format('ln2_offset')])
        hidden = gelu(h2 @ params[layer.format('w_ff1')] + params[layer.format('b_ff1')])
        out = x1 + hidden @ params[layer.format('w_ff2')] + params[layer.format('b_ff2')]
        assert_allclose(out, trace.layer_states[0], rtol=0, atol=1e-10)
        logits = out[0] @ params['classifier_weight'] + params['classifier_bias']
        assert_allclose(logits, trace.logits, rtol=0, atol=1e-10)
        assert_allclose(out[0], trace.pooled, rtol=0, atol=1e-12)


class ShouldNotLeakPaddingAcrossBatch(TestCase):
    def test(self):
        config = tiny_config()
        params = init_params(config, 7)
        documents = random_documents(config, 6, seed=8)
        batch = forward_batch(params, documents)
        for row, document in enumerate(documents):
            single = forward(params, document)
            assert_allclose(single.logits, batch.logits[row], rtol=0, atol=1e-12)
            assert_allclose(single.avg_avg, batch.avg_avg()[row], rtol=0, atol=1e-12)


class ShouldBeEquivariantToPatchPermutation(TestCase):
    def test(self):
        config = tiny_config(max_seq_len=8)
        params = init_params(config, 9)
        rng = np.random.default_rng(10)
        patches = rng.normal(size=(3, config.num_patch_features))
        document = DocumentInput([1, 4], patches, 0, 'a')
        swapped = DocumentInput([1, 4], patches[[0, 2, 1]], 0, 'b')
        # patches occupy positions 3, 4 and 5; swap the rows of positions 4 and 5
        positions = params.to_dict()['position_embedding']
        positions[[4, 5]] = positions[[5, 4]]
        moved = _with(params, position_embedding=positions)
        assert_allclose(forward(params, document).logits, forward(moved, swapped).logits, rtol=0, atol=1e-10)


class ShouldRaiseErrorOnLongDocument(TestCase):
    def test(self):
        config = tiny_config(max_seq_len=4)
        params = init_params(config, 0)
        document = DocumentInput([0, 1, 2], np.zeros((1, config.num_patch_features)), 0, 'long')
        self.assertRaises(ContractError, forward, params, document)


class ShouldRaiseErrorOnMaskShapeMismatch(TestCase):
    def test(self):
        config = tiny_config()
        params = init_params(config, 0)
        document = random_documents(config, 1)[0]
        self.assertRaises(ShapeError, forward, params, document, AttentionHeadMask.all_ones(3, 2))


class ShouldMatchFiniteDifferenceGradients(TestCase):
    def _check(self, config, seed):
        params = init_params(config, seed)
        # larger weights so every path carries a measurable gradient
        tensors = {name: value * 3.0 if name.endswith(('w_q', 'w_k')) else value
                   for name, value in params.items()}
        params = ModelParams(config, tensors)
        documents = random_documents(config, 3, seed=seed + 100)
        targets = [document.label for document in documents]
        _, grads, _ = backward_batch(params, documents, targets)
        rng = np.random.default_rng(seed)
        epsilon = 1e-4
        for name, value in params.items():
            for _ in range(5):
                index = tuple(int(rng.integers(0, size)) for size in value.shape)
                plus, minus = params.to_dict(), params.to_dict()
                plus[name][index] += epsilon
                minus[name][index] -= epsilon
                loss_plus = cross_entropy(forward_batch(ModelParams(config, plus), documents).logits, targets)
                loss_minus = cross_entropy(forward_batch(ModelParams(config, minus), documents).logits, targets)
                numeric = (loss_plus - loss_minus) / (2 * epsilon)
                analytic = grads[name][index]
                error = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-3)
                self.assertLess(error, 1e-4, '{}{}: {} vs {}'.format(name, index, analytic, numeric))

    def test(self):
        self._check(tiny_config(num_layers=1, num_heads=1, hidden=4, max_seq_len=4), 11)
        self._check(tiny_config(num_layers=2, num_heads=2, hidden=8, max_seq_len=4), 12)
        self._check(tiny_config(num_layers=2, num_heads=1, hidden=6, ffn_width=4, max_seq_len=4), 13)


class ShouldComputeClassifierBiasGradientInClosedForm(TestCase):
    def test(self):
        config = tiny_config()
        params = init_params(config, 14)
        document = random_documents(config, 1, seed=15)[0]
        grads = backward(params, document, 1)
        logits = forward(params, document).logits
        expected = softmax(logits) - np.eye(config.num_classes)[1]
        assert_allclose(expected, grads['classifier_bias'], rtol=0, atol=1e-15)


class ShouldVanishForSaturatedPrediction(TestCase):
    def test(self):
        config = tiny_config()
        params = init_params(config, 16)
        bias = np.array([0.0, 60.0, 0.0])
        params = _with(params, classifier_bias=bias, classifier_weight=np.zeros((config.hidden, 3)))
        grads = backward(params, random_documents(config, 1, seed=17)[0], 1)
        for name, grad in grads.items():
            self.assertLess(np.linalg.norm(grad), 1e-6, name)


class ShouldExtractEmbeddings(TestCase):
    def test(self):
        config = tiny_config()
        params = init_params(config, 18)
        documents = random_documents(config, 7, seed=19)
        embeddings = extract_embeddings(params, documents[:1])
        self.assertEqual((1, config.hidden), embeddings.features.shape)
        embeddings = extract_embeddings(params, documents, batch_size=3)
        self.assertEqual(tuple(document.doc_id for document in documents), embeddings.doc_ids)
        for row, document in enumerate(documents):
            assert_allclose(forward(params, document).pooled, embeddings.features[row], rtol=0, atol=1e-12)
        self.assertRaises(ValueError, extract_embeddings, params, documents, None, 'mean')


class ShouldAverageConstantStates(TestCase):
    def test(self):
        config = tiny_config(num_layers=1)
        params = init_params(config, 20)
        v = np.arange(1.0, config.hidden + 1)
        zeros = {name: np.zeros_like(value) for name, value in params.items()}
        zeros['layers.0.b_ff2'] = v
        params = ModelParams(config, zeros)
        documents = random_documents(config, 3, seed=21)
        embeddings = extract_embeddings(params, documents, pooling='avg_avg')
        assert_allclose(np.tile(v, (3, 1)), embeddings.features, rtol=0, atol=1e-12)


class ShouldSaveAndLoadParams(TestCase):
    def test(self):
        params = init_params(tiny_config(), 22)
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'params.npz')
            save_params(params, path)
            loaded = load_params(path)
        self.assertEqual(params, loaded)
        self.assertEqual(params.config, loaded.config)
