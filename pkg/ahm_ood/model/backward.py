"""Reverse-mode gradients of the classification loss."""
from collections import OrderedDict
import numpy as np
from scipy.special import log_softmax
from scipy.special import softmax
from ..errors import ContractError
from .forward import forward_batch
from .forward import gelu_grad
from .forward import merge_heads
from .forward import split_heads
from .params import layer_key


def _layer_norm_backward(grad, cache, scale):
    """Return the input, scale and offset gradients of a layer norm."""
    x_hat, inv_std = cache
    grad_hat = grad * scale
    grad_x = inv_std * (
        grad_hat -
        grad_hat.mean(axis=-1, keepdims=True) -
        x_hat * (grad_hat * x_hat).mean(axis=-1, keepdims=True)
    )
    axes = tuple(range(grad.ndim - 1))
    return grad_x, (grad * x_hat).sum(axis=axes), grad.sum(axis=axes)


def _flat(x):
    """Collapse the leading axes of an activation tensor."""
    return x.reshape(-1, x.shape[-1])


def cross_entropy(logits, targets):
    """Return the mean cross-entropy of (B, C) logits against class ids."""
    log_probs = log_softmax(logits, axis=-1)
    return float(-log_probs[np.arange(len(targets)), targets].mean())


def backward_batch(params, documents, targets):
    """
    Return the mean cross-entropy loss and its exact parameter gradients.

    Training never masks heads, so the forward pass uses the plain model.

    Args:
        params (ModelParams): the model parameters
        documents (list): the DocumentInput objects of the batch
        targets (array-like): (B,) target class ids

    Returns (tuple):
        - loss (float): the mean cross-entropy
        - grads (OrderedDict): a gradient array for every parameter tensor
        - logits (np.ndarray): (B, C) logits of the forward pass

    """
    config = params.config
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (len(documents),):
        raise ContractError('expected one target per document')
    if np.any(targets < 0) or np.any(targets >= config.num_classes):
        raise ContractError('targets must be in [0, {})'.format(config.num_classes))
    trace = forward_batch(params, documents, keep_cache=True)
    batch = len(documents)
    grads = OrderedDict((name, np.zeros_like(tensor)) for name, tensor in params.items())
    # classifier head
    probs = softmax(trace.logits, axis=-1)
    grad_logits = probs.copy()
    grad_logits[np.arange(batch), targets] -= 1.0
    grad_logits /= batch
    grads['classifier_weight'] = trace.pooled.T @ grad_logits
    grads['classifier_bias'] = grad_logits.sum(axis=0)
    grad_x = np.zeros_like(trace.layer_states[-1])
    grad_x[:, 0] = grad_logits @ params['classifier_weight'].T
    heads = config.num_heads
    scale = 1.0 / np.sqrt(config.head_dim)
    for layer in reversed(range(config.num_layers)):
        cache = trace.cache[layer]
        # feed-forward block: x = x1 + gelu(h2 W1 + b1) W2 + b2
        grads[layer_key(layer, 'w_ff2')] = _flat(cache['act']).T @ _flat(grad_x)
        grads[layer_key(layer, 'b_ff2')] = _flat(grad_x).sum(axis=0)
        grad_pre = (grad_x @ params.layer(layer, 'w_ff2').T) * gelu_grad(cache['pre'])
        grads[layer_key(layer, 'w_ff1')] = _flat(cache['h2']).T @ _flat(grad_pre)
        grads[layer_key(layer, 'b_ff1')] = _flat(grad_pre).sum(axis=0)
        grad_h2 = grad_pre @ params.layer(layer, 'w_ff1').T
        grad_norm, grad_scale, grad_offset = _layer_norm_backward(
            grad_h2, cache['norm2'], params.layer(layer, 'ln2_scale'))
        grads[layer_key(layer, 'ln2_scale')] = grad_scale
        grads[layer_key(layer, 'ln2_offset')] = grad_offset
        grad_x1 = grad_x + grad_norm
        # attention block: x1 = x + context W_O
        grads[layer_key(layer, 'w_o')] = _flat(cache['context']).T @ _flat(grad_x1)
        grad_context = split_heads(grad_x1 @ params.layer(layer, 'w_o').T, heads)
        q, k, v, probs_attn, gated = cache['attn']
        grad_v = gated.transpose(0, 1, 3, 2) @ grad_context
        grad_probs = grad_context @ v.transpose(0, 1, 3, 2)
        if cache['gates'] is not None:
            grad_probs = grad_probs * cache['gates'][None, :, None, None]
        grad_scores = probs_attn * (grad_probs - (grad_probs * probs_attn).sum(axis=-1, keepdims=True))
        grad_scores *= scale
        grad_q = merge_heads(grad_scores @ k)
        grad_k = merge_heads(grad_scores.transpose(0, 1, 3, 2) @ q)
        grad_v = merge_heads(grad_v)
        h1 = _flat(cache['h1'])
        grads[layer_key(layer, 'w_q')] = h1.T @ _flat(grad_q)
        grads[layer_key(layer, 'w_k')] = h1.T @ _flat(grad_k)
        grads[layer_key(layer, 'w_v')] = h1.T @ _flat(grad_v)
        grad_h1 = (
            grad_q @ params.layer(layer, 'w_q').T +
            grad_k @ params.layer(layer, 'w_k').T +
            grad_v @ params.layer(layer, 'w_v').T
        )
        grad_norm, grad_scale, grad_offset = _layer_norm_backward(
            grad_h1, cache['norm1'], params.layer(layer, 'ln1_scale'))
        grads[layer_key(layer, 'ln1_scale')] = grad_scale
        grads[layer_key(layer, 'ln1_offset')] = grad_offset
        grad_x = grad_x1 + grad_norm
    # input embeddings
    for row, document in enumerate(documents):
        length = trace.lengths[row]
        num_text = len(document.text_token_ids)
        grads['cls_embedding'] += grad_x[row, 0]
        if num_text:
            np.add.at(grads['token_embedding'], list(document.text_token_ids), grad_x[row, 1:1 + num_text])
        if length > 1 + num_text:
            grads['patch_projection'] += document.patch_vectors.T @ grad_x[row, 1 + num_text:length]
        grads['position_embedding'][:length] += grad_x[row, :length]
    loss = cross_entropy(trace.logits, targets)
    return loss, grads, trace.logits


def backward(params, document, target_class):
    """Return the gradients of the cross-entropy loss for one document."""
    return backward_batch(params, [document], [target_class])[1]


# explicitly define the outward facing API of this module
__all__ = [
    cross_entropy.__name__,
    backward_batch.__name__,
    backward.__name__,
]
