"""The masked pre-norm transformer encoder forward pass."""
from dataclasses import dataclass
import numpy as np
from scipy.special import erf
from scipy.special import softmax
from .config import check_document
from .config import check_mask


# the layer norm variance floor
LAYER_NORM_EPS = 1e-5


# pooling strategies for document embeddings
POOLINGS = ('cls_last', 'avg_avg')


def layer_norm(x, scale, offset):
    """
    Normalize the last axis and apply an affine map.

    Args:
        x (np.ndarray): (..., Hid) activations
        scale (np.ndarray): (Hid,) gain
        offset (np.ndarray): (Hid,) bias

    Returns (tuple):
        the normalized output and the (x_hat, inv_std) cache for backprop

    """
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + LAYER_NORM_EPS)
    x_hat = centered * inv_std
    return x_hat * scale + offset, (x_hat, inv_std)


def gelu(x):
    """Return the exact (erf based) GELU activation."""
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def gelu_grad(x):
    """Return the derivative of the exact GELU activation."""
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return cdf + x * pdf


def split_heads(x, num_heads):
    """Reshape (B, S, Hid) activations to (B, H, S, Hid / H)."""
    batch, seq, hidden = x.shape
    return x.reshape(batch, seq, num_heads, hidden // num_heads).transpose(0, 2, 1, 3)


def merge_heads(x):
    """Reshape (B, H, S, Hid / H) activations back to (B, S, Hid)."""
    batch, heads, seq, head_dim = x.shape
    return x.transpose(0, 2, 1, 3).reshape(batch, seq, heads * head_dim)


@dataclass
class BatchTrace:
    """Activations of a padded batch of documents."""

    # (B,) sequence lengths including CLS
    lengths: np.ndarray
    # (B, S) True at non-padding positions
    valid: np.ndarray
    # N arrays (B, S, Hid), the output of every layer
    layer_states: list
    # N arrays (B, S, Hid), the masked attention output before W_O
    attention_contexts: list
    # (B, Hid) final-layer CLS states
    pooled: np.ndarray
    # (B, num_classes) classifier outputs
    logits: np.ndarray
    # per-layer intermediate values, kept only for backprop
    cache: list = None
    # (B, S, Hid) embedded inputs, kept only for backprop
    inputs: np.ndarray = None

    def avg_avg(self):
        """Return the (B, Hid) mean over all layers and non-padding positions."""
        weights = self.valid[:, :, None].astype(np.float64)
        total = sum((state * weights).sum(axis=1) for state in self.layer_states)
        counts = len(self.layer_states) * self.lengths[:, None].astype(np.float64)
        return total / counts

    def pool(self, pooling):
        """Return the (B, Hid) embedding for a pooling strategy."""
        if pooling == 'cls_last':
            return self.pooled
        if pooling == 'avg_avg':
            return self.avg_avg()
        raise ValueError('pooling must be one of {}, got {!r}'.format(POOLINGS, pooling))


@dataclass
class ForwardTrace:
    """Activations of a single document."""

    # N arrays (L, Hid), the output of every layer
    layer_states: list
    # N arrays (L, Hid), the masked attention output before W_O
    attention_contexts: list
    # (Hid,) final-layer CLS state
    pooled: np.ndarray
    # (Hid,) mean over all layers and positions
    avg_avg: np.ndarray
    # (num_classes,) classifier outputs
    logits: np.ndarray


def embed_documents(params, documents):
    """
    Return the embedded, padded input sequences of a batch.

    Each sequence is [CLS] + text tokens + projected patches, plus positional
    embeddings.

    Returns (tuple):
        (B, S, Hid) inputs, (B,) lengths and the (B, S) validity mask

    """
    config = params.config
    for document in documents:
        check_document(config, document)
    lengths = np.array([document.seq_len for document in documents], dtype=np.int64)
    seq = int(lengths.max())
    inputs = np.zeros((len(documents), seq, config.hidden))
    for row, document in enumerate(documents):
        num_text = len(document.text_token_ids)
        length = lengths[row]
        inputs[row, 0] = params['cls_embedding']
        if num_text:
            inputs[row, 1:1 + num_text] = params['token_embedding'][list(document.text_token_ids)]
        if length > 1 + num_text:
            inputs[row, 1 + num_text:length] = document.patch_vectors @ params['patch_projection']
        inputs[row, :length] += params['position_embedding'][:length]
    valid = np.arange(seq)[None, :] < lengths[:, None]
    return inputs, lengths, valid


def attention(params, layer, x, valid, head_gates=None):
    """
    Run one multi-head self-attention block on normalized activations.

    Args:
        params (ModelParams): the model parameters
        layer (int): the layer index
        x (np.ndarray): (B, S, Hid) layer-normed activations
        valid (np.ndarray): (B, S) key validity mask
        head_gates (np.ndarray): (H,) 0/1 gates multiplied into the
            post-softmax probabilities of each head, None to skip gating

    Returns (tuple):
        the (B, S, Hid) context before W_O and the values needed for backprop

    """
    heads = params.config.num_heads
    q = split_heads(x @ params.layer(layer, 'w_q'), heads)
    k = split_heads(x @ params.layer(layer, 'w_k'), heads)
    v = split_heads(x @ params.layer(layer, 'w_v'), heads)
    scores = (q @ k.transpose(0, 1, 3, 2)) / np.sqrt(params.config.head_dim)
    scores = np.where(valid[:, None, None, :], scores, -np.inf)
    probs = softmax(scores, axis=-1)
    gated = probs
    if head_gates is not None:
        # zero whole heads without renormalizing the surviving ones
        gated = probs * head_gates[None, :, None, None]
    context = merge_heads(gated @ v)
    return context, (q, k, v, probs, gated)


def forward_batch(params, documents, mask=None, keep_cache=False):
    """
    Run the encoder-classifier on a batch of documents.

    Args:
        params (ModelParams): the model parameters
        documents (list): the DocumentInput objects to encode
        mask (AttentionHeadMask): the head mask, None for the plain model
        keep_cache (bool): whether to keep intermediate values for backprop

    Returns (BatchTrace):
        the activations of the batch

    """
    config = params.config
    if mask is not None:
        check_mask(config, mask)
    inputs, lengths, valid = embed_documents(params, documents)
    x = inputs
    states, contexts, cache = [], [], []
    for layer in range(config.num_layers):
        gates = None if mask is None else mask.values[layer]
        h1, norm1 = layer_norm(x, params.layer(layer, 'ln1_scale'), params.layer(layer, 'ln1_offset'))
        context, attn = attention(params, layer, h1, valid, gates)
        x1 = x + context @ params.layer(layer, 'w_o')
        h2, norm2 = layer_norm(x1, params.layer(layer, 'ln2_scale'), params.layer(layer, 'ln2_offset'))
        pre = h2 @ params.layer(layer, 'w_ff1') + params.layer(layer, 'b_ff1')
        act = gelu(pre)
        x = x1 + act @ params.layer(layer, 'w_ff2') + params.layer(layer, 'b_ff2')
        states.append(x)
        contexts.append(context)
        if keep_cache:
            cache.append(dict(h1=h1, norm1=norm1, attn=attn, gates=gates,
                              context=context, h2=h2, norm2=norm2, pre=pre, act=act))
    pooled = x[:, 0]
    logits = pooled @ params['classifier_weight'] + params['classifier_bias']
    return BatchTrace(
        lengths=lengths,
        valid=valid,
        layer_states=states,
        attention_contexts=contexts,
        pooled=pooled,
        logits=logits,
        cache=cache if keep_cache else None,
        inputs=inputs if keep_cache else None,
    )


def forward(params, document, mask=None):
    """
    Run the encoder-classifier on a single document.

    Args:
        params (ModelParams): the model parameters
        document (DocumentInput): the document to encode
        mask (AttentionHeadMask): the head mask, None for the plain model

    Returns (ForwardTrace):
        the activations of the document

    """
    trace = forward_batch(params, [document], mask)
    return ForwardTrace(
        layer_states=[state[0] for state in trace.layer_states],
        attention_contexts=[context[0] for context in trace.attention_contexts],
        pooled=trace.pooled[0],
        avg_avg=trace.avg_avg()[0],
        logits=trace.logits[0],
    )


# explicitly define the outward facing API of this module
__all__ = [
    BatchTrace.__name__,
    ForwardTrace.__name__,
    layer_norm.__name__,
    gelu.__name__,
    gelu_grad.__name__,
    embed_documents.__name__,
    attention.__name__,
    forward_batch.__name__,
    forward.__name__,
]
