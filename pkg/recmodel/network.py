"""
Factor-attention multimodal recommender with hand-written backpropagation.

Scoring a (user, item) pair:
  - text/visual item features go through two-layer LeakyReLU MLPs
    (dropout on the hidden layer while training),
  - user, item-ID, text and visual vectors are cut into F factor blocks,
  - per factor an attention MLP over the concatenated blocks weights the
    ID/text/visual channels,
  - each channel contributes GELU(<p_f, e_f>), weighted and summed over
    channels and factors.
"""
import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.special import erf

from .losses import centered_distances, dcor_from_distances, hinge_block
from .params import CHANNELS, HyperParams, ModelParams

logger = logging.getLogger(__name__)

SLOPE = 0.2
SQRT2 = np.sqrt(2.0)
INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
MODALITIES = ('text', 'visual')


class NonFiniteLossError(FloatingPointError):
    """Loss became NaN/inf; ``param_name`` names the first offending tensor."""

    def __init__(self, param_name: str, value: float):
        self.param_name = param_name
        self.value = value
        super().__init__(f"Non-finite loss {value!r} (first non-finite tensor: {param_name})")


# =============================================================================
# ACTIVATIONS
# =============================================================================

def leaky_relu(z):
    return np.where(z >= 0, z, SLOPE * z)


def leaky_relu_grad(z):
    # subgradient at 0 taken from the positive side
    return np.where(z >= 0, 1.0, SLOPE)


def gelu(z):
    """Exact GELU z * Phi(z)."""
    return z * 0.5 * (1.0 + erf(z / SQRT2))


def gelu_grad(z):
    return 0.5 * (1.0 + erf(z / SQRT2)) + z * INV_SQRT_2PI * np.exp(-0.5 * z * z)


def softmax(logits, axis=-1):
    shifted = logits - logits.max(axis=axis, keepdims=True)
    weights = np.exp(shifted)
    return weights / weights.sum(axis=axis, keepdims=True)


# =============================================================================
# BUILDING BLOCKS
# =============================================================================

def _mlp_forward(x, w1, b1, w2, b2, dropout=0.0, rng=None):
    z1 = x @ w1.T + b1
    a1 = leaky_relu(z1)
    mask = None
    if rng is not None and dropout > 0:
        mask = (rng.random(z1.shape) >= dropout) / (1.0 - dropout)
        a1 = a1 * mask
    z2 = a1 @ w2.T + b2
    return leaky_relu(z2), (x, z1, mask, a1, z2)


def _mlp_backward(cache, w2, d_out):
    x, z1, mask, a1, z2 = cache
    dz2 = d_out * leaky_relu_grad(z2)
    grads = {'w2': dz2.T @ a1, 'b2': dz2.sum(axis=0)}
    da1 = dz2 @ w2
    if mask is not None:
        da1 = da1 * mask
    dz1 = da1 * leaky_relu_grad(z1)
    grads['w1'] = dz1.T @ x
    grads['b1'] = dz1.sum(axis=0)
    return grads


def project_modality(raw, mlp: Sequence[np.ndarray], dropout: float = 0.0, rng=None):
    """
    LReLU(W2 . LReLU(W1 . x + b1) + b2) for one vector or a batch of rows.

    ``mlp`` is (W1, b1, W2, b2). Dropout only applies when an rng is given
    (training mode); evaluation is deterministic.
    """
    w1, b1, w2, b2 = (np.asarray(m, dtype=float) for m in mlp)
    raw = np.asarray(raw, dtype=float)
    single = raw.ndim == 1
    x = np.atleast_2d(raw)
    if w1.shape[1] != x.shape[1] or w1.shape[0] != b1.shape[0] \
            or w2.shape[1] != w1.shape[0] or w2.shape[0] != b2.shape[0]:
        raise ValueError(
            f"MLP shapes inconsistent: x{x.shape[1:]} W1{w1.shape} b1{b1.shape} W2{w2.shape} b2{b2.shape}"
        )
    out, _ = _mlp_forward(x, w1, b1, w2, b2, dropout, rng)
    return out[0] if single else out


def modality_mlp(params: ModelParams, modality: str):
    return tuple(params[f'{modality}_{part}'] for part in ('w1', 'b1', 'w2', 'b2'))


def factorize(embedding, factors: int):
    """Split the last axis into F contiguous blocks: (..., d) -> (..., F, d/F)."""
    embedding = np.asarray(embedding)
    d = embedding.shape[-1]
    if factors < 1 or d % factors:
        raise ValueError(f"{factors} factors do not divide dimension {d}")
    return embedding.reshape(embedding.shape[:-1] + (factors, d // factors))


def attention_weights(h, w1, b1, w2, b2):
    """Softmax(A2 . tanh(A1 . h + b1) + b2) over the last axis."""
    h = np.asarray(h, dtype=float)
    if not np.isfinite(h).all():
        raise ValueError("attention input contains non-finite values")
    if h.shape[-1] != w1.shape[1]:
        raise ValueError(f"attention input has dim {h.shape[-1]}, A1 expects {w1.shape[1]}")
    return softmax(np.tanh(h @ w1.T + b1) @ w2.T + b2)


def factor_score(p_f, v_f, t_f, x_f, alpha):
    """sum_s alpha_s * GELU(<p_f, e_s>) over channels (ID, text, visual)."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape[-1] != CHANNELS:
        raise ValueError(f"Expected {CHANNELS} channel weights, got {alpha.shape[-1]}")
    dots = np.stack([
        np.sum(np.asarray(p_f) * np.asarray(e), axis=-1) for e in (v_f, t_f, x_f)
    ], axis=-1)
    return np.sum(alpha * gelu(dots), axis=-1)


# =============================================================================
# BATCHED FORWARD / BACKWARD
# =============================================================================

@dataclass
class ForwardCache:
    users: np.ndarray
    items: np.ndarray
    blocks: Dict[str, np.ndarray]      # 'p', 'v', 't', 'x' -> (B, F, d_f)
    mlp: Dict[str, tuple]              # modality -> MLP cache
    h: np.ndarray                      # (B, F, 4 d_f)
    g: np.ndarray                      # tanh activations (B, F, H_a)
    alpha: np.ndarray                  # (B, F, C)
    dots: np.ndarray                   # (B, F, C)
    gelu_dots: np.ndarray


def forward(params: ModelParams, features, hyper: HyperParams, users, items, rng=None):
    """Scores for (users[b], items[b]); training mode (dropout) iff rng is given."""
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    F = hyper.factors

    projected, mlp_cache = {}, {}
    for modality, raw in (('text', features.text), ('visual', features.visual)):
        projected[modality], mlp_cache[modality] = _mlp_forward(
            raw[items], *modality_mlp(params, modality), hyper.dropout, rng)

    blocks = {
        'p': factorize(params['user_embedding'][users], F),
        'v': factorize(params['item_embedding'][items], F),
        't': factorize(projected['text'], F),
        'x': factorize(projected['visual'], F),
    }
    h = np.concatenate([blocks['p'], blocks['v'], blocks['t'], blocks['x']], axis=-1)
    g = np.tanh(h @ params['attn_w1'].T + params['attn_b1'])
    alpha = softmax(g @ params['attn_w2'].T + params['attn_b2'])
    dots = np.stack([np.sum(blocks['p'] * blocks[c], axis=-1) for c in ('v', 't', 'x')], axis=-1)
    gelu_dots = gelu(dots)
    scores = np.sum(alpha * gelu_dots, axis=(-1, -2))

    cache = ForwardCache(users, items, blocks, mlp_cache, h, g, alpha, dots, gelu_dots)
    return scores, cache


def backward(params: ModelParams, cache: ForwardCache, d_scores, extra: Optional[Dict[str, np.ndarray]] = None):
    """
    Gradients of sum_b d_scores[b] * score_b, plus optional extra upstream
    gradients on the item-side vectors ('v', 't', 'x'; each (B, d)).
    """
    d_scores = np.asarray(d_scores, dtype=float)
    blocks, alpha = cache.blocks, cache.alpha
    batch, F, df = blocks['p'].shape

    d_factor = d_scores[:, None, None]
    d_alpha = d_factor * cache.gelu_dots
    d_dots = d_factor * alpha * gelu_grad(cache.dots)

    d_blocks = {
        'p': sum(d_dots[..., c:c + 1] * blocks[name] for c, name in enumerate(('v', 't', 'x'))),
        'v': d_dots[..., 0:1] * blocks['p'],
        't': d_dots[..., 1:2] * blocks['p'],
        'x': d_dots[..., 2:3] * blocks['p'],
    }

    d_logits = alpha * (d_alpha - np.sum(alpha * d_alpha, axis=-1, keepdims=True))
    grads = {
        'attn_w2': np.einsum('bfc,bfh->ch', d_logits, cache.g),
        'attn_b2': d_logits.sum(axis=(0, 1)),
    }
    d_pre = (d_logits @ params['attn_w2']) * (1.0 - cache.g ** 2)
    grads['attn_w1'] = np.einsum('bfh,bfk->hk', d_pre, cache.h)
    grads['attn_b1'] = d_pre.sum(axis=(0, 1))
    d_h = d_pre @ params['attn_w1']
    for slot, name in enumerate(('p', 'v', 't', 'x')):
        d_blocks[name] = d_blocks[name] + d_h[..., slot * df:(slot + 1) * df]

    flat = {name: block.reshape(batch, F * df) for name, block in d_blocks.items()}
    for name, upstream in (extra or {}).items():
        flat[name] = flat[name] + upstream

    grads['user_embedding'] = np.zeros_like(params['user_embedding'])
    np.add.at(grads['user_embedding'], cache.users, flat['p'])
    grads['item_embedding'] = np.zeros_like(params['item_embedding'])
    np.add.at(grads['item_embedding'], cache.items, flat['v'])

    for modality, key in (('text', 't'), ('visual', 'x')):
        mlp_grads = _mlp_backward(cache.mlp[modality], params[f'{modality}_w2'], flat[key])
        for part, value in mlp_grads.items():
            grads[f'{modality}_{part}'] = value

    return ModelParams(grads)


# =============================================================================
# LOSS
# =============================================================================

@dataclass
class Batch:
    users: np.ndarray        # (B,)
    positives: np.ndarray    # (B,)
    negatives: np.ndarray    # (B, K)


@dataclass
class LossResult:
    value: float
    ranking: float
    regularizer: float
    grads: Optional[ModelParams]
    sample_losses: np.ndarray
    kink_distance: float     # distance of the closest LeakyReLU/hinge input to its kink


def _pair_layout(batch: Batch):
    k = batch.negatives.shape[1]
    users = np.concatenate([batch.users, np.repeat(batch.users, k)])
    items = np.concatenate([batch.positives, batch.negatives.ravel()])
    return users, items


def dcor_regularizer(cache: ForwardCache, rows: int, with_grad: bool = True):
    """
    Sum of distance correlations between every pair of factor blocks within
    each item-side modality (ID, text, visual) over the first ``rows`` samples.
    """
    total = 0.0
    upstream = {}
    for name in ('v', 't', 'x'):
        blocks = cache.blocks[name][:rows]
        grad = np.zeros_like(blocks)
        terms = [centered_distances(blocks[:, f]) for f in range(blocks.shape[1])]
        for f, g in combinations(range(blocks.shape[1]), 2):
            value, d_f, d_g = dcor_from_distances(
                blocks[:, f], terms[f], blocks[:, g], terms[g], with_grad)
            total += value
            grad[:, f] += d_f
            grad[:, g] += d_g
        upstream[name] = grad.reshape(rows, -1)
    return total, upstream


def total_loss(batch: Batch, params: ModelParams, features, hyper: HyperParams,
               rng=None, with_grad: bool = True) -> LossResult:
    """
    Mean hinge ranking loss over the batch plus dcor_weight times the
    distance-correlation regularizer. Weight decay lives in the optimizer.
    """
    users, items = _pair_layout(batch)
    batch_size, k = batch.negatives.shape
    scores, cache = forward(params, features, hyper, users, items, rng)
    per_sample, d_pos, d_neg, hinge = hinge_block(
        scores[:batch_size], scores[batch_size:].reshape(batch_size, k), hyper.margin)
    ranking = float(per_sample.mean())

    regularizer, extra = 0.0, None
    if hyper.dcor_weight > 0 and batch_size >= 2:
        regularizer, upstream = dcor_regularizer(cache, batch_size, with_grad)
        extra = {}
        for name, grad in upstream.items():
            full = np.zeros((len(users), grad.shape[1]))
            full[:batch_size] = hyper.dcor_weight * grad
            extra[name] = full

    value = ranking + hyper.dcor_weight * regularizer
    if not np.isfinite(value):
        logger.warning(f"Non-finite loss {value} on a batch of {batch_size} pairs")
        raise NonFiniteLossError(params.first_non_finite() or 'loss', value)

    grads = None
    if with_grad:
        grads = backward(params, cache, np.concatenate([d_pos, d_neg.ravel()]), extra)
        bad = grads.first_non_finite()
        if bad:
            raise NonFiniteLossError(bad, value)

    pre_activations = [np.abs(hinge).min()]
    for modality_cache in cache.mlp.values():
        pre_activations.append(np.abs(modality_cache[1]).min())
        pre_activations.append(np.abs(modality_cache[4]).min())

    return LossResult(value=value, ranking=ranking, regularizer=regularizer, grads=grads,
                      sample_losses=per_sample, kink_distance=float(min(pre_activations)))


def ranking_losses(params: ModelParams, features, hyper: HyperParams, batch: Batch,
                   chunk: int = 4096) -> np.ndarray:
    """Per-sample hinge losses in evaluation mode, computed in chunks."""
    losses = []
    for start in range(0, len(batch.users), chunk):
        part = Batch(batch.users[start:start + chunk], batch.positives[start:start + chunk],
                     batch.negatives[start:start + chunk])
        users, items = _pair_layout(part)
        scores = predict_pairs(params, features, hyper, users, items)
        size = len(part.users)
        per_sample, *_ = hinge_block(scores[:size], scores[size:].reshape(size, -1), hyper.margin)
        losses.append(per_sample)
    return np.concatenate(losses) if losses else np.empty(0)


# =============================================================================
# INFERENCE
# =============================================================================

def predict_pairs(params: ModelParams, features, hyper: HyperParams, users, items,
                  chunk: int = 65536) -> np.ndarray:
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    out = np.empty(len(users))
    for start in range(0, len(users), chunk):
        stop = start + chunk
        out[start:stop], _ = forward(params, features, hyper, users[start:stop], items[start:stop])
    return out


def predict(user: int, item: int, params: ModelParams, features, hyper: HyperParams) -> float:
    """Predicted score r_hat(u, i) = sum over factors of the factor scores (no dropout)."""
    return float(predict_pairs(params, features, hyper, [user], [item])[0])


def score_matrix(params: ModelParams, features, hyper: HyperParams, users, chunk: int = 16) -> np.ndarray:
    """
    Scores of ``users`` against every item, (len(users), N).

    The attention pre-activation splits into a user part and an item part, so
    item-side projections are computed once and broadcast per user chunk.
    """
    users = np.asarray(users, dtype=np.int64)
    F, df = hyper.factors, hyper.factor_dim
    item_blocks = [
        factorize(params['item_embedding'], F),
        factorize(project_modality(features.text, modality_mlp(params, 'text')), F),
        factorize(project_modality(features.visual, modality_mlp(params, 'visual')), F),
    ]
    w1, b1 = params['attn_w1'], params['attn_b1']
    w2, b2 = params['attn_w2'], params['attn_b2']
    item_pre = sum(block @ w1[:, (slot + 1) * df:(slot + 2) * df].T
                   for slot, block in enumerate(item_blocks)) + b1          # (N, F, H_a)

    out = np.empty((len(users), params['item_embedding'].shape[0]))
    for start in range(0, len(users), chunk):
        p = factorize(params['user_embedding'][users[start:start + chunk]], F)    # (u, F, d_f)
        pre = (p @ w1[:, :df].T)[:, None] + item_pre[None]                       # (u, N, F, H_a)
        alpha = softmax(np.tanh(pre) @ w2.T + b2)                                 # (u, N, F, C)
        dots = np.stack([np.einsum('ufd,nfd->unf', p, block) for block in item_blocks], axis=-1)
        out[start:start + chunk] = np.sum(alpha * gelu(dots), axis=(-1, -2))
    return out
