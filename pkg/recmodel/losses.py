"""
Pairwise hinge ranking loss and the distance-correlation regularizer.
"""
from typing import Sequence, Tuple

import numpy as np
from scipy.spatial.distance import pdist, squareform


def ranking_loss(s_pos: float, s_negs: Sequence[float], margin: float = 1.0) -> float:
    """(1/K) * sum_k max(0, m - (s_pos - s_neg_k))."""
    s_negs = np.asarray(s_negs, dtype=float)
    if s_negs.size == 0:
        raise ValueError("ranking_loss needs at least one negative score")
    return float(np.maximum(0.0, margin - (s_pos - s_negs)).mean())


def hinge_block(s_pos: np.ndarray, s_neg: np.ndarray, margin: float):
    """
    Batched hinge: s_pos (B,), s_neg (B, K).

    Returns per-sample losses (B,), the gradient w.r.t. s_pos and s_neg of
    the batch mean, and the raw hinge arguments. A zero argument counts as
    inactive.
    """
    batch, k = s_neg.shape
    hinge = margin - (s_pos[:, None] - s_neg)
    active = hinge > 0
    per_sample = np.where(active, hinge, 0.0).mean(axis=1)
    d_neg = active / (batch * k)
    d_pos = -d_neg.sum(axis=1)
    return per_sample, d_pos, d_neg, hinge


def _as_samples(block) -> np.ndarray:
    block = np.asarray(block, dtype=float)
    if block.ndim == 1:
        block = block[:, None]
    return block


def centered_distances(block: np.ndarray):
    """Pairwise Euclidean distances of the rows and their double-centered form."""
    dist = squareform(pdist(block))
    centered = dist - dist.mean(axis=0)[None, :] - dist.mean(axis=1)[:, None] + dist.mean()
    return dist, centered


def distance_correlation(x, y) -> float:
    """Sample distance correlation in [0, 1]; 0 when either block is constant."""
    return distance_correlation_grad(x, y, with_grad=False)[0]


def distance_correlation_grad(x, y, with_grad: bool = True) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Distance correlation of row samples x (n, p) and y (n, q) plus its
    gradient w.r.t. both blocks. Zero pairwise distances contribute a zero
    subgradient.
    """
    x, y = _as_samples(x), _as_samples(y)
    n = x.shape[0]
    if n < 2:
        raise ValueError(f"distance_correlation needs n >= 2 samples, got {n}")
    if y.shape[0] != n:
        raise ValueError(f"Sample counts differ: {n} vs {y.shape[0]}")
    return dcor_from_distances(x, centered_distances(x), y, centered_distances(y), with_grad)


def dcor_from_distances(x: np.ndarray, x_terms, y: np.ndarray, y_terms, with_grad: bool = True):
    """distance_correlation_grad on precomputed ``centered_distances`` of both blocks."""
    (a, A), (b, B) = x_terms, y_terms
    n = x.shape[0]
    s_xy = (A * B).mean()
    s_xx = (A * A).mean()
    s_yy = (B * B).mean()
    zero_x, zero_y = np.zeros_like(x), np.zeros_like(y)
    if s_xx <= 0 or s_yy <= 0 or s_xy <= 0:
        return 0.0, zero_x, zero_y

    norm = np.sqrt(s_xx * s_yy)
    value = float(min(np.sqrt(s_xy / norm), 1.0))
    if not with_grad:
        return value, zero_x, zero_y

    scale = 1.0 / (2.0 * value * n * n * norm)
    grad_a = (B - (s_xy / s_xx) * A) * scale
    grad_b = (A - (s_xy / s_yy) * B) * scale
    return value, _distance_backward(x, a, grad_a), _distance_backward(y, b, grad_b)


def _distance_backward(block: np.ndarray, dist: np.ndarray, grad_dist: np.ndarray) -> np.ndarray:
    with np.errstate(divide='ignore', invalid='ignore'):
        weights = np.where(dist > 0, 2.0 * grad_dist / dist, 0.0)
    return weights.sum(axis=1)[:, None] * block - weights @ block
