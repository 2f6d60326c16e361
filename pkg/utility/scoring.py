"""
Per-client contribution scoring: reputation smoothing, update relevance,
data quality and the aggregate score.
"""
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

ATTRIBUTION_MODES = ('marginal', 'shared')


@dataclass(frozen=True)
class UtilityWeights:
    """
    gamma smooths reputation; alpha/beta mix relevance-reputation against data
    quality; kappa prices normalized latency. ``attribution`` picks how a
    client's validation score Q_t^i is measured (own delta vs. aggregated model).
    """
    gamma: float = 0.5
    alpha: float = 1.0
    beta: float = 1.0
    kappa: float = 0.5
    attribution: str = 'marginal'

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError(f"alpha and beta must be >= 0, got {self.alpha}, {self.beta}")
        if self.alpha == 0 and self.beta == 0:
            raise ValueError("alpha and beta cannot both be 0")
        if self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if self.attribution not in ATTRIBUTION_MODES:
            raise ValueError(f"attribution must be one of {ATTRIBUTION_MODES}, got {self.attribution!r}")


def update_reputation(r_prev: float, q_client: float, q_prev_global: float, gamma: float) -> Tuple[float, float]:
    """Returns (R_t, gain) with gain = Q_t^i - Q_{t-1} and R_t = gamma * gain + (1 - gamma) * R_prev."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    gain = q_client - q_prev_global
    return gamma * gain + (1.0 - gamma) * r_prev, gain


def update_deviation(local, global_) -> float:
    """Mean absolute deviation between a local and the global flat parameter vector."""
    local = np.asarray(local, dtype=float)
    global_ = np.asarray(global_, dtype=float)
    if local.shape != global_.shape:
        raise ValueError(f"Parameter vectors differ in shape: {local.shape} vs {global_.shape}")
    if local.size == 0:
        raise ValueError("Cannot measure deviation of empty parameter vectors")
    return float(np.abs(local - global_).mean())


def update_relevance(deviation: float, improved: bool) -> float:
    """exp(-deviation) when the global model improved, 1 - exp(-deviation) otherwise."""
    if deviation < 0 or not math.isfinite(deviation):
        raise ValueError(f"Deviation must be finite and >= 0, got {deviation}")
    closeness = math.exp(-deviation)
    return closeness if improved else 1.0 - closeness


def data_quality(losses: Sequence[float]) -> float:
    """|B| times the root-mean-square of per-sample losses; 0 for no samples."""
    losses = np.asarray(losses, dtype=float)
    if losses.size == 0:
        return 0.0
    return float(losses.size * np.sqrt(np.mean(losses ** 2)))


def minmax_normalize(values: Sequence[float]) -> np.ndarray:
    """(v - min) / (max - min); every value maps to 1.0 when they are all equal."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return values
    low, high = values.min(), values.max()
    if high == low:
        return np.ones_like(values)
    return (values - low) / (high - low)


def aggregate_score(relevance: float, reputation: float, quality: float, alpha: float, beta: float) -> float:
    """S = alpha * (U * R) + beta * D_norm."""
    return alpha * (relevance * reputation) + beta * quality
