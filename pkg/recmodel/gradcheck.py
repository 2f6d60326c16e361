"""
Central finite-difference check of the analytic total_loss gradient.
"""
from typing import Dict, Optional

import numpy as np

from .network import Batch, total_loss
from .params import HyperParams, ModelParams


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """max |a - n| scaled by the larger of max |a|, max |n| and ``floor``."""
    if analytic.size == 0:
        return 0.0
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), floor)
    return float(np.abs(analytic - numeric).max() / scale)


def check_gradients(batch: Batch, params: ModelParams, features, hyper: HyperParams,
                    eps: float = 1e-4, max_entries: Optional[int] = None,
                    rng: Optional[np.random.Generator] = None) -> Dict[str, float]:
    """
    Per-tensor max relative error between analytic and central-difference
    gradients, in evaluation mode (no dropout).

    ``max_entries`` limits the checked coordinates per tensor to a random subset.
    """
    analytic = total_loss(batch, params, features, hyper).grads
    errors = {}
    for name, tensor in params.items():
        flat = tensor.reshape(-1)
        coordinates = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            coordinates = (rng or np.random.default_rng(0)).choice(flat.size, size=max_entries, replace=False)
        numeric = np.empty(len(coordinates))
        for slot, index in enumerate(coordinates):
            original = flat[index]
            flat[index] = original + eps
            upper = total_loss(batch, params, features, hyper, with_grad=False).value
            flat[index] = original - eps
            lower = total_loss(batch, params, features, hyper, with_grad=False).value
            flat[index] = original
            numeric[slot] = (upper - lower) / (2.0 * eps)
        errors[name] = relative_error(analytic[name].reshape(-1)[coordinates], numeric)
    return errors
