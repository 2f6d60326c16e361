"""
Sample-size weighted federated averaging of client deltas.
"""
from typing import Sequence

from recmodel.params import ModelParams
from recmodel.training import LocalUpdate


def aggregate_delta(updates: Sequence[LocalUpdate]) -> ModelParams:
    """
    sum_i (|B_i| / sum_j |B_j|) * delta_i, accumulated in client-id order so
    the result does not depend on the order updates arrived in.
    """
    if not updates:
        raise ValueError("Cannot aggregate an empty update list")
    ordered = sorted(updates, key=lambda u: u.client_id)
    total = sum(u.num_samples for u in ordered)
    if total <= 0:
        raise ValueError("Aggregation needs a positive total sample count")

    combined = ordered[0].delta.zeros_like()
    for update in ordered:
        combined = combined + update.delta.scaled(update.num_samples / total)
    return combined


def fedavg_aggregate(global_params: ModelParams, updates: Sequence[LocalUpdate]) -> ModelParams:
    """global + weighted mean of the deltas; raises on an empty list or shape mismatch."""
    return global_params + aggregate_delta(updates)