"""
Latency model: compute and communication time per client, straggler-bound
round time and normalization against the semi-asynchronous boundary.
"""
import logging
from dataclasses import dataclass
from itertools import combinations
from math import comb
from typing import Sequence, Union

import numpy as np

from dataset.streams import SUBSETS, keyed_rng

from .fleet import ClientProfile

logger = logging.getLogger(__name__)

EXACT_SUBSET_LIMIT = 10_000
SAMPLED_SUBSETS = 1_000


@dataclass(frozen=True)
class LatencyEstimate:
    t_train: float
    t_comm: float

    def __post_init__(self):
        if self.t_train < 0 or self.t_comm < 0:
            raise ValueError(f"Latencies must be >= 0, got ({self.t_train}, {self.t_comm})")

    @property
    def total(self) -> float:
        return self.t_train + self.t_comm


def compute_time(workload: float, profile: Union[ClientProfile, float]) -> float:
    """Seconds to process ``workload`` sample-epochs at the profile's speed (or a raw speed)."""
    speed = profile.speed if isinstance(profile, ClientProfile) else float(profile)
    if speed <= 0:
        raise ValueError(f"Speed must be positive, got {speed}")
    if workload < 0:
        raise ValueError(f"Workload must be >= 0, got {workload}")
    return workload / speed


def comm_time(payload_bytes: int, bandwidth_mbps: float, multiplier: float = 1.0) -> float:
    """(bytes * 8) / (Mbps * 1e6), scaled by the transfer multiplier."""
    if bandwidth_mbps <= 0:
        raise ValueError(f"Bandwidth must be positive, got {bandwidth_mbps}")
    if payload_bytes < 0 or multiplier < 0:
        raise ValueError("Payload and multiplier must be >= 0")
    return multiplier * payload_bytes * 8.0 / (bandwidth_mbps * 1e6)


def round_time(latencies: Sequence[LatencyEstimate]) -> float:
    """Straggler bound: max over the selected clients of T_train + T_comm."""
    if not latencies:
        raise ValueError("round_time needs at least one selected client")
    return max(latency.total for latency in latencies)


def normalized_time(t_round: float, t_semi: float) -> float:
    if t_semi <= 0:
        raise ValueError(f"T_semi must be positive, got {t_semi}")
    return t_round / t_semi


def estimate_latency(profile: ClientProfile, num_samples: int, epochs: int, payload_bytes: int,
                     multiplier: float = 2.0) -> LatencyEstimate:
    return LatencyEstimate(
        t_train=compute_time(num_samples * epochs, profile),
        t_comm=comm_time(payload_bytes, profile.bandwidth_mbps, multiplier),
    )


def semi_boundary(estimates: Sequence[LatencyEstimate], k: int, factor: float = 1.5, seed: int = 0) -> float:
    """
    ``factor`` times the median straggler latency over size-K client subsets.

    Subsets are enumerated exactly when there are at most 10 000 of them,
    otherwise 1 000 are sampled from a seeded stream.
    """
    n = len(estimates)
    if n == 0:
        raise ValueError("semi_boundary needs at least one client estimate")
    k = min(max(k, 1), n)
    totals = np.array([e.total for e in estimates])
    if comb(n, k) <= EXACT_SUBSET_LIMIT:
        maxima = [totals[list(subset)].max() for subset in combinations(range(n), k)]
    else:
        rng = keyed_rng(seed, SUBSETS)
        maxima = [totals[rng.choice(n, size=k, replace=False)].max() for _ in range(SAMPLED_SUBSETS)]
    boundary = factor * float(np.median(maxima))
    if boundary <= 0:
        raise ValueError(f"Degenerate T_semi {boundary}: every client estimate is zero")
    logger.info(f"T_semi = {boundary:.4f}s ({factor} x median straggler latency over {k}-client subsets)")
    return boundary
