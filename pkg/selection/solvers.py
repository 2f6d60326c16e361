"""
Rewards and one-shot selection solvers: random, clustering baseline,
greedy and exhaustive maximization of the contribution/latency objective.
"""
import logging
from itertools import combinations
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from sklearn.cluster import KMeans
from sklearn.decomposition import PCA

from .arms import SelectionResult

logger = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 15


def per_arm_reward(score: float, normalized_latency: float, kappa: float) -> float:
    """r_i = S_i - kappa * T~_i; negative rewards are allowed."""
    return score - kappa * normalized_latency


def round_reward(scores: Sequence[float], max_latency: float, t_semi: float, kappa: float) -> float:
    """sum S_i - kappa * max latency / T_semi over the selected clients."""
    if len(scores) == 0:
        raise ValueError("round_reward needs a non-empty selection")
    if t_semi <= 0:
        raise ValueError(f"T_semi must be positive, got {t_semi}")
    return float(np.sum(scores)) - kappa * max_latency / t_semi


def selection_objective(subset: Sequence[int], scores: Sequence[float], latencies: Sequence[float],
                        kappa: float, t_semi: float) -> float:
    """Contribution minus latency penalty of a subset; the empty set scores 0."""
    if not subset:
        return 0.0
    subset = list(subset)
    return float(np.sum(np.asarray(scores)[subset])) - kappa * float(np.max(np.asarray(latencies)[subset])) / t_semi


def random_select(num_clients: int, k: int, rng: np.random.Generator) -> SelectionResult:
    """Uniform K-subset without replacement."""
    if k < 1:
        raise ValueError(f"Selection budget K must be >= 1, got {k}")
    k = min(k, num_clients)
    chosen = rng.choice(num_clients, size=k, replace=False)
    return SelectionResult(selected=tuple(sorted(int(c) for c in chosen)), num_clients=num_clients,
                           probabilities={c: k / num_clients for c in range(num_clients)})


def cluster_select(updates: Union[Sequence[Optional[np.ndarray]], Mapping[int, np.ndarray]],
                   k: int, k_clusters: int, rng: np.random.Generator,
                   num_clients: int = None, iterations: int = 20) -> SelectionResult:
    """
    Simplified gradient-clustering baseline.

    Flat deltas are projected onto two principal components and grouped with
    seeded k-means. Clusters are visited in order of their lowest client id
    and each contributes its next member closest to the centroid until K
    clients are chosen. Clients without a delta use the zero vector.
    """
    if isinstance(updates, Mapping):
        if num_clients is None:
            raise ValueError("num_clients is required when updates are given as a mapping")
        rows = [updates.get(c) for c in range(num_clients)]
    else:
        rows = list(updates)
    n = len(rows)
    if k < 1:
        raise ValueError(f"Selection budget K must be >= 1, got {k}")
    if not 1 <= k_clusters <= n:
        raise ValueError(f"k_clusters must lie in [1, {n}], got {k_clusters}")

    width = max((len(r) for r in rows if r is not None), default=1)
    matrix = np.vstack([np.zeros(width) if r is None else np.asarray(r, dtype=float) for r in rows])
    if np.ptp(matrix, axis=0).any():
        projected = PCA(n_components=min(2, n, width)).fit_transform(matrix)
    else:
        projected = np.zeros((n, 1))

    distinct = len(np.unique(projected, axis=0))
    clusters = min(k_clusters, distinct)
    if clusters == 1:
        labels = np.zeros(n, dtype=int)
        centroids = projected.mean(axis=0, keepdims=True)
    else:
        model = KMeans(n_clusters=clusters, n_init=1, max_iter=iterations,
                       random_state=int(rng.integers(0, 2 ** 31 - 1))).fit(projected)
        labels, centroids = model.labels_, model.cluster_centers_

    distance = np.linalg.norm(projected - centroids[labels], axis=1)
    groups = [
        sorted(np.flatnonzero(labels == label).tolist(), key=lambda c: (distance[c], c))
        for label in np.unique(labels)
    ]
    groups.sort(key=min)

    chosen = []
    budget = min(k, n)
    depth = 0
    while len(chosen) < budget:
        for group in groups:
            if depth < len(group) and len(chosen) < budget:
                chosen.append(group[depth])
        depth += 1
    logger.debug(f"Cluster selection: {clusters} clusters {[g for g in groups]} -> {chosen}")
    return SelectionResult(selected=tuple(int(c) for c in chosen), num_clients=n)


def greedy_select(scores: Sequence[float], latencies: Sequence[float], kappa: float,
                  t_semi: float, k: int) -> SelectionResult:
    """
    Grow the selection one client at a time, always adding the client with the
    largest marginal objective gain (lowest id on ties), until K are chosen.
    """
    n = len(scores)
    if t_semi <= 0:
        raise ValueError(f"T_semi must be positive, got {t_semi}")
    if k < 1:
        raise ValueError(f"Selection budget K must be >= 1, got {k}")
    chosen = []
    for _ in range(min(k, n)):
        best, best_value = None, -np.inf
        for client in range(n):
            if client in chosen:
                continue
            value = selection_objective(chosen + [client], scores, latencies, kappa, t_semi)
            # same order as the marginal gain
            if value > best_value:
                best, best_value = client, value
        chosen.append(best)
    return SelectionResult(selected=tuple(chosen), num_clients=n)


def brute_force_select(scores: Sequence[float], latencies: Sequence[float], kappa: float,
                       t_semi: float, k: int) -> SelectionResult:
    """Exact maximizer over all size-K subsets (first in lexicographic order on ties)."""
    n = len(scores)
    if n > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute_force_select is limited to {BRUTE_FORCE_LIMIT} clients, got {n}")
    if t_semi <= 0:
        raise ValueError(f"T_semi must be positive, got {t_semi}")
    if k < 1:
        raise ValueError(f"Selection budget K must be >= 1, got {k}")
    best, best_value = None, -np.inf
    for subset in combinations(range(n), min(k, n)):
        value = selection_objective(subset, scores, latencies, kappa, t_semi)
        if value > best_value:
            best, best_value = subset, value
    return SelectionResult(selected=tuple(best), num_clients=n)
