"""
Selection policies behind a common interface.

Every policy keeps per-client arm statistics (fed with the per-arm rewards)
so traces of different policies are comparable; only the UCB family uses
them to decide.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional

import numpy as np

from dataset.streams import CLUSTERING, SELECTION, keyed_rng

from .arms import (
    ArmState,
    SelectionResult,
    nonstationary_count,
    nonstationary_mean,
    select_top_k,
    ucb_index,
    update_arm,
)
from .solvers import cluster_select, greedy_select, random_select

logger = logging.getLogger(__name__)

POLICY_KINDS = ('ucb', 'ucb_discounted', 'ucb_window', 'random', 'cluster', 'greedy_oracle')
POLICY_ALIASES = {'fedavg': 'random', 'rpfl': 'cluster'}


def resolve_kind(name: str) -> str:
    kind = POLICY_ALIASES.get(name, name)
    if kind not in POLICY_KINDS:
        raise ValueError(f"Unknown policy {name!r}; expected one of {POLICY_KINDS + tuple(POLICY_ALIASES)}")
    return kind


@dataclass(frozen=True)
class PolicyConfig:
    kind: str = 'ucb'
    rho: float = 1.0
    discount: float = 0.9
    window: Optional[int] = 20
    k: int = 4
    clusters: int = 2

    def __post_init__(self):
        resolve_kind(self.kind)
        if self.k < 1:
            raise ValueError(f"K must be >= 1, got {self.k}")
        if self.rho < 0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError(f"discount must lie in (0, 1], got {self.discount}")
        if self.window is not None and self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.clusters < 1:
            raise ValueError(f"clusters must be >= 1, got {self.clusters}")


@dataclass
class SelectionContext:
    """What the server knows before choosing round t's participants."""
    scores: Dict[int, float] = field(default_factory=dict)
    normalized_latency: Dict[int, float] = field(default_factory=dict)
    latest_updates: Dict[int, np.ndarray] = field(default_factory=dict)
    t_semi: float = 1.0
    kappa: float = 0.0


def softmax_probabilities(indices: Mapping[int, float]) -> Dict[int, float]:
    clients = sorted(indices)
    values = np.array([indices[c] for c in clients])
    weights = np.exp(values - values.max())
    weights /= weights.sum()
    return {c: float(w) for c, w in zip(clients, weights)}


class SelectionPolicy(ABC):

    def __init__(self, config: PolicyConfig, num_clients: int, seed: int):
        if num_clients < 1:
            raise ValueError(f"Need at least one client, got {num_clients}")
        self.config = config
        self.num_clients = num_clients
        self.seed = seed
        self.arms = [ArmState(client_id=c) for c in range(num_clients)]

    @property
    def name(self) -> str:
        return self.config.kind

    @abstractmethod
    def select(self, t: int, context: SelectionContext) -> SelectionResult:
        pass

    def update(self, t: int, rewards: Mapping[int, float]):
        for client in sorted(rewards):
            update_arm(self.arms[client], rewards[client], t)


class UCBPolicy(SelectionPolicy):
    """Top-K by UCB index over stationary, discounted or sliding-window means."""

    MODES = {'ucb': 'stationary', 'ucb_discounted': 'discounted', 'ucb_window': 'window'}

    @property
    def mode(self) -> str:
        return self.MODES[self.config.kind]

    def index(self, arm: ArmState, t: int) -> float:
        if self.mode == 'stationary':
            return ucb_index(arm, t, self.config.rho)
        options = dict(discount=self.config.discount, window=self.config.window)
        return ucb_index(
            arm, t, self.config.rho,
            mean=nonstationary_mean(arm.history, self.mode, t, **options),
            pulls=nonstationary_count(arm.history, self.mode, t, **options),
        )

    def select(self, t: int, context: SelectionContext = None) -> SelectionResult:
        indices = [self.index(arm, t) for arm in self.arms]
        result = select_top_k(self.arms, t, self.config.rho, self.config.k, indices=indices)
        result.probabilities = softmax_probabilities(result.indices)
        logger.debug(f"Round {t} UCB indices: " +
                     ", ".join(f"{c}={v:.4f}" for c, v in result.indices.items()))
        return result


class RandomPolicy(SelectionPolicy):

    def __init__(self, config: PolicyConfig, num_clients: int, seed: int):
        super().__init__(config, num_clients, seed)
        self.rng = keyed_rng(seed, SELECTION)

    def select(self, t: int, context: SelectionContext = None) -> SelectionResult:
        return random_select(self.num_clients, self.config.k, self.rng)


class ClusterPolicy(SelectionPolicy):
    """PCA + k-means over the latest delta each client uploaded."""

    def __init__(self, config: PolicyConfig, num_clients: int, seed: int):
        super().__init__(config, num_clients, seed)
        if config.clusters > num_clients:
            raise ValueError(f"clusters ({config.clusters}) exceeds the number of clients ({num_clients})")
        self.rng = keyed_rng(seed, CLUSTERING)

    def select(self, t: int, context: SelectionContext) -> SelectionResult:
        return cluster_select(context.latest_updates, self.config.k, self.config.clusters, self.rng,
                              num_clients=self.num_clients)


class GreedyOraclePolicy(SelectionPolicy):
    """Greedy maximization of the contribution/latency objective on the latest known scores."""

    def select(self, t: int, context: SelectionContext) -> SelectionResult:
        scores = [context.scores.get(c, 0.0) for c in range(self.num_clients)]
        latencies = [context.normalized_latency.get(c, 0.0) * context.t_semi for c in range(self.num_clients)]
        return greedy_select(scores, latencies, context.kappa, context.t_semi, self.config.k)


POLICY_CLASSES = {
    'ucb': UCBPolicy,
    'ucb_discounted': UCBPolicy,
    'ucb_window': UCBPolicy,
    'random': RandomPolicy,
    'cluster': ClusterPolicy,
    'greedy_oracle': GreedyOraclePolicy,
}


def build_policy(config: PolicyConfig, num_clients: int, seed: int) -> SelectionPolicy:
    kind = resolve_kind(config.kind)
    if kind != config.kind:
        config = replace(config, kind=kind)
    return POLICY_CLASSES[kind](config, num_clients, seed)
