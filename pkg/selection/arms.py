"""
Bandit arm statistics and the UCB index family.

Each client is an arm. Rewards are timestamped with the round they were
observed in so discounted and sliding-window estimates can be replayed from
the history.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

MEAN_MODES = ('stationary', 'discounted', 'window')


@dataclass
class ArmState:
    """Running reward sum and pull count; the stationary mean is derived from both."""
    client_id: int
    pulls: int = 0
    total: float = 0.0
    history: List[Tuple[int, float]] = field(default_factory=list)

    def __post_init__(self):
        if self.pulls < 0:
            raise ValueError(f"Pull count must be >= 0, got {self.pulls}")
        if self.pulls == 0 and self.total != 0.0:
            raise ValueError(f"An arm with no pulls cannot carry reward total {self.total}")

    @classmethod
    def with_mean(cls, client_id: int, mean: float, pulls: int) -> 'ArmState':
        return cls(client_id=client_id, pulls=pulls, total=mean * pulls)

    @property
    def mean(self) -> float:
        return self.total / self.pulls if self.pulls else 0.0

    @property
    def rewards(self) -> List[float]:
        return [reward for _, reward in self.history]


@dataclass
class SelectionResult:
    selected: Tuple[int, ...]
    num_clients: int
    indices: Optional[Dict[int, float]] = None
    probabilities: Optional[Dict[int, float]] = None

    def __post_init__(self):
        if len(set(self.selected)) != len(self.selected):
            raise ValueError(f"Duplicate clients in selection {self.selected}")

    @property
    def action(self) -> np.ndarray:
        """Binary action vector a with a_n = 1 iff client n is selected."""
        vector = np.zeros(self.num_clients, dtype=np.int8)
        vector[list(self.selected)] = 1
        return vector


def ucb_index(arm: ArmState, t: int, rho: float, mean: float = None, pulls: float = None) -> float:
    """
    mean + rho * sqrt(ln t / (n + 1)).

    ``mean``/``pulls`` override the arm's stationary statistics for the
    discounted and sliding-window variants.
    """
    if t < 1:
        raise ValueError(f"Round index must be >= 1, got {t}")
    mean = arm.mean if mean is None else mean
    pulls = arm.pulls if pulls is None else pulls
    return mean + rho * math.sqrt(math.log(t) / (pulls + 1))


def update_arm(arm: ArmState, reward: float, t: int = None) -> ArmState:
    """Running-mean update in place; the reward is stamped with round ``t``."""
    if not math.isfinite(reward):
        raise ValueError(f"Reward must be finite, got {reward}")
    arm.total += reward
    arm.pulls += 1
    arm.history.append((arm.pulls if t is None else t, float(reward)))
    return arm


def _discount_weights(history: Sequence[Tuple[int, float]], t: int, discount: float) -> List[float]:
    if not 0.0 < discount <= 1.0:
        raise ValueError(f"Discount must lie in (0, 1], got {discount}")
    return [discount ** (t - s) for s, _ in history]


def _window(history: Sequence[Tuple[int, float]], window: Optional[int]):
    if window is None:
        return list(history)
    if window < 1:
        raise ValueError(f"Window must be >= 1, got {window}")
    return list(history)[-window:]


def nonstationary_mean(history: Sequence[Tuple[int, float]], mode: str, t: int,
                       discount: float = 1.0, window: Optional[int] = None) -> float:
    """
    Discounted: sum gamma^(t-s) r_s / sum gamma^(t-s) over the arm's pulls.
    Window: plain mean over the last W pulls (``window=None`` keeps all).
    An arm that was never pulled has mean 0.
    """
    if not history:
        return 0.0
    if mode == 'discounted':
        weights = _discount_weights(history, t, discount)
        numerator = 0.0
        denominator = 0.0
        for weight, (_, reward) in zip(weights, history):
            numerator += weight * reward
            denominator += weight
        return numerator / denominator
    if mode == 'window':
        recent = _window(history, window)
        total = 0.0
        for _, reward in recent:
            total += reward
        return total / len(recent)
    raise ValueError(f"Unknown non-stationary mode {mode!r}")


def nonstationary_count(history: Sequence[Tuple[int, float]], mode: str, t: int,
                        discount: float = 1.0, window: Optional[int] = None) -> float:
    """Effective pull count: discounted weight mass, or pulls inside the window."""
    if mode == 'discounted':
        count = 0.0
        for weight in _discount_weights(history, t, discount):
            count += weight
        return count
    if mode == 'window':
        return float(len(_window(history, window)))
    raise ValueError(f"Unknown non-stationary mode {mode!r}")


def select_top_k(arms: Sequence[ArmState], t: int, rho: float, k: int,
                 indices: Sequence[float] = None) -> SelectionResult:
    """
    The K arms with the largest indices; ties go to fewer pulls, then the
    lower client id. Precomputed ``indices`` (one per arm) replace the
    stationary UCB index.
    """
    if k < 1:
        raise ValueError(f"Selection budget K must be >= 1, got {k}")
    if indices is None:
        indices = [ucb_index(arm, t, rho) for arm in arms]
    ranked = sorted(range(len(arms)), key=lambda n: (-indices[n], arms[n].pulls, arms[n].client_id))
    chosen = tuple(arms[n].client_id for n in ranked[:min(k, len(arms))])
    return SelectionResult(
        selected=chosen,
        num_clients=len(arms),
        indices={arm.client_id: float(value) for arm, value in zip(arms, indices)},
    )
