"""
Trace-level efficiency metrics on the simulated clock.
"""
from typing import Iterable, Optional, Tuple


def time_to_target(points: Iterable[Tuple[float, Optional[float]]], target_auc: float) -> Optional[float]:
    """
    Clock of the first evaluation whose AUC reaches ``target_auc``.

    ``points`` are (clock, auc) pairs in trace order; auc is None for rounds
    without an evaluation. Returns None if the target is never reached.
    """
    for clock, value in points:
        if value is not None and value >= target_auc:
            return clock
    return None


def total_simulated_time(round_times: Iterable[float]) -> float:
    total = 0.0
    for duration in round_times:
        if duration < 0:
            raise ValueError(f"Round durations must be >= 0, got {duration}")
        total += duration
    return total
