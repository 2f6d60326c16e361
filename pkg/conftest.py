"""
Shared pytest fixtures: seeded synthetic interaction logs.
"""
import numpy as np
import pytest

from dataset.movielens import InteractionLog, synth_interactions


def build_clustered_log(num_users=40, num_items=60, per_user=15, seed=0):
    """
    Small log with two taste groups: even users rate mostly the first half of
    the catalogue, odd users the second half. Learnable in a few epochs.
    """
    rng = np.random.default_rng(seed)
    half = num_items // 2
    records = []
    for user in range(num_users):
        own = np.arange(half) if user % 2 == 0 else np.arange(half, num_items)
        items = rng.choice(own, size=min(per_user, len(own)), replace=False)
        for offset, item in enumerate(items):
            records.append((user + 1, int(item) + 1, int(rng.integers(1, 6)), 1_000 + offset))
    return InteractionLog.from_records(records)


@pytest.fixture
def synthetic_log():
    return synth_interactions


@pytest.fixture
def clustered_log():
    return build_clustered_log()


@pytest.fixture
def make_clustered_log():
    return build_clustered_log
