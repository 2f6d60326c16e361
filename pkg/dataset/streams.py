"""
Keyed random streams.

Every consumer of randomness asks for its own generator keyed by the run seed
plus integers naming the purpose (round, client, item, ...). Streams are
never shared between callers.
"""
import numpy as np

# Stream purposes
FEATURES = 1
SPLIT = 2
VALIDATION = 3
PARTITION = 4
INIT = 5
LOCAL_TRAINING = 6
SELECTION = 7
CLUSTERING = 8
SUBSETS = 9
SYNTHETIC = 10
VALIDATION_NEGATIVES = 11


def keyed_rng(seed: int, *keys: int) -> np.random.Generator:
    """Generator seeded from (seed, *keys); identical keys give identical streams."""
    entropy = [int(seed)] + [int(k) for k in keys]
    if any(k < 0 for k in entropy):
        raise ValueError(f"Stream keys must be non-negative, got {entropy}")
    return np.random.default_rng(np.random.SeedSequence(entropy))
