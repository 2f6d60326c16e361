"""
MovieLens-100K ingestion, per-user temporal splits and negative sampling.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Collection, Dict, Iterator, List, Optional

import numpy as np

from .streams import SPLIT, SYNTHETIC, VALIDATION, keyed_rng

logger = logging.getLogger(__name__)


class DatasetParseError(ValueError):
    """Raised for a malformed ratings file; carries the 1-based line number."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Interaction:
    user_id: int
    item_id: int
    rating: int
    timestamp: int


@dataclass
class InteractionLog:
    """
    Rating tuples with dense 0-based user/item indices.

    ``user_labels[u]`` / ``item_labels[i]`` give back the original ids, so the
    remapping is a bijection in both directions.
    """
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    timestamps: np.ndarray
    user_labels: np.ndarray
    item_labels: np.ndarray
    positives: List[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        order = np.argsort(self.users, kind='stable')
        bounds = np.searchsorted(self.users[order], np.arange(self.num_users + 1))
        self.positives = [
            np.unique(self.items[order[bounds[u]:bounds[u + 1]]])
            for u in range(self.num_users)
        ]

    @property
    def num_users(self) -> int:
        return len(self.user_labels)

    @property
    def num_items(self) -> int:
        return len(self.item_labels)

    def __len__(self) -> int:
        return len(self.users)

    def __iter__(self) -> Iterator[Interaction]:
        for u, i, r, ts in zip(self.users, self.items, self.ratings, self.timestamps):
            yield Interaction(int(u), int(i), int(r), int(ts))

    @property
    def interactions(self) -> List[Interaction]:
        return list(self)

    def user_counts(self) -> np.ndarray:
        return np.bincount(self.users, minlength=self.num_users)

    def user_index(self, original_id: int) -> int:
        idx = int(np.searchsorted(self.user_labels, original_id))
        if idx >= self.num_users or self.user_labels[idx] != original_id:
            raise KeyError(f"Unknown user id {original_id}")
        return idx

    def item_index(self, original_id: int) -> int:
        idx = int(np.searchsorted(self.item_labels, original_id))
        if idx >= self.num_items or self.item_labels[idx] != original_id:
            raise KeyError(f"Unknown item id {original_id}")
        return idx

    @classmethod
    def from_records(cls, records: Collection[tuple]) -> 'InteractionLog':
        """Build a log from raw (user, item, rating, timestamp) tuples with original ids."""
        if not records:
            raise ValueError("Cannot build an interaction log from zero records")
        raw = np.asarray(list(records), dtype=np.int64)
        if raw.ndim != 2 or raw.shape[1] != 4:
            raise ValueError("Records must be (user, item, rating, timestamp) tuples")
        if ((raw[:, 2] < 1) | (raw[:, 2] > 5)).any():
            raise ValueError("Ratings must lie in {1, ..., 5}")
        user_labels, users = np.unique(raw[:, 0], return_inverse=True)
        item_labels, items = np.unique(raw[:, 1], return_inverse=True)
        return cls(
            users=users.astype(np.int64),
            items=items.astype(np.int64),
            ratings=raw[:, 2].copy(),
            timestamps=raw[:, 3].copy(),
            user_labels=user_labels,
            item_labels=item_labels,
        )


def load_movielens(path) -> InteractionLog:
    """
    Parse a tab-separated ``user item rating timestamp`` file (MovieLens ``u.data``).

    Blank lines are ignored; anything else that does not parse raises
    DatasetParseError with the offending line number.
    """
    path = Path(path)
    records = []
    with path.open('r', encoding='utf-8') as handle:
        try:
            lines = list(handle)
        except UnicodeDecodeError as exc:
            raise DatasetParseError(f"{path} is not UTF-8 text: {exc.reason} at byte {exc.start}") from exc
        for line_number, line in enumerate(lines, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split('\t')
            if len(fields) != 4:
                raise DatasetParseError(f"expected 4 tab-separated fields, got {len(fields)}", line_number)
            try:
                user, item, rating, timestamp = (int(f) for f in fields)
            except ValueError:
                raise DatasetParseError(f"non-integer field in {line!r}", line_number)
            if not 1 <= rating <= 5:
                raise DatasetParseError(f"rating {rating} outside 1..5", line_number)
            if timestamp < 0:
                raise DatasetParseError(f"negative timestamp {timestamp}", line_number)
            records.append((user, item, rating, timestamp))

    if not records:
        raise DatasetParseError(f"{path} contains no interactions")

    log = InteractionLog.from_records(records)
    logger.info(f"Loaded {len(log)} interactions: {log.num_users} users x {log.num_items} items from {path}")
    return log


def synth_interactions(num_users: int = 943, num_items: int = 1682, seed: int = 0,
                       min_count: int = 20, max_count: int = 737, mean_log_count: float = 4.0,
                       taste_rank: int = 4, taste_strength: float = 1.0) -> InteractionLog:
    """
    MovieLens-shaped log for offline runs: heavy-tailed per-user counts (at
    least ``min_count``), Zipf-like item popularity tilted by a low-rank user
    taste, random ratings and timestamps.

    Items a user rated are drawn without replacement through Gumbel top-k over
    log-popularity plus taste affinity.
    """
    if num_users < 1 or num_items < 1:
        raise ValueError("synth_interactions needs at least one user and one item")
    rng = keyed_rng(seed, SYNTHETIC)
    counts = min_count + np.round(rng.lognormal(mean_log_count, 1.0, size=num_users)).astype(int)
    counts = np.minimum(counts, min(max_count, num_items))

    log_popularity = -0.8 * np.log(np.arange(1, num_items + 1))
    user_taste = rng.normal(size=(num_users, taste_rank)) / np.sqrt(taste_rank)
    item_taste = rng.normal(size=(num_items, taste_rank))

    records = []
    for user in range(num_users):
        logits = log_popularity + taste_strength * (item_taste @ user_taste[user])
        keys = logits + rng.gumbel(size=num_items)
        items = np.argsort(-keys, kind='stable')[:counts[user]]
        ratings = rng.integers(1, 6, size=counts[user])
        stamps = rng.integers(874_724_710, 893_286_638, size=counts[user])
        records.extend(
            (user + 1, int(item) + 1, int(r), int(ts))
            for item, r, ts in zip(items, ratings, stamps)
        )
    log = InteractionLog.from_records(records)
    logger.info(f"Generated {len(log)} synthetic interactions: {log.num_users} users x {log.num_items} items")
    return log


@dataclass
class DatasetSplit:
    """Per-user train/test positives (and an optional server-held validation slice)."""
    train: Dict[int, np.ndarray]
    test: Dict[int, np.ndarray]
    ratio: float
    seed: int
    num_users: int
    num_items: int
    validation: Dict[int, np.ndarray] = field(default_factory=dict)

    def train_count(self) -> int:
        return sum(len(v) for v in self.train.values())

    def test_count(self) -> int:
        return sum(len(v) for v in self.test.values())

    def train_pairs(self, users: Optional[Collection[int]] = None) -> np.ndarray:
        """(n, 2) array of (user, item) train positives, users in ascending order."""
        users = sorted(self.train) if users is None else sorted(users)
        blocks = [
            np.column_stack([np.full(len(self.train[u]), u, dtype=np.int64), self.train[u]])
            for u in users if len(self.train.get(u, ())) > 0
        ]
        if not blocks:
            return np.empty((0, 2), dtype=np.int64)
        return np.concatenate(blocks)

    def positive_mask(self) -> np.ndarray:
        """Dense user x item boolean mask of train positives."""
        mask = np.zeros((self.num_users, self.num_items), dtype=bool)
        for u, items in self.train.items():
            mask[u, items] = True
        return mask

    def sample_negatives(self, user: int, k: int, rng: np.random.Generator) -> np.ndarray:
        return sample_negatives(self.train.get(user, ()), self.num_items, k, rng)


def split_per_user(log: InteractionLog, ratio: float, seed: int) -> DatasetSplit:
    """
    Temporal split: per user the ceil(ratio * count) earliest interactions go
    to train, the rest to test. The seed only orders timestamp ties.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"Split ratio must lie in (0, 1), got {ratio}")

    rng = keyed_rng(seed, SPLIT)
    tie_break = rng.random(len(log))
    # primary key user, then timestamp, then the seeded tie-break
    order = np.lexsort((tie_break, log.timestamps, log.users))
    sorted_users = log.users[order]
    sorted_items = log.items[order]
    bounds = np.searchsorted(sorted_users, np.arange(log.num_users + 1))

    train, test = {}, {}
    for u in range(log.num_users):
        items = sorted_items[bounds[u]:bounds[u + 1]]
        n_train = min(len(items), math.ceil(ratio * len(items) - 1e-9))
        train[u] = items[:n_train].copy()
        test[u] = items[n_train:].copy()

    return DatasetSplit(train=train, test=test, ratio=ratio, seed=seed,
                        num_users=log.num_users, num_items=log.num_items)


def carve_validation(split: DatasetSplit, fraction: float, seed: int) -> DatasetSplit:
    """
    Move floor(fraction * count) random train positives of every user into a
    server-held validation slice. Every user keeps at least one train positive.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"Validation fraction must lie in [0, 1), got {fraction}")

    train, validation = {}, {}
    for u, items in split.train.items():
        n_val = int(math.floor(fraction * len(items)))
        n_val = min(n_val, max(len(items) - 1, 0))
        if n_val == 0:
            train[u] = items.copy()
            continue
        picks = keyed_rng(seed, VALIDATION, u).permutation(len(items))
        held = np.zeros(len(items), dtype=bool)
        held[picks[:n_val]] = True
        train[u] = items[~held]
        validation[u] = items[held]

    logger.info(f"Carved validation slice: {sum(len(v) for v in validation.values())} interactions "
                f"from {len(validation)} users")
    return DatasetSplit(train=train, test=split.test, ratio=split.ratio, seed=split.seed,
                        num_users=split.num_users, num_items=split.num_items,
                        validation=validation)


def sample_negatives(positives: Collection[int], num_items: int, k: int,
                     rng: np.random.Generator) -> np.ndarray:
    """
    K uniformly drawn items outside ``positives``; without replacement when
    at least K candidates exist, with replacement otherwise.
    """
    if k < 0:
        raise ValueError(f"Negative count must be >= 0, got {k}")
    excluded = np.zeros(num_items, dtype=bool)
    excluded[np.asarray(list(positives), dtype=np.int64)] = True
    candidates = np.flatnonzero(~excluded)
    if len(candidates) == 0:
        raise ValueError("User has rated every item; no negatives to sample")
    if k == 0:
        return np.empty(0, dtype=np.int64)
    return rng.choice(candidates, size=k, replace=len(candidates) < k)


def sample_negative_block(users: np.ndarray, k: int, mask: np.ndarray,
                          rng: np.random.Generator, max_rounds: int = 100) -> np.ndarray:
    """
    Vectorized sample_negatives: one row of K negatives per entry of ``users``.

    ``mask`` is the user x item positive mask. Rows are redrawn until no entry
    is a positive or a repeat within its row; users with fewer than K
    candidates fall back to drawing with replacement.
    """
    users = np.asarray(users, dtype=np.int64)
    num_items = mask.shape[1]
    if k == 0:
        return np.empty((len(users), 0), dtype=np.int64)
    available = num_items - mask[users].sum(axis=1)
    if (available == 0).any():
        raise ValueError(f"User {int(users[np.argmin(available)])} has rated every item")
    allow_repeats = available < k

    def invalid_entries(block):
        invalid = mask[users[:, None], block]
        for j in range(1, k):
            repeated = (block[:, j:j + 1] == block[:, :j]).any(axis=1)
            invalid[:, j] |= repeated & ~allow_repeats
        return invalid

    negatives = rng.integers(0, num_items, size=(len(users), k))
    for _ in range(max_rounds):
        invalid = invalid_entries(negatives)
        if not invalid.any():
            return negatives
        negatives[invalid] = rng.integers(0, num_items, size=int(invalid.sum()))

    # Pathologically dense rows: finish them exactly
    for row in np.flatnonzero(invalid_entries(negatives).any(axis=1)):
        negatives[row] = sample_negatives(np.flatnonzero(mask[users[row]]), num_items, k, rng)
    return negatives
