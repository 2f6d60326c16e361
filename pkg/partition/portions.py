"""
Quantity-skewed partitioning of users across clients.

A portion vector fixes each client's share of interactions; its min/max ratio
is the User Balance Index (UBI) target. Whole users are then assigned to
clients so realized interaction counts track the portions.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from dataset.movielens import InteractionLog
from dataset.streams import PARTITION, keyed_rng

logger = logging.getLogger(__name__)

STRATEGIES = ('exponential', 'linear')


@dataclass(frozen=True)
class PortionVector:
    portions: tuple

    def __post_init__(self):
        p = np.asarray(self.portions, dtype=float)
        if p.ndim != 1 or len(p) < 1:
            raise ValueError("Portion vector must be a non-empty 1-D sequence")
        if (p <= 0).any():
            raise ValueError(f"Portions must be strictly positive, got {self.portions}")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"Portions must sum to 1, got {p.sum():.15f}")

    def __len__(self):
        return len(self.portions)

    @property
    def ubi(self) -> float:
        return min(self.portions) / max(self.portions)

    def target_counts(self, total: int) -> np.ndarray:
        """|D_i| = floor(p_i * |D|)."""
        return np.floor(np.asarray(self.portions) * total).astype(np.int64)


def _validate(num_clients: int, ubi: float):
    if num_clients < 2:
        raise ValueError(f"Need at least 2 clients, got {num_clients}")
    if not 0.0 < ubi <= 1.0:
        raise ValueError(f"UBI must lie in (0, 1], got {ubi}")


def _normalized(raw: np.ndarray) -> PortionVector:
    p = raw / raw.sum()
    # push rounding residue onto the largest share so the sum is exact
    p[np.argmax(p)] += 1.0 - p.sum()
    return PortionVector(tuple(float(v) for v in p))


def exponential_portions(num_clients: int, ubi: float) -> PortionVector:
    """Geometric portions p_i ∝ r^(i-1) with r = ubi^(1/(N-1))."""
    _validate(num_clients, ubi)
    ratio = ubi ** (1.0 / (num_clients - 1))
    return _normalized(ratio ** np.arange(num_clients, dtype=float))


def linear_portions(num_clients: int, ubi: float) -> PortionVector:
    """Raw weights evenly spaced from 1 down to ubi, normalized."""
    _validate(num_clients, ubi)
    return _normalized(np.linspace(1.0, ubi, num_clients))


def make_portions(strategy: str, num_clients: int, ubi: float) -> PortionVector:
    if strategy == 'exponential':
        return exponential_portions(num_clients, ubi)
    if strategy == 'linear':
        return linear_portions(num_clients, ubi)
    raise ValueError(f"Unknown partition strategy {strategy!r}; expected one of {STRATEGIES}")


@dataclass
class PartitionAssignment:
    """Per-client user sets; every user's interactions live on exactly one client."""
    client_users: List[np.ndarray]
    counts: np.ndarray
    targets: np.ndarray

    @property
    def num_clients(self) -> int:
        return len(self.client_users)

    def owner_of(self) -> Dict[int, int]:
        return {int(u): c for c, users in enumerate(self.client_users) for u in users}

    def interactions(self, log: InteractionLog, client: int) -> np.ndarray:
        """Indices into ``log`` of client ``client``'s interactions (D_i)."""
        return np.flatnonzero(np.isin(log.users, self.client_users[client]))


def assign_users(log: InteractionLog, portions: PortionVector, seed: int) -> PartitionAssignment:
    """
    Greedy deficit matching of whole users to clients.

    Users are shuffled by seed and stably re-sorted largest-first; each user
    goes to the client whose remaining deficit (target minus current count) is
    largest, lowest client id on ties.
    """
    num_clients = len(portions)
    if log.num_users < num_clients:
        raise ValueError(f"Cannot spread {log.num_users} users over {num_clients} clients")

    user_counts = log.user_counts()
    targets = portions.target_counts(len(log))
    shuffled = keyed_rng(seed, PARTITION).permutation(log.num_users)
    order = shuffled[np.argsort(-user_counts[shuffled], kind='stable')]

    counts = np.zeros(num_clients, dtype=np.int64)
    members: List[List[int]] = [[] for _ in range(num_clients)]
    for user in order:
        # argmax returns the first (lowest id) client among equal deficits
        client = int(np.argmax(targets - counts))
        members[client].append(int(user))
        counts[client] += user_counts[user]

    for client in range(num_clients):
        if members[client]:
            continue
        donor = max(range(num_clients), key=lambda c: (len(members[c]), -c))
        smallest = min(members[donor], key=lambda u: (user_counts[u], u))
        members[donor].remove(smallest)
        members[client].append(smallest)
        counts[donor] -= user_counts[smallest]
        counts[client] += user_counts[smallest]
        logger.warning(f"Client {client} received no users by deficit; moved user {smallest} from client {donor}")

    assignment = PartitionAssignment(
        client_users=[np.array(sorted(m), dtype=np.int64) for m in members],
        counts=counts,
        targets=targets,
    )
    logger.info(f"Assigned {log.num_users} users to {num_clients} clients; counts={counts.tolist()} "
                f"realized UBI={compute_ubi(assignment):.4f} target UBI={portions.ubi:.4f}")
    return assignment


def compute_ubi(assignment) -> float:
    """min |D_i| / max |D_i| over clients; accepts an assignment or raw counts."""
    counts = np.asarray(getattr(assignment, 'counts', assignment), dtype=float)
    if len(counts) == 0 or (counts <= 0).any():
        raise ValueError(f"Every client needs at least one interaction, got counts {counts.tolist()}")
    return float(counts.min() / counts.max())


def partition_report(assignment: PartitionAssignment) -> List[dict]:
    """Rows for the partition-report CSV."""
    ubi = compute_ubi(assignment)
    return [
        {
            'client_id': client,
            'num_users': len(users),
            'num_interactions': int(assignment.counts[client]),
            'realized_ubi': ubi,
        }
        for client, users in enumerate(assignment.client_users)
    ]
