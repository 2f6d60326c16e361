"""
Reputation ledger: per-client utility state carried across rounds, and the
observation vectors the selector sees.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional

import numpy as np

from .scoring import (
    UtilityWeights,
    aggregate_score,
    data_quality,
    minmax_normalize,
    update_relevance,
    update_reputation,
)

logger = logging.getLogger(__name__)

OBSERVATION_FIELDS = ('reputation_prev', 'gain', 'relevance', 'quality_norm', 't_train', 't_comm')


@dataclass
class ClientObservation:
    client_id: int
    raw: np.ndarray
    standardized: np.ndarray

    def as_row(self) -> dict:
        row = {'client_id': self.client_id}
        row.update({name: float(v) for name, v in zip(OBSERVATION_FIELDS, self.raw)})
        row.update({f'{name}_z': float(v) for name, v in zip(OBSERVATION_FIELDS, self.standardized)})
        return row


@dataclass
class ClientRecord:
    reputation: float = 0.0
    reputation_prev: float = 0.0
    gain: float = 0.0
    relevance: float = 0.0
    quality: Optional[float] = None
    quality_norm: float = 0.0
    observations: List[ClientObservation] = field(default_factory=list)


class ReputationLedger:
    """
    Owned by the orchestrator and mutated only between rounds.

    Every client starts neutral (R_0 = 0). Normalized data quality is
    recomputed over every client that has reported a quality value.
    """

    def __init__(self, client_ids: Iterable[int], weights: UtilityWeights = None):
        self.weights = weights or UtilityWeights()
        self.records: Dict[int, ClientRecord] = {int(c): ClientRecord() for c in client_ids}

    def __contains__(self, client: int) -> bool:
        return client in self.records

    def __getitem__(self, client: int) -> ClientRecord:
        if client not in self.records:
            raise KeyError(f"Client {client} is not tracked by the ledger")
        return self.records[client]

    @property
    def client_ids(self) -> List[int]:
        return sorted(self.records)

    def begin_round(self):
        for record in self.records.values():
            record.reputation_prev = record.reputation

    def record_contribution(self, client: int, q_client: float, q_prev_global: float) -> float:
        record = self[client]
        record.reputation, record.gain = update_reputation(
            record.reputation, q_client, q_prev_global, self.weights.gamma)
        return record.reputation

    def record_relevance(self, client: int, deviation: float, improved: bool) -> float:
        record = self[client]
        record.relevance = update_relevance(deviation, improved)
        return record.relevance

    def record_quality(self, client: int, losses) -> float:
        record = self[client]
        record.quality = data_quality(losses)
        self._normalize_quality()
        return record.quality

    def _normalize_quality(self):
        reported = [c for c in self.client_ids if self.records[c].quality is not None]
        normalized = minmax_normalize([self.records[c].quality for c in reported])
        for client, value in zip(reported, normalized):
            self.records[client].quality_norm = float(value)

    def score(self, client: int) -> float:
        record = self[client]
        return aggregate_score(record.relevance, record.reputation, record.quality_norm,
                               self.weights.alpha, self.weights.beta)

    def observe(self, observation: ClientObservation):
        self[observation.client_id].observations.append(observation)

    def snapshot(self, client: int) -> dict:
        record = self[client]
        return {
            'reputation': record.reputation,
            'gain': record.gain,
            'relevance': record.relevance,
            'quality': record.quality if record.quality is not None else 0.0,
            'quality_norm': record.quality_norm,
            'score': self.score(client),
        }


def _raw_vector(ledger: ReputationLedger, client: int, latency) -> np.ndarray:
    record = ledger[client]
    return np.array([record.reputation_prev, record.gain, record.relevance, record.quality_norm,
                     latency.t_train, latency.t_comm], dtype=float)


def build_observations(ledger: ReputationLedger, latencies: Mapping[int, object]) -> Dict[int, ClientObservation]:
    """
    Observation vectors for every client in ``latencies`` (the available
    pool), z-scored per dimension over that pool with population statistics.
    Zero-variance dimensions standardize to 0.
    """
    pool = sorted(latencies)
    raw = np.vstack([_raw_vector(ledger, client, latencies[client]) for client in pool])
    mean = raw.mean(axis=0)
    std = raw.std(axis=0)
    safe = np.where(std > 0, std, 1.0)
    standardized = np.where(std > 0, (raw - mean) / safe, 0.0)
    return {
        client: ClientObservation(client_id=client, raw=raw[row], standardized=standardized[row])
        for row, client in enumerate(pool)
    }


def build_observation(ledger: ReputationLedger, client: int, latencies: Mapping[int, object]) -> ClientObservation:
    if client not in latencies:
        raise KeyError(f"Client {client} has no latency estimate in the current pool")
    return build_observations(ledger, latencies)[client]
