"""
Server-side model quality: validation-slice AUC (the Q values behind
reputation) and full-ranking test evaluation.
"""
import logging
from typing import Dict, Iterator, Tuple

import numpy as np

from dataset.movielens import DatasetSplit, sample_negative_block
from dataset.streams import VALIDATION_NEGATIVES, keyed_rng
from metrics.ranking import DEFAULT_K, RankingReport, evaluate_rankings, user_auc
from recmodel.network import predict_pairs, score_matrix
from recmodel.params import HyperParams, ModelParams

logger = logging.getLogger(__name__)


def known_positives(split: DatasetSplit) -> Dict[int, np.ndarray]:
    """Per-user train plus validation positives: everything the server may not rank."""
    return {
        u: np.union1d(split.train.get(u, ()), split.validation.get(u, ())).astype(np.int64)
        for u in range(split.num_users)
    }


class ServerValidator:
    """
    Mean per-user AUC of validation positives against a fixed block of
    sampled negatives. The negatives are drawn once, so Q values of
    different models in a run are comparable.
    """

    def __init__(self, split: DatasetSplit, features, hyper: HyperParams,
                 negatives: int = 100, seed: int = 0):
        self.features = features
        self.hyper = hyper
        self.users = np.array(sorted(u for u, items in split.validation.items() if len(items)),
                              dtype=np.int64)
        if self.users.size == 0:
            raise ValueError("The validation slice is empty; raise validation_fraction")

        mask = np.zeros((split.num_users, split.num_items), dtype=bool)
        for u, items in known_positives(split).items():
            mask[u, items] = True
        self.negatives = sample_negative_block(self.users, negatives, mask,
                                               keyed_rng(seed, VALIDATION_NEGATIVES))
        positives = [split.validation[u] for u in self.users]
        self.bounds = np.concatenate([[0], np.cumsum([len(p) for p in positives])])
        self.positive_users = np.repeat(self.users, [len(p) for p in positives])
        self.positive_items = np.concatenate(positives).astype(np.int64)
        logger.info(f"Server validator: {len(self.users)} users, {len(self.positive_items)} positives, "
                    f"{self.negatives.shape[1]} negatives per user")

    def score(self, params: ModelParams) -> float:
        pos = predict_pairs(params, self.features, self.hyper, self.positive_users, self.positive_items)
        neg = predict_pairs(params, self.features, self.hyper,
                            np.repeat(self.users, self.negatives.shape[1]),
                            self.negatives.ravel()).reshape(self.negatives.shape)
        values = [user_auc(pos[self.bounds[row]:self.bounds[row + 1]], neg[row])
                  for row in range(len(self.users))]
        return float(np.mean(values))


def score_rows(params: ModelParams, features, hyper: HyperParams, users: np.ndarray,
               chunk: int = 16) -> Iterator[Tuple[int, np.ndarray]]:
    for start in range(0, len(users), chunk):
        block = users[start:start + chunk]
        for user, row in zip(block, score_matrix(params, features, hyper, block, chunk=chunk)):
            yield int(user), row


def evaluate_model(params: ModelParams, features, hyper: HyperParams, split: DatasetSplit,
                   k: int = DEFAULT_K, chunk: int = 16) -> RankingReport:
    """
    Full-ranking test metrics: every user's test items against all items the
    user has not interacted with in train (validation slice included).
    """
    users = np.array(sorted(u for u, items in split.test.items() if len(items)), dtype=np.int64)
    return evaluate_rankings(score_rows(params, features, hyper, users, chunk),
                             exclude=known_positives(split), relevant=split.test,
                             num_items=split.num_items, k=k)
