"""
Ranking-quality metrics over full candidate rankings.

Candidates for a user are all items minus that user's train positives; the
relevant set is the user's test positives. Users without relevant items are
left out of every macro-average.
"""
from dataclasses import asdict, dataclass
from typing import Collection, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

DEFAULT_K = 50


def user_auc(relevant_scores: Sequence[float], other_scores: Sequence[float]) -> Optional[float]:
    """(concordant pairs + 0.5 * tied pairs) / all pairs; None without both kinds of items."""
    relevant_scores = np.asarray(relevant_scores, dtype=float)
    other_scores = np.sort(np.asarray(other_scores, dtype=float))
    if relevant_scores.size == 0 or other_scores.size == 0:
        return None
    below = np.searchsorted(other_scores, relevant_scores, side='left')
    not_above = np.searchsorted(other_scores, relevant_scores, side='right')
    concordant = int(below.sum())
    ties = int((not_above - below).sum())
    return (concordant + 0.5 * ties) / (relevant_scores.size * other_scores.size)


def auc(per_user: Iterable[Tuple[Sequence[float], Sequence[float]]]) -> Optional[float]:
    """Macro-average of user_auc over users with at least one pair."""
    values = [v for v in (user_auc(rel, other) for rel, other in per_user) if v is not None]
    return float(np.mean(values)) if values else None


def rank_candidates(scores: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Candidates by descending score, lower item id first on ties."""
    candidates = np.asarray(candidates, dtype=np.int64)
    order = np.lexsort((candidates, -np.asarray(scores)[candidates]))
    return candidates[order]


def _hits(ranked: Sequence[int], relevant: Collection[int], k: int) -> np.ndarray:
    relevant = set(int(i) for i in relevant)
    return np.array([int(item) in relevant for item in list(ranked)[:k]], dtype=bool)


def ndcg_at_k(ranked: Sequence[int], relevant: Collection[int], k: int = DEFAULT_K) -> Optional[float]:
    """Binary-gain NDCG@K; None when the relevant set is empty."""
    if len(relevant) == 0:
        return None
    hits = _hits(ranked, relevant, k)
    discounts = 1.0 / np.log2(np.arange(2, k + 2))
    dcg = float(discounts[:len(hits)][hits].sum())
    ideal = float(discounts[:min(k, len(relevant))].sum())
    return dcg / ideal


def topk_metrics(ranked: Sequence[int], relevant: Collection[int],
                 k: int = DEFAULT_K) -> Optional[Tuple[float, float, float]]:
    """(precision@K, recall@K, F1@K); None when the relevant set is empty."""
    if len(relevant) == 0:
        return None
    hits = int(_hits(ranked, relevant, k).sum())
    precision = hits / k
    recall = hits / len(relevant)
    f1 = 0.0 if hits == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


@dataclass
class RankingReport:
    auc: Optional[float]
    ndcg: Optional[float]
    recall: Optional[float]
    precision: Optional[float]
    f1: Optional[float]
    users: int
    k: int = DEFAULT_K

    def as_dict(self) -> dict:
        return asdict(self)


def _mean(values):
    return float(np.mean(values)) if values else None


def evaluate_rankings(score_rows: Iterable[Tuple[int, np.ndarray]], exclude: Mapping[int, np.ndarray],
                      relevant: Mapping[int, np.ndarray], num_items: int, k: int = DEFAULT_K) -> RankingReport:
    """
    Full-ranking evaluation. ``score_rows`` yields (user, scores over every
    item); ``exclude`` holds the items that are never candidates for a user.
    """
    aucs, ndcgs, recalls, precisions, f1s = [], [], [], [], []
    for user, scores in score_rows:
        targets = np.asarray(relevant.get(user, ()), dtype=np.int64)
        if targets.size == 0:
            continue
        candidate_mask = np.ones(num_items, dtype=bool)
        candidate_mask[np.asarray(exclude.get(user, ()), dtype=np.int64)] = False
        candidates = np.flatnonzero(candidate_mask)
        relevant_mask = np.zeros(num_items, dtype=bool)
        relevant_mask[targets] = True
        relevant_mask &= candidate_mask

        value = user_auc(scores[relevant_mask], scores[candidate_mask & ~relevant_mask])
        if value is not None:
            aucs.append(value)
        ranked = rank_candidates(scores, candidates)[:k]
        ndcgs.append(ndcg_at_k(ranked, targets, k))
        precision, recall, f1 = topk_metrics(ranked, targets, k)
        precisions.append(precision)
        recalls.append(recall)
        f1s.append(f1)

    return RankingReport(auc=_mean(aucs), ndcg=_mean(ndcgs), recall=_mean(recalls),
                         precision=_mean(precisions), f1=_mean(f1s), users=len(ndcgs), k=k)
