"""
Tests for metrics app - AUC, NDCG, top-K metrics, time to target.
"""
import math

import numpy as np
import pytest

from .efficiency import time_to_target, total_simulated_time
from .ranking import auc, evaluate_rankings, ndcg_at_k, rank_candidates, topk_metrics, user_auc


def pair_counting_auc(relevant, other):
    score = 0.0
    for r in relevant:
        for o in other:
            score += 1.0 if r > o else 0.5 if r == o else 0.0
    return score / (len(relevant) * len(other))


def loop_ndcg(ranked, relevant, k):
    dcg = sum(1 / math.log2(rank + 1) for rank, item in enumerate(ranked[:k], start=1) if item in relevant)
    ideal = sum(1 / math.log2(rank + 1) for rank in range(1, min(k, len(relevant)) + 1))
    return dcg / ideal


@pytest.fixture
def random_instances():
    rng = np.random.default_rng(0)
    instances = []
    for _ in range(200):
        n = int(rng.integers(2, 100))
        # coarse scores force ties
        scores = rng.integers(0, 12, size=n) / 4.0
        relevant = set(rng.choice(n, size=int(rng.integers(1, n)), replace=False).tolist())
        instances.append((scores, relevant))
    return instances


class TestAuc:

    def test_perfect_ranking(self):
        assert user_auc([0.9, 0.8], [0.1, 0.2, 0.3]) == 1.0

    def test_all_tied(self):
        assert user_auc([0.5, 0.5], [0.5, 0.5, 0.5]) == 0.5

    def test_pair_counting(self):
        assert user_auc([0.9], [0.1, 0.95]) == 0.5

    def test_undefined_without_pairs(self):
        assert user_auc([], [0.1]) is None
        assert auc([([], [0.2]), ([0.3], [0.1])]) == 1.0

    def test_matches_oracle(self, random_instances):
        for scores, relevant in random_instances:
            rel = [scores[i] for i in range(len(scores)) if i in relevant]
            other = [scores[i] for i in range(len(scores)) if i not in relevant]
            assert user_auc(rel, other) == pytest.approx(pair_counting_auc(rel, other), abs=1e-12)

    def test_macro_average_ignores_order(self):
        rng = np.random.default_rng(1)
        users = [(rng.normal(size=3), rng.normal(size=5)) for _ in range(10)]
        assert auc(users) == pytest.approx(auc(users[::-1]), abs=1e-15)


class TestNdcg:

    def test_top_hit(self):
        assert ndcg_at_k([7, 1, 2], {7}, k=50) == 1.0

    def test_second_rank(self):
        assert ndcg_at_k([1, 7, 2], {7}, k=50) == pytest.approx(1 / math.log2(3), abs=1e-12)
        assert ndcg_at_k([1, 7, 2], {7}, k=50) == pytest.approx(0.6309, abs=1e-4)

    def test_miss_in_top_k(self):
        assert ndcg_at_k([1, 2, 3, 7], {7}, k=2) == 0.0

    def test_empty_relevant(self):
        assert ndcg_at_k([1, 2], set(), k=2) is None

    def test_matches_oracle(self, random_instances):
        for scores, relevant in random_instances:
            ranked = rank_candidates(scores, np.arange(len(scores))).tolist()
            for k in (5, 50):
                value = ndcg_at_k(ranked, relevant, k)
                assert value == pytest.approx(loop_ndcg(ranked, relevant, k), abs=1e-12)
                assert 0.0 <= value <= 1.0

    def test_one_iff_top_ranks_relevant(self):
        assert ndcg_at_k([3, 4, 1, 2], {3, 4}, k=3) == 1.0
        assert ndcg_at_k([3, 1, 4, 2], {3, 4}, k=3) < 1.0


class TestTopkMetrics:

    def test_half_recall(self):
        precision, recall, f1 = topk_metrics([1, 2, 3, 4], {1, 3, 8, 9}, k=4)
        assert recall == 0.5
        assert precision == 0.5
        assert f1 == pytest.approx(0.5)

    def test_full_precision(self):
        assert topk_metrics([1, 2], {1, 2, 3}, k=2)[0] == 1.0

    def test_empty_relevant_excluded(self):
        assert topk_metrics([1, 2], set(), k=2) is None

    def test_no_hits(self):
        assert topk_metrics([1, 2], {5}, k=2) == (0.0, 0.0, 0.0)

    def test_recall_oracle_and_hit_counts(self, random_instances):
        for scores, relevant in random_instances:
            ranked = rank_candidates(scores, np.arange(len(scores))).tolist()
            previous = 0.0
            for k in (1, 5, 20, 50):
                precision, recall, _ = topk_metrics(ranked, relevant, k)
                expected = len(set(ranked[:k]) & relevant) / len(relevant)
                assert recall == pytest.approx(expected, abs=1e-12)
                assert recall >= previous
                assert precision * k == pytest.approx(round(precision * k), abs=1e-9)
                assert recall * len(relevant) == pytest.approx(round(recall * len(relevant)), abs=1e-9)
                previous = recall


class TestRankCandidates:

    def test_ties_by_item_id(self):
        scores = np.array([0.5, 0.9, 0.5, 0.1])
        assert rank_candidates(scores, np.array([3, 2, 1, 0])).tolist() == [1, 0, 2, 3]


class TestEvaluateRankings:

    def test_excludes_train_items(self):
        scores = np.array([0.9, 0.8, 0.1, 0.7, 0.2])
        report = evaluate_rankings(
            [(0, scores)],
            exclude={0: np.array([0])},
            relevant={0: np.array([1])},
            num_items=5,
            k=2,
        )
        assert report.users == 1
        assert report.auc == 1.0
        assert report.ndcg == 1.0
        assert report.recall == 1.0
        assert report.precision == 0.5

    def test_users_without_test_items_skipped(self):
        scores = np.zeros(4)
        report = evaluate_rankings([(0, scores), (1, scores)], exclude={}, relevant={1: np.array([2])},
                                   num_items=4, k=2)
        assert report.users == 1
        assert report.auc == 0.5


class TestTimeToTarget:

    def test_first_crossing(self):
        assert time_to_target([(10.0, 0.5), (20.0, 0.83), (30.0, 0.9)], 0.82) == 20.0

    def test_zero_target(self):
        assert time_to_target([(4.0, None), (10.0, 0.5)], 0.0) == 10.0

    def test_never_reached(self):
        assert time_to_target([(10.0, 0.5), (20.0, 0.6)], 0.82) is None

    def test_total_time(self):
        assert total_simulated_time([1.5, 2.25, 0.25]) == 4.0
