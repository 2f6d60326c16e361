"""
Tests for partition app - portion vectors, user assignment, UBI.
"""
import numpy as np
import pytest

from dataset.movielens import InteractionLog

from .portions import (
    PortionVector,
    assign_users,
    compute_ubi,
    exponential_portions,
    linear_portions,
    make_portions,
    partition_report,
)


class TestExponentialPortions:

    def test_uniform_when_balanced(self):
        p = exponential_portions(8, 1.0)
        assert np.allclose(p.portions, 0.125, atol=1e-12)

    def test_two_clients(self):
        p = exponential_portions(2, 0.5)
        assert p.portions[0] == pytest.approx(2 / 3, abs=1e-12)
        assert p.portions[1] == pytest.approx(1 / 3, abs=1e-12)

    def test_geometric_ratio(self):
        p = exponential_portions(8, 0.1172)
        ratios = np.asarray(p.portions[1:]) / np.asarray(p.portions[:-1])
        assert np.allclose(ratios, 0.1172 ** (1 / 7), atol=1e-9)
        assert ratios[0] == pytest.approx(0.7362, abs=1e-4)

    @pytest.mark.parametrize("ubi", [0.1172, 0.0146, 0.5])
    def test_hits_ubi_and_decreases(self, ubi):
        p = exponential_portions(8, ubi)
        assert p.ubi == pytest.approx(ubi, abs=1e-9)
        assert sum(p.portions) == pytest.approx(1.0, abs=1e-12)
        assert all(a > b for a, b in zip(p.portions, p.portions[1:]))

    @pytest.mark.parametrize("ubi", [0.0, -0.1, 1.5])
    def test_invalid_ubi(self, ubi):
        with pytest.raises(ValueError):
            exponential_portions(8, ubi)


class TestLinearPortions:

    def test_uniform(self):
        p = linear_portions(3, 1.0)
        assert np.allclose(p.portions, 1 / 3, atol=1e-12)

    def test_half(self):
        p = linear_portions(3, 0.5)
        assert np.allclose(p.portions, (1 / 2.25, 0.75 / 2.25, 0.5 / 2.25), atol=1e-12)
        assert p.portions[0] == pytest.approx(0.4444, abs=1e-4)

    def test_two_clients_heavy_skew(self):
        p = linear_portions(2, 0.0146)
        assert p.portions[0] == pytest.approx(1 / 1.0146, abs=1e-12)
        assert p.portions[1] == pytest.approx(0.0146 / 1.0146, abs=1e-12)

    def test_invalid_ubi(self):
        with pytest.raises(ValueError):
            linear_portions(3, 0.0)

    def test_unknown_strategy(self):
        with pytest.raises(ValueError):
            make_portions('dirichlet', 3, 0.5)


class TestPortionVector:

    def test_rejects_bad_sum(self):
        with pytest.raises(ValueError):
            PortionVector((0.5, 0.4))

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            PortionVector((1.0, 0.0))


class TestAssignUsers:

    def test_equal_users_one_per_client(self):
        records = [(u, i, 3, 0) for u in range(8) for i in range(5)]
        log = InteractionLog.from_records(records)
        assignment = assign_users(log, exponential_portions(8, 1.0), seed=0)
        assert [len(users) for users in assignment.client_users] == [1] * 8
        assert compute_ubi(assignment) == 1.0

    def test_fewer_users_than_clients(self):
        log = InteractionLog.from_records([(1, 1, 3, 0), (2, 1, 3, 0)])
        with pytest.raises(ValueError):
            assign_users(log, exponential_portions(3, 0.5), seed=0)

    def test_cover_and_disjoint(self, synthetic_log):
        log = synthetic_log(num_users=200, num_items=400, seed=4)
        assignment = assign_users(log, linear_portions(5, 0.2), seed=3)
        users = np.concatenate(assignment.client_users)
        assert sorted(users.tolist()) == list(range(log.num_users))
        assert assignment.counts.sum() == len(log)
        for client in range(assignment.num_clients):
            assert len(assignment.interactions(log, client)) == assignment.counts[client]
            assert len(assignment.client_users[client]) >= 1

    def test_deterministic(self, synthetic_log):
        log = synthetic_log(num_users=100, num_items=300, seed=5)
        a = assign_users(log, exponential_portions(4, 0.3), seed=9)
        b = assign_users(log, exponential_portions(4, 0.3), seed=9)
        assert all(np.array_equal(x, y) for x, y in zip(a.client_users, b.client_users))

    @pytest.mark.parametrize("strategy", ["exponential", "linear"])
    @pytest.mark.parametrize("target", [0.1172, 0.0146])
    def test_realized_ubi_tracks_target(self, synthetic_log, strategy, target):
        log = synthetic_log(seed=11)
        for seed in range(10):
            assignment = assign_users(log, make_portions(strategy, 8, target), seed=seed)
            assert 0.9 * target <= compute_ubi(assignment) <= 1.1 * target

    def test_partition_report_rows(self, synthetic_log):
        log = synthetic_log(num_users=50, num_items=200, seed=6)
        assignment = assign_users(log, linear_portions(3, 0.5), seed=0)
        rows = partition_report(assignment)
        assert [r['client_id'] for r in rows] == [0, 1, 2]
        assert sum(r['num_interactions'] for r in rows) == len(log)
        assert all(r['realized_ubi'] == compute_ubi(assignment) for r in rows)


class TestComputeUbi:

    def test_half(self):
        assert compute_ubi([5, 10]) == 0.5

    def test_equal(self):
        assert compute_ubi([7, 7, 7]) == 1.0

    def test_three_clients(self):
        assert compute_ubi([117, 1000, 500]) == pytest.approx(0.117, abs=1e-12)

    def test_empty_client(self):
        with pytest.raises(ValueError):
            compute_ubi([0, 10])
