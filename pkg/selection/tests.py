"""
Tests for selection app - UCB arms, solvers and policies.
"""
import math
from itertools import product

import numpy as np
import pytest

from .arms import (
    ArmState,
    SelectionResult,
    nonstationary_count,
    nonstationary_mean,
    select_top_k,
    ucb_index,
    update_arm,
)
from .policies import (
    PolicyConfig,
    SelectionContext,
    UCBPolicy,
    build_policy,
    resolve_kind,
)
from .solvers import (
    brute_force_select,
    cluster_select,
    greedy_select,
    per_arm_reward,
    random_select,
    round_reward,
    selection_objective,
)


def arms_with(means, pulls=None):
    pulls = pulls or [1] * len(means)
    return [ArmState.with_mean(c, m, n) for c, (m, n) in enumerate(zip(means, pulls))]


class TestUcbIndex:

    def test_first_round_is_zero(self):
        assert ucb_index(ArmState(0), t=1, rho=1.0) == 0.0

    def test_hand_computed(self):
        arm = ArmState.with_mean(0, 0.5, 10)
        assert ucb_index(arm, t=100, rho=1.0) == pytest.approx(0.5 + math.sqrt(math.log(100) / 11), abs=1e-12)
        assert ucb_index(arm, t=100, rho=1.0) == pytest.approx(1.1470, abs=1e-4)

    def test_no_exploration(self):
        arm = ArmState.with_mean(0, 0.37, 3)
        assert ucb_index(arm, t=50, rho=0.0) == pytest.approx(0.37, abs=1e-12)

    def test_round_zero_rejected(self):
        with pytest.raises(ValueError):
            ucb_index(ArmState(0), t=0, rho=1.0)


class TestSelectTopK:

    def test_fresh_arms_pick_lowest_ids(self):
        result = select_top_k(arms_with([0.0] * 6), t=1, rho=1.0, k=3)
        assert result.selected == (0, 1, 2)

    def test_largest_indices(self):
        arms = arms_with([1.1, 0.8, 2.0], pulls=[4, 4, 4])
        result = select_top_k(arms, t=1, rho=1.0, k=2)
        assert set(result.selected) == {2, 0}

    def test_budget_exceeds_clients(self):
        result = select_top_k(arms_with([0.3, 0.1]), t=5, rho=1.0, k=5)
        assert set(result.selected) == {0, 1}
        assert result.action.tolist() == [1, 1]

    def test_ties_prefer_fewer_pulls(self):
        arms = arms_with([0.5, 0.5, 0.5], pulls=[3, 1, 2])
        result = select_top_k(arms, t=1, rho=1.0, k=1)
        assert result.selected == (1,)

    def test_shift_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            means = rng.normal(size=8)
            pulls = rng.integers(1, 20, size=8).tolist()
            base = select_top_k(arms_with(means.tolist(), pulls), t=30, rho=0.7, k=3)
            shifted = select_top_k(arms_with((means + 4.2).tolist(), pulls), t=30, rho=0.7, k=3)
            assert set(base.selected) == set(shifted.selected)

    @pytest.mark.parametrize("k", [1, 3, 8, 12])
    def test_action_vector_has_min_k_n_ones(self, k):
        result = select_top_k(arms_with(np.linspace(0, 1, 8).tolist()), t=3, rho=1.0, k=k)
        assert result.action.sum() == min(k, 8)

    def test_duplicate_selection_rejected(self):
        with pytest.raises(ValueError):
            SelectionResult(selected=(1, 1), num_clients=3)


class TestUpdateArm:

    def test_fresh_arm(self):
        arm = update_arm(ArmState(0), 0.4)
        assert (arm.mean, arm.pulls) == (0.4, 1)

    def test_running_mean(self):
        arm = update_arm(ArmState(0, pulls=2, total=1.0), 0.2)
        assert arm.mean == pytest.approx(0.4, abs=1e-12)
        assert arm.pulls == 3

    def test_non_finite_reward(self):
        with pytest.raises(ValueError):
            update_arm(ArmState(0), float('nan'))

    def test_mean_matches_history(self):
        rng = np.random.default_rng(1)
        arm = ArmState(0)
        for t, reward in enumerate(rng.normal(size=300), start=1):
            update_arm(arm, float(reward), t)
        assert arm.mean == pytest.approx(np.mean(arm.rewards), abs=1e-12)

    def test_mean_follows_total(self):
        arm = update_arm(ArmState.with_mean(0, 0.5, 4), 1.0)
        assert (arm.total, arm.pulls) == (3.0, 5)
        assert arm.mean == pytest.approx(0.6, abs=1e-12)
        arm.total = 10.0
        assert arm.mean == 2.0
        update_arm(arm, 2.0)
        assert arm.mean == 2.0

    def test_mean_is_read_only(self):
        with pytest.raises(AttributeError):
            ArmState(0).mean = 0.3

    def test_unpulled_arm_with_total_rejected(self):
        with pytest.raises(ValueError):
            ArmState(0, pulls=0, total=0.5)


class TestNonstationaryMean:

    def test_discount_one_is_plain_mean(self):
        history = [(1, 0.2), (3, 0.9), (4, 0.4)]
        assert nonstationary_mean(history, 'discounted', t=5, discount=1.0) == pytest.approx(0.5, abs=1e-12)

    def test_wide_window_is_plain_mean(self):
        history = [(1, 0.2), (3, 0.9), (4, 0.4)]
        assert nonstationary_mean(history, 'window', t=5, window=10) == pytest.approx(0.5, abs=1e-12)

    def test_discounted_hand_computed(self):
        history = [(1, 1.0), (2, 0.0)]
        assert nonstationary_mean(history, 'discounted', t=2, discount=0.5) == pytest.approx(1 / 3, abs=1e-12)

    def test_window_keeps_recent(self):
        history = [(1, 1.0), (2, 0.0), (3, 0.5)]
        assert nonstationary_mean(history, 'window', t=4, window=2) == pytest.approx(0.25)
        assert nonstationary_count(history, 'window', t=4, window=2) == 2.0

    def test_limits_match_stationary_index(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            arm = ArmState(0)
            rounds = np.sort(rng.choice(np.arange(1, 200), size=rng.integers(1, 40), replace=False))
            for t in rounds:
                update_arm(arm, float(rng.normal()), int(t))
            now = int(rounds[-1]) + 1
            stationary = ucb_index(arm, now, 1.3)
            for mode, options in (('discounted', dict(discount=1.0)), ('window', dict(window=None))):
                index = ucb_index(arm, now, 1.3,
                                  mean=nonstationary_mean(arm.history, mode, now, **options),
                                  pulls=nonstationary_count(arm.history, mode, now, **options))
                assert index == pytest.approx(stationary, abs=1e-12)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            nonstationary_mean([(1, 1.0)], 'sliding', t=2)


class TestRewards:

    def test_no_latency_penalty(self):
        assert per_arm_reward(0.8, 0.4, kappa=0.0) == 0.8

    def test_penalized(self):
        assert per_arm_reward(0.8, 0.4, kappa=0.5) == pytest.approx(0.6, abs=1e-12)

    def test_slow_client_goes_negative(self):
        assert per_arm_reward(0.8, 2.0, kappa=0.5) == pytest.approx(-0.2, abs=1e-12)

    def test_round_reward_plain_sum(self):
        assert round_reward([0.5, 0.3], max_latency=3.0, t_semi=6.0, kappa=0.0) == pytest.approx(0.8)

    def test_round_reward_penalized(self):
        assert round_reward([0.5, 0.3], max_latency=3.0, t_semi=6.0, kappa=1.0) == pytest.approx(0.3, abs=1e-12)

    def test_round_reward_empty(self):
        with pytest.raises(ValueError):
            round_reward([], max_latency=1.0, t_semi=1.0, kappa=1.0)


class TestRandomSelect:

    def test_all_clients(self):
        assert random_select(5, 5, np.random.default_rng(0)).selected == (0, 1, 2, 3, 4)

    def test_reproducible(self):
        first = random_select(8, 3, np.random.default_rng(11))
        second = random_select(8, 3, np.random.default_rng(11))
        assert first.selected == second.selected

    def test_uniform_frequency(self):
        rng = np.random.default_rng(5)
        counts = np.zeros(8)
        for _ in range(10_000):
            counts[list(random_select(8, 4, rng).selected)] += 1
        assert np.all(np.abs(counts / 10_000 - 0.5) <= 0.02)


class TestClusterSelect:

    def test_identical_deltas(self):
        deltas = [np.ones(6)] * 5
        result = cluster_select(deltas, k=3, k_clusters=2, rng=np.random.default_rng(0))
        assert result.selected == (0, 1, 2)

    def test_one_pick_per_blob(self):
        rng = np.random.default_rng(1)
        deltas = [rng.normal(10.0, 0.1, size=12) for _ in range(4)]
        deltas += [rng.normal(-10.0, 0.1, size=12) for _ in range(4)]
        order = rng.permutation(8)
        shuffled = [deltas[i] for i in order]
        blob = {new: order[new] < 4 for new in range(8)}
        result = cluster_select(shuffled, k=2, k_clusters=2, rng=np.random.default_rng(2))
        assert {blob[c] for c in result.selected} == {True, False}

    def test_missing_deltas_count_as_zero(self):
        updates = {0: np.full(4, 5.0), 2: np.full(4, 5.0)}
        result = cluster_select(updates, k=2, k_clusters=2, rng=np.random.default_rng(0), num_clients=4)
        assert len(result.selected) == 2
        assert len({c in (0, 2) for c in result.selected}) == 2

    def test_too_many_clusters(self):
        with pytest.raises(ValueError):
            cluster_select([np.zeros(3)] * 3, k=2, k_clusters=4, rng=np.random.default_rng(0))


def enumerate_best(scores, latencies, kappa, t_semi, k):
    """Independent oracle: scan every bitmask of the right size."""
    n = len(scores)
    best, best_value = None, -np.inf
    for mask in product((0, 1), repeat=n):
        if sum(mask) != min(k, n):
            continue
        members = [i for i in range(n) if mask[i]]
        value = sum(scores[i] for i in members) - kappa * max(latencies[i] for i in members) / t_semi
        if value > best_value + 1e-15:
            best, best_value = members, value
    return best_value


class TestSolvers:

    def test_greedy_without_latency_is_top_k(self):
        scores = [0.2, 0.9, 0.5, 0.7]
        result = greedy_select(scores, [9, 1, 1, 1], kappa=0.0, t_semi=1.0, k=2)
        assert set(result.selected) == {1, 3}

    def test_greedy_matches_brute_force_on_small_case(self):
        scores, latencies = [1.0, 0.9, 0.1], [10.0, 1.0, 1.0]
        greedy = greedy_select(scores, latencies, kappa=1.0, t_semi=10.0, k=2)
        exact = brute_force_select(scores, latencies, kappa=1.0, t_semi=10.0, k=2)
        assert set(greedy.selected) == set(exact.selected) == {0, 1}

    def test_greedy_single_pick(self):
        scores, latencies = [0.9, 0.8, 0.3], [8.0, 1.0, 0.0]
        result = greedy_select(scores, latencies, kappa=0.5, t_semi=4.0, k=1)
        penalized = [s - 0.5 * lat / 4.0 for s, lat in zip(scores, latencies)]
        assert result.selected == (int(np.argmax(penalized)),)

    def test_brute_force_equal_latencies(self):
        result = brute_force_select([1.0, 0.9, 0.1], [2.0, 2.0, 2.0], kappa=1.0, t_semi=4.0, k=2)
        assert set(result.selected) == {0, 1}

    def test_brute_force_whole_set(self):
        assert brute_force_select([0.1, 0.2, 0.3], [1, 1, 1], 0.5, 1.0, k=3).selected == (0, 1, 2)

    def test_brute_force_guard(self):
        with pytest.raises(ValueError):
            brute_force_select([0.0] * 16, [1.0] * 16, 0.5, 1.0, k=2)

    def test_brute_force_matches_enumeration(self):
        rng = np.random.default_rng(3)
        for _ in range(60):
            n = int(rng.integers(2, 13))
            k = int(rng.integers(1, n + 1))
            scores, latencies = rng.uniform(0, 1, n).tolist(), rng.uniform(0, 10, n).tolist()
            result = brute_force_select(scores, latencies, 0.7, 5.0, k)
            value = selection_objective(result.selected, scores, latencies, 0.7, 5.0)
            assert value == pytest.approx(enumerate_best(scores, latencies, 0.7, 5.0, k), abs=1e-12)

    def test_greedy_close_to_optimal(self):
        rng = np.random.default_rng(4)
        greedy_total, optimal_total = 0.0, 0.0
        for _ in range(1000):
            scores, latencies = rng.uniform(0, 1, 8), rng.uniform(0, 10, 8)
            greedy = greedy_select(scores, latencies, 0.5, 5.0, 3)
            exact = brute_force_select(scores, latencies, 0.5, 5.0, 3)
            greedy_total += selection_objective(greedy.selected, scores, latencies, 0.5, 5.0)
            optimal_total += selection_objective(exact.selected, scores, latencies, 0.5, 5.0)
        assert greedy_total >= 0.9 * optimal_total


class TestPolicies:

    def test_aliases(self):
        assert resolve_kind('fedavg') == 'random'
        assert resolve_kind('rpfl') == 'cluster'
        with pytest.raises(ValueError):
            resolve_kind('thompson')

    def test_build_policy_resolves_alias(self):
        policy = build_policy(PolicyConfig(kind='fedavg', k=2), num_clients=4, seed=0)
        assert policy.name == 'random'
        result = policy.select(1, SelectionContext())
        assert len(result.selected) == 2
        assert result.probabilities == {c: 0.5 for c in range(4)}

    def test_ucb_probabilities_sum_to_one(self):
        policy = build_policy(PolicyConfig(kind='ucb', k=2), num_clients=5, seed=0)
        policy.update(1, {0: 0.9, 1: 0.1})
        result = policy.select(2, SelectionContext())
        assert sum(result.probabilities.values()) == pytest.approx(1.0)
        assert result.selected[0] == 0

    def test_cluster_policy_rejects_excess_clusters(self):
        with pytest.raises(ValueError):
            build_policy(PolicyConfig(kind='cluster', clusters=5), num_clients=4, seed=0)

    def test_greedy_oracle_uses_context(self):
        policy = build_policy(PolicyConfig(kind='greedy_oracle', k=1), num_clients=3, seed=0)
        context = SelectionContext(scores={0: 0.5, 1: 0.9, 2: 0.1},
                                   normalized_latency={0: 0.1, 1: 2.0, 2: 0.1}, t_semi=1.0, kappa=1.0)
        assert policy.select(1, context).selected == (0,)

    def test_random_policy_replayable(self):
        first = build_policy(PolicyConfig(kind='random', k=3), num_clients=8, seed=4)
        second = build_policy(PolicyConfig(kind='random', k=3), num_clients=8, seed=4)
        for t in range(1, 20):
            assert first.select(t, SelectionContext()).selected == second.select(t, SelectionContext()).selected


class TestBanditConsistency:

    MEANS = (0.9, 0.5, 0.4, 0.3, 0.1)

    def test_best_arm_dominates_late_rounds(self):
        shares = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            arms = [ArmState(c) for c in range(5)]
            best_pulls = 0
            for t in range(1, 10_001):
                chosen = select_top_k(arms, t, math.sqrt(2), k=1).selected[0]
                update_arm(arms[chosen], float(rng.random() < self.MEANS[chosen]), t)
                if t >= 9000:
                    best_pulls += chosen == 0
            shares.append(best_pulls / 1001)
        assert np.mean(shares) > 0.9

    def test_limit_variants_replay_identically(self):
        rewards = np.random.default_rng(7).random((1000, 5)) < np.array(self.MEANS)
        traces = []
        for config in (PolicyConfig(kind='ucb', k=2, rho=math.sqrt(2)),
                       PolicyConfig(kind='ucb_discounted', discount=1.0, k=2, rho=math.sqrt(2)),
                       PolicyConfig(kind='ucb_window', window=None, k=2, rho=math.sqrt(2))):
            policy = UCBPolicy(config, num_clients=5, seed=0)
            trace = []
            for t in range(1, 1001):
                selected = policy.select(t).selected
                policy.update(t, {c: float(rewards[t - 1, c]) for c in selected})
                trace.append(selected)
            traces.append(trace)
        assert traces[0] == traces[1] == traces[2]
