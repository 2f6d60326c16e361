"""
Tests for utility app - reputation, relevance, data quality, observations.
"""
import math

import numpy as np
import pytest

from sysmodel.latency import LatencyEstimate

from .ledger import ReputationLedger, build_observation, build_observations
from .scoring import (
    UtilityWeights,
    aggregate_score,
    data_quality,
    minmax_normalize,
    update_deviation,
    update_relevance,
    update_reputation,
)


class TestUpdateReputation:

    def test_full_smoothing_takes_gain(self):
        r, gain = update_reputation(0.7, 0.9, 0.6, gamma=1.0)
        assert r == pytest.approx(0.3, abs=1e-12)
        assert gain == pytest.approx(0.3, abs=1e-12)

    def test_no_smoothing_keeps_previous(self):
        r, _ = update_reputation(0.7, 0.9, 0.6, gamma=0.0)
        assert r == 0.7

    def test_mixed(self):
        r, _ = update_reputation(0.2, 0.6, 0.5, gamma=0.3)
        assert r == pytest.approx(0.17, abs=1e-9)

    @pytest.mark.parametrize("gamma", [0.05, 0.3, 1.0])
    def test_converges_to_constant_gain(self, gamma):
        r, gain = 0.0, 0.25
        for _ in range(200):
            r, _ = update_reputation(r, 0.5 + gain, 0.5, gamma)
        assert abs(r - gain) < (1 - gamma) ** 200 * abs(gain) + 1e-12

    def test_invalid_gamma(self):
        with pytest.raises(ValueError):
            update_reputation(0.0, 0.5, 0.5, gamma=1.5)


class TestDeviationAndRelevance:

    def test_identical_vectors(self):
        assert update_deviation(np.ones(4), np.ones(4)) == 0.0

    def test_mean_absolute_deviation(self):
        assert update_deviation([1, 3], [0, 1]) == pytest.approx(1.5, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            update_deviation(np.ones(3), np.ones(4))

    def test_relevance_limits(self):
        assert update_relevance(0.0, True) == 1.0
        assert update_relevance(0.0, False) == 0.0
        assert update_relevance(math.log(2), True) == pytest.approx(0.5, abs=1e-12)

    def test_relevance_monotone_and_complementary(self):
        deviations = np.linspace(0, 5, 30)
        improved = [update_relevance(d, True) for d in deviations]
        degraded = [update_relevance(d, False) for d in deviations]
        assert all(a > b for a, b in zip(improved, improved[1:]))
        assert all(a < b for a, b in zip(degraded, degraded[1:]))
        assert np.allclose(np.add(improved, degraded), 1.0, atol=1e-12)

    def test_negative_deviation(self):
        with pytest.raises(ValueError):
            update_relevance(-0.1, True)


class TestDataQuality:

    def test_two_losses(self):
        assert data_quality([3, 4]) == pytest.approx(2 * math.sqrt(12.5), abs=1e-9)
        assert data_quality([3, 4]) == pytest.approx(7.0711, abs=1e-4)

    def test_zero_losses(self):
        assert data_quality([0, 0, 0]) == 0.0

    def test_empty(self):
        assert data_quality([]) == 0.0


class TestMinmaxNormalize:

    def test_spread(self):
        assert np.allclose(minmax_normalize([2, 4, 6]), (0, 0.5, 1), atol=1e-12)

    def test_all_equal(self):
        assert minmax_normalize([3, 3, 3]).tolist() == [1.0, 1.0, 1.0]

    def test_single_client(self):
        assert minmax_normalize([42.0]).tolist() == [1.0]

    def test_idempotent(self):
        values = np.random.default_rng(0).normal(size=12)
        once = minmax_normalize(values)
        assert np.array_equal(minmax_normalize(once), once)


class TestAggregateScore:

    def test_reputation_term_only(self):
        assert aggregate_score(1.0, 0.2, 0.9, alpha=1.0, beta=0.0) == pytest.approx(0.2)

    def test_quality_term_only(self):
        assert aggregate_score(1.0, 0.2, 0.7, alpha=0.0, beta=1.0) == pytest.approx(0.7)

    def test_mixed(self):
        assert aggregate_score(0.5, 0.4, 0.6, alpha=1.0, beta=0.5) == pytest.approx(0.5, abs=1e-12)

    def test_superposition(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            u1, r1, d1, u2, r2, d2 = rng.normal(size=6)
            combined = aggregate_score(1.0, u1 * r1 + u2 * r2, d1 + d2, alpha=0.7, beta=1.3)
            separate = aggregate_score(u1, r1, d1, 0.7, 1.3) + aggregate_score(u2, r2, d2, 0.7, 1.3)
            assert combined == pytest.approx(separate, abs=1e-12)


class TestUtilityWeights:

    def test_defaults(self):
        weights = UtilityWeights()
        assert (weights.gamma, weights.alpha, weights.beta, weights.kappa) == (0.5, 1.0, 1.0, 0.5)
        assert weights.attribution == 'marginal'

    def test_unknown_attribution(self):
        with pytest.raises(ValueError):
            UtilityWeights(attribution='oracle')

    def test_single_term_ablations_allowed(self):
        assert UtilityWeights(alpha=0.0).beta == 1.0
        assert UtilityWeights(beta=0.0).alpha == 1.0
        assert UtilityWeights(kappa=0.0).kappa == 0.0

    @pytest.mark.parametrize("field, value", [("alpha", -0.1), ("beta", -1.0), ("kappa", -0.5), ("gamma", 1.5)])
    def test_negative_weights_rejected(self, field, value):
        with pytest.raises(ValueError):
            UtilityWeights(**{field: value})

    def test_all_zero_mix_rejected(self):
        with pytest.raises(ValueError):
            UtilityWeights(alpha=0.0, beta=0.0)


@pytest.fixture
def ledger():
    return ReputationLedger(range(3), UtilityWeights(gamma=0.5, alpha=1.0, beta=1.0))


class TestReputationLedger:

    def test_starts_neutral(self, ledger):
        assert all(ledger[c].reputation == 0.0 for c in ledger.client_ids)

    def test_quality_normalized_over_reporting_clients(self, ledger):
        ledger.record_quality(0, [1.0, 1.0])
        assert ledger[0].quality_norm == 1.0
        ledger.record_quality(2, [3.0, 3.0])
        assert ledger[0].quality_norm == 0.0
        assert ledger[2].quality_norm == 1.0
        assert ledger[1].quality is None

    def test_score_combines_components(self, ledger):
        ledger.record_contribution(1, q_client=0.8, q_prev_global=0.6)
        ledger.record_relevance(1, deviation=0.0, improved=True)
        ledger.record_quality(1, [2.0])
        assert ledger.score(1) == pytest.approx(1.0 * 0.1 + 1.0, abs=1e-12)

    def test_unknown_client(self, ledger):
        with pytest.raises(KeyError):
            ledger.record_relevance(7, 0.1, True)


class TestBuildObservation:

    def test_identical_clients_standardize_to_zero(self, ledger):
        latencies = {0: LatencyEstimate(2.0, 1.0), 1: LatencyEstimate(2.0, 1.0)}
        for observation in build_observations(ledger, latencies).values():
            assert not observation.standardized.any()

    def test_population_z_score(self, ledger):
        latencies = {0: LatencyEstimate(0.0, 1.0), 1: LatencyEstimate(2.0, 1.0)}
        first = build_observation(ledger, 0, latencies)
        second = build_observation(ledger, 1, latencies)
        assert first.standardized[4] == pytest.approx(-1.0)
        assert second.standardized[4] == pytest.approx(1.0)
        assert first.raw.tolist()[4:] == [0.0, 1.0]

    def test_previous_reputation_is_reported(self, ledger):
        ledger.begin_round()
        ledger.record_contribution(0, q_client=0.9, q_prev_global=0.5)
        observation = build_observation(ledger, 0, {0: LatencyEstimate(1.0, 1.0)})
        assert observation.raw[0] == 0.0
        assert observation.raw[1] == pytest.approx(0.4)

    def test_missing_client(self, ledger):
        with pytest.raises(KeyError):
            build_observation(ledger, 5, {5: LatencyEstimate(1.0, 1.0)})
