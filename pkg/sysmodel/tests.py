"""
Tests for sysmodel app - client profiles and the latency model.
"""
import json

import numpy as np
import pytest

from .fleet import ClientProfile, default_fleet, load_fleet
from .latency import (
    LatencyEstimate,
    comm_time,
    compute_time,
    estimate_latency,
    normalized_time,
    round_time,
    semi_boundary,
)


class TestDefaultFleet:

    def test_size(self):
        assert len(default_fleet()) == 8

    def test_first_client(self):
        client = default_fleet()[0]
        assert (client.cores, client.ram_gb, client.bandwidth_mbps) == (8, 16, 1600)

    def test_last_client(self):
        client = default_fleet()[7]
        assert (client.cores, client.ram_gb, client.bandwidth_mbps) == (2, 4, 2)

    def test_shared_frequency(self):
        assert all(c.cpu_mhz == 2245.78 for c in default_fleet())

    def test_bandwidth_column(self):
        assert [c.bandwidth_mbps for c in default_fleet()] == [1600, 1600, 100, 100, 6, 6, 2, 2]

    def test_speed_calibration(self):
        client = default_fleet()[0]
        assert client.speed == pytest.approx(8 * 2.24578 * 200, abs=1e-9)


class TestLoadFleet:

    def test_round_trip(self, tmp_path):
        path = tmp_path / 'fleet.json'
        path.write_text(json.dumps([
            {'name': 'edge', 'cores': 4, 'cpu_mhz': 1500, 'ram_gb': 8, 'bandwidth_mbps': 50},
            {'cores': 1, 'cpu_mhz': 800, 'ram_gb': 1, 'bandwidth_mbps': 1, 'calibration': 100},
        ]))
        fleet = load_fleet(path)
        assert [c.name for c in fleet] == ['edge', 'Client 2']
        assert fleet[1].speed == pytest.approx(80.0)

    def test_missing_field(self, tmp_path):
        path = tmp_path / 'fleet.json'
        path.write_text(json.dumps([{'cores': 4}]))
        with pytest.raises(ValueError):
            load_fleet(path)

    def test_non_positive_profile(self):
        with pytest.raises(ValueError):
            ClientProfile(name='broken', cores=0, cpu_mhz=1000, ram_gb=1, bandwidth_mbps=1)


class TestComputeTime:

    def test_workload_over_speed(self):
        assert compute_time(100, 50) == pytest.approx(2.0)

    def test_zero_workload(self):
        assert compute_time(0, default_fleet()[0]) == 0.0

    def test_zero_speed(self):
        with pytest.raises(ValueError):
            compute_time(100, 0)


class TestCommTime:

    def test_unit_arithmetic(self):
        assert comm_time(10 ** 6, 8, multiplier=1) == pytest.approx(1.0, abs=1e-12)

    def test_zero_bytes(self):
        assert comm_time(0, 8) == 0.0

    def test_round_trip_multiplier(self):
        assert comm_time(10 ** 6, 2, multiplier=2) == pytest.approx(8.0, abs=1e-12)

    def test_scaling(self):
        base = comm_time(5000, 10)
        assert comm_time(10000, 10) == pytest.approx(2 * base)
        assert comm_time(5000, 20) == pytest.approx(base / 2)


class TestRoundTime:

    def test_single_client(self):
        assert round_time([LatencyEstimate(2, 1)]) == 3

    def test_straggler(self):
        assert round_time([LatencyEstimate(2, 1), LatencyEstimate(1, 5)]) == 6

    def test_empty_selection(self):
        with pytest.raises(ValueError):
            round_time([])

    def test_monotone(self):
        rng = np.random.default_rng(0)
        selected = []
        previous = 0.0
        for _ in range(20):
            selected.append(LatencyEstimate(*rng.uniform(0, 10, size=2)))
            current = round_time(selected)
            assert current >= previous
            previous = current


class TestNormalizedTime:

    def test_at_boundary(self):
        assert normalized_time(6.0, 6.0) == 1.0

    def test_half(self):
        assert normalized_time(3.0, 6.0) == 0.5

    def test_non_positive_boundary(self):
        with pytest.raises(ValueError):
            normalized_time(3.0, 0.0)


class TestSemiBoundary:

    def test_median_straggler(self):
        estimates = [LatencyEstimate(t, 0.0) for t in (1.0, 2.0, 3.0)]
        # pair maxima: 2, 3, 3 -> median 3
        assert semi_boundary(estimates, k=2, factor=1.5) == pytest.approx(4.5)

    def test_sampled_when_many_subsets(self):
        estimates = [LatencyEstimate(float(t), 0.0) for t in range(30)]
        first = semi_boundary(estimates, k=10, seed=3)
        assert first == semi_boundary(estimates, k=10, seed=3)
        assert 0 < first <= 1.5 * 29

    def test_table_fleet(self):
        fleet = default_fleet()
        estimates = [estimate_latency(p, num_samples=1000, epochs=2, payload_bytes=400_000) for p in fleet]
        assert estimates[0].t_train < estimates[7].t_train
        assert estimates[0].t_comm < estimates[7].t_comm
        assert semi_boundary(estimates, k=4) > 0
