"""
Tests for orchestrator app - run config, aggregation, server validation, the federated loop.
"""
from dataclasses import replace

import numpy as np
import pytest
from rest_framework.exceptions import ValidationError

from dataset.movielens import carve_validation, split_per_user
from dataset.features import synth_features
from recmodel.params import HyperParams, ModelParams, init_params, param_shapes
from recmodel.training import LocalUpdate
from selection.policies import PolicyConfig
from utility.scoring import UtilityWeights

from .aggregation import fedavg_aggregate
from .config import DataConfig, EvaluationConfig, PartitionConfig, RunConfig
from .engine import FederatedSimulation, RoundAbortedError, run_experiment
from .serializers import RunConfigSerializer, config_echo, config_hash, parse_config
from .trace import ROUND_COLUMNS, read_auc_curve, trace_columns, write_trace
from .validation import ServerValidator, evaluate_model


TINY = HyperParams(dim=1, factors=1, text_dim=1, visual_dim=1, text_hidden=1, visual_hidden=1,
                   attention_hidden=1)

FAST = dict(dim=8, factors=2, text_dim=4, visual_dim=4, text_hidden=4, visual_hidden=4,
            attention_hidden=4, negatives=2, local_epochs=1, batch_size=64, dropout=0.0)


def filled(value):
    return ModelParams({name: np.full(shape, float(value))
                        for name, shape in param_shapes(TINY, 1, 1).items()})


def update(client, delta, samples):
    return LocalUpdate(client_id=client, delta=delta, num_samples=samples,
                       sample_losses=np.zeros(samples), work_units=samples)


def small_config(**overrides):
    options = dict(
        name='small',
        seed=0,
        rounds=3,
        data=DataConfig(source='synthetic', num_users=40, num_items=60, validation_negatives=10),
        partition=PartitionConfig(strategy='linear', ubi=0.5, num_clients=4),
        hyper=HyperParams(**FAST),
        policy=PolicyConfig(kind='ucb', k=2),
        evaluation=EvaluationConfig(k=10),
    )
    options.update(overrides)
    return RunConfig(**options)


@pytest.fixture
def config():
    return small_config()


class TestFedAvg:

    def test_single_client(self):
        result = fedavg_aggregate(filled(1.0), [update(0, filled(0.5), 10)])
        assert all(np.allclose(t, 1.5) for _, t in result.items())

    def test_opposite_deltas_cancel(self):
        result = fedavg_aggregate(filled(2.0), [update(0, filled(3.0), 5), update(1, filled(-3.0), 5)])
        assert all(np.allclose(t, 2.0) for _, t in result.items())

    def test_sample_weighted_mean(self):
        result = fedavg_aggregate(filled(0.0), [update(0, filled(4.0), 1), update(1, filled(0.0), 3)])
        assert all(np.allclose(t, 1.0, atol=1e-12) for _, t in result.items())

    def test_zero_deltas_leave_global_bit_identical(self):
        params = init_params(HyperParams(**FAST), 7, 9, seed=3)
        zeros = params.zeros_like()
        result = fedavg_aggregate(params, [update(0, zeros, 4), update(2, zeros, 9)])
        assert result.flatten().tobytes() == params.flatten().tobytes()

    def test_order_independent(self):
        a, b = update(0, filled(0.1), 3), update(1, filled(0.7), 11)
        first = fedavg_aggregate(filled(0.3), [a, b])
        second = fedavg_aggregate(filled(0.3), [b, a])
        assert first.flatten().tobytes() == second.flatten().tobytes()

    def test_empty_updates(self):
        with pytest.raises(ValueError):
            fedavg_aggregate(filled(0.0), [])

    def test_shape_mismatch(self):
        other = init_params(HyperParams(**FAST), 2, 2, seed=0)
        with pytest.raises(ValueError):
            fedavg_aggregate(filled(0.0), [update(0, other, 1)])


class TestRunConfigSerializer:

    def test_defaults(self):
        config = parse_config({})
        assert config == RunConfig()

    def test_sections_are_built(self):
        config = parse_config({'partition': {'ubi': 0.1172, 'strategy': 'linear'},
                               'policy': {'kind': 'ucb_window', 'window': 5}})
        assert config.partition == PartitionConfig(strategy='linear', ubi=0.1172)
        assert config.policy.window == 5
        assert isinstance(config.hyper, HyperParams)

    def test_echo_round_trip(self, config):
        echo = config_echo(config)
        assert parse_config(echo) == config
        assert echo['model']['dim'] == 8

    def test_nullable_fields_round_trip(self):
        config = RunConfig(policy=PolicyConfig(kind='ucb_window', window=None))
        assert parse_config(config_echo(config)).policy.window is None

    def test_alias_accepted(self):
        assert parse_config({'policy': {'kind': 'fedavg'}}).policy.kind == 'fedavg'

    def test_unknown_policy(self):
        serializer = RunConfigSerializer(data={'policy': {'kind': 'oracle'}})
        assert not serializer.is_valid()
        assert 'policy' in serializer.errors

    def test_ubi_out_of_range(self):
        serializer = RunConfigSerializer(data={'partition': {'ubi': 1.5}})
        assert not serializer.is_valid()
        assert 'partition' in serializer.errors

    def test_factors_must_divide_dim(self):
        with pytest.raises(ValidationError):
            parse_config({'model': {'dim': 10, 'factors': 4}})

    def test_k_larger_than_clients(self):
        with pytest.raises(ValidationError):
            parse_config({'policy': {'k': 9}, 'partition': {'num_clients': 8}})

    def test_negative_rounds(self):
        with pytest.raises(ValidationError):
            parse_config({'rounds': -1})

    def test_config_hash(self, config):
        digest = config_hash(config)
        assert len(digest) == 12
        assert int(digest, 16) >= 0
        assert config_hash(parse_config(config_echo(config))) == digest
        assert config_hash(replace(config, seed=1)) != digest


class TestServerValidator:

    @pytest.fixture
    def setup(self, synthetic_log):
        log = synthetic_log(num_users=30, num_items=50, seed=2, min_count=10, max_count=30)
        split = carve_validation(split_per_user(log, 0.8, seed=0), 0.2, seed=0)
        hyper = HyperParams(**FAST)
        features = synth_features(0, hyper.text_dim, hyper.visual_dim, log.num_items)
        return log, split, hyper, features

    def test_q_is_an_auc(self, setup):
        log, split, hyper, features = setup
        validator = ServerValidator(split, features, hyper, negatives=5, seed=0)
        q = validator.score(init_params(hyper, log.num_users, log.num_items, seed=0))
        assert 0.0 <= q <= 1.0

    def test_negatives_avoid_known_positives(self, setup):
        _, split, hyper, features = setup
        validator = ServerValidator(split, features, hyper, negatives=5, seed=0)
        for row, user in enumerate(validator.users):
            known = set(split.train[user]) | set(split.validation[user])
            assert not known & set(validator.negatives[row].tolist())

    def test_deterministic(self, setup):
        log, split, hyper, features = setup
        params = init_params(hyper, log.num_users, log.num_items, seed=1)
        a = ServerValidator(split, features, hyper, negatives=5, seed=4).score(params)
        b = ServerValidator(split, features, hyper, negatives=5, seed=4).score(params)
        assert a == b

    def test_empty_validation_slice(self, setup):
        log, _, hyper, features = setup
        split = split_per_user(log, 0.8, seed=0)
        with pytest.raises(ValueError):
            ServerValidator(split, features, hyper)

    def test_test_evaluation_report(self, setup):
        log, split, hyper, features = setup
        report = evaluate_model(init_params(hyper, log.num_users, log.num_items, seed=0),
                                features, hyper, split, k=10)
        assert report.users == sum(1 for items in split.test.values() if len(items))
        assert 0.0 <= report.auc <= 1.0
        assert report.k == 10


class TestRunRound:

    def test_single_client_pulled_every_round(self):
        config = small_config(partition=PartitionConfig(num_clients=1), policy=PolicyConfig(kind='ucb', k=1))
        simulation = FederatedSimulation(config)
        for t in range(1, 4):
            record = simulation.run_round(t)
            assert record.selected == (0,)
        assert simulation.policy.arms[0].pulls == 3

    def test_round_time_is_the_straggler(self, config):
        simulation = FederatedSimulation(replace(config, partition=PartitionConfig(
            strategy='linear', ubi=0.5, num_clients=8), policy=PolicyConfig(kind='random', k=4)))
        record = simulation.run_round(1)
        slowest = max(s.t_train + s.t_comm for s in record.clients.values())
        assert len(record.selected) == 4
        assert record.t_round == pytest.approx(slowest, abs=1e-9)
        assert record.clock == pytest.approx(record.t_round, abs=1e-9)

    def test_clients_scored_and_arms_updated(self, config):
        simulation = FederatedSimulation(config)
        record = simulation.run_round(1)
        assert sorted(record.clients) == list(record.selected)
        for client in record.selected:
            stats = record.clients[client]
            assert stats.reward == pytest.approx(
                stats.score - config.utility.kappa * stats.normalized_latency, abs=1e-12)
            assert simulation.policy.arms[client].pulls == 1
        assert record.q_global is not None and record.q_marginal is not None

    def test_shared_attribution_uses_global_q(self, config):
        config = replace(config, utility=UtilityWeights(attribution='shared'))
        record = FederatedSimulation(config).run_round(1)
        assert all(s.q_value == record.q_global for s in record.clients.values())

    def test_thread_fan_out_matches_sequential(self, config):
        sequential = FederatedSimulation(config, workers=1).run_round(1)
        threaded = FederatedSimulation(config, workers=3).run_round(1)
        assert sequential.selected == threaded.selected
        assert sequential.q_global == threaded.q_global
        for client in sequential.selected:
            assert sequential.clients[client] == threaded.clients[client]

    def test_failure_aborts_round(self, config, monkeypatch):
        def broken(*args, **kwargs):
            raise FloatingPointError("loss diverged")

        monkeypatch.setattr('orchestrator.engine.train_local', broken)
        simulation = FederatedSimulation(config)
        with pytest.raises(RoundAbortedError) as info:
            simulation.run_round(1)
        assert info.value.record.status == 'aborted'
        assert 'loss diverged' in info.value.record.error
        assert simulation.clock == 0.0


class TestRunExperiment:

    def test_zero_rounds(self, config):
        result = run_experiment(replace(config, rounds=0), workers=1)
        assert result.trace == []
        assert result.summary['final'] == result.summary['initial']
        assert result.summary['total_simulated_time'] == 0.0
        assert result.summary['time_to_target'] is None

    def test_clock_matches_round_times(self, config):
        result = run_experiment(config, workers=1)
        clocks = [r.clock for r in result.trace]
        assert clocks == sorted(clocks)
        assert result.summary['total_simulated_time'] == pytest.approx(
            sum(r.t_round for r in result.trace), abs=1e-9)
        assert result.summary['rounds_completed'] == 3
        assert result.summary['config_hash'] == config_hash(config)

    def test_identical_traces(self, config, tmp_path):
        first = run_experiment(config, workers=1)
        second = run_experiment(config, workers=1)
        write_trace(tmp_path / 'a.csv', first.trace, 4)
        write_trace(tmp_path / 'b.csv', second.trace, 4)
        assert (tmp_path / 'a.csv').read_bytes() == (tmp_path / 'b.csv').read_bytes()

    def test_policies_share_initial_model(self, config):
        ucb = run_experiment(config, workers=1)
        random = run_experiment(replace(config, policy=PolicyConfig(kind='random', k=2)), workers=1)
        assert ucb.summary['initial'] == random.summary['initial']
        assert ucb.summary['t_semi'] == random.summary['t_semi']

    def test_early_stop(self, config):
        config = replace(config, rounds=10, evaluation=EvaluationConfig(k=10, patience=1, min_delta=1.0))
        result = run_experiment(config, workers=1)
        assert len(result.trace) == 1
        assert result.summary['stopped_early'] is True

    @pytest.mark.slow
    @pytest.mark.parametrize('ubi', [0.1172, 0.0146])
    @pytest.mark.parametrize('policy', ['ucb', 'random'])
    def test_training_lifts_test_auc(self, policy, ubi):
        config = small_config(
            rounds=20,
            data=DataConfig(source='synthetic', num_users=150, num_items=200, validation_negatives=20),
            partition=PartitionConfig(strategy='exponential', ubi=ubi, num_clients=8),
            hyper=HyperParams(**{**FAST, 'lr': 0.01, 'batch_size': 32, 'local_epochs': 2}),
            policy=PolicyConfig(kind=policy, k=4),
            evaluation=EvaluationConfig(every=5, k=10, patience=100),
        )
        result = run_experiment(config, workers=1)
        assert result.summary['status'] == 'completed'
        assert result.summary['rounds_completed'] == 20
        assert result.summary['final']['auc'] > result.summary['initial']['auc'] + 0.02

    def test_aborted_run(self, config, monkeypatch):
        def broken(*args, **kwargs):
            raise ValueError("client has no data")

        monkeypatch.setattr('orchestrator.engine.train_local', broken)
        result = run_experiment(config, workers=1)
        assert result.summary['status'] == 'aborted'
        assert [r.status for r in result.trace] == ['aborted']
        assert result.summary['rounds_completed'] == 0

    def test_observations_cover_every_client(self, config):
        result = run_experiment(replace(config, rounds=2), workers=1)
        assert len(result.observations) == 2 * 4
        assert {row['client_id'] for row in result.observations} == {0, 1, 2, 3}


class TestTraceFile:

    def test_columns_and_formatting(self, config, tmp_path):
        result = run_experiment(replace(config, rounds=2), workers=1)
        path = write_trace(tmp_path / 'trace.csv', result.trace, 4)
        lines = path.read_text().splitlines()
        assert lines[0].split(',') == trace_columns(4)
        assert lines[0].startswith(','.join(ROUND_COLUMNS))
        assert len(lines) == 3
        clock = lines[1].split(',')[ROUND_COLUMNS.index('clock')]
        assert len(clock.split('.')[1]) == 6

    def test_auc_curve(self, config, tmp_path):
        result = run_experiment(replace(config, rounds=2), workers=1)
        path = write_trace(tmp_path / 'trace.csv', result.trace, 4)
        points = read_auc_curve(path)
        assert [round(c, 6) for c, _ in points] == [round(r.clock, 6) for r in result.trace]
