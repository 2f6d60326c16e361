"""
Tests for experiments app - management commands, run registry, comparison table, SVG plots.
"""
import csv
import json
import os
import re
from io import StringIO
from pathlib import Path

import pytest
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError

from orchestrator.serializers import parse_config
from sysmodel.fleet import default_fleet, load_fleet

from .comparison import MEAN_SEED, comparison_columns, efficiency_columns, efficiency_rows
from .models import ExperimentRun
from .plotting import render_svg
from .runner import apply_overrides, load_run_config, read_config_document, resolve_paths
from .serializers import ExperimentMatrixSerializer

CONFIG_DIR = Path(__file__).resolve().parent.parent / 'configs'

SMALL_RUN = {
    'name': 'small',
    'seed': 0,
    'rounds': 2,
    'data': {'source': 'synthetic', 'num_users': 30, 'num_items': 50, 'validation_negatives': 10},
    'partition': {'strategy': 'linear', 'ubi': 0.5, 'num_clients': 4},
    'model': {'dim': 8, 'factors': 2, 'text_dim': 4, 'visual_dim': 4, 'text_hidden': 4,
              'visual_hidden': 4, 'attention_hidden': 4, 'negatives': 2, 'local_epochs': 1,
              'batch_size': 64, 'dropout': 0.0},
    'policy': {'kind': 'ucb', 'k': 2},
    'evaluation': {'k': 10},
}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / 'base.json'
    path.write_text(json.dumps(SMALL_RUN))
    return path


@pytest.fixture
def output_root(tmp_path):
    return tmp_path / 'out'


def run_dirs(root):
    return sorted(p for p in root.iterdir() if p.is_dir())


class TestOverrides:

    def test_flat_overrides(self):
        document = apply_overrides(SMALL_RUN, policy='random', ubi=0.1172, seed=5, rounds=0, k=3,
                                   distribution='exponential')
        assert document['policy'] == {'kind': 'random', 'k': 3}
        assert document['partition']['ubi'] == 0.1172
        assert document['partition']['strategy'] == 'exponential'
        assert (document['seed'], document['rounds']) == (5, 0)
        assert SMALL_RUN['policy']['kind'] == 'ucb'

    def test_movielens_path_from_settings(self, settings):
        settings.FEDSEL = {**settings.FEDSEL, 'DATA_PATH': '/data/u.data', 'FEATURES_PATH': ''}
        document = resolve_paths({})
        assert document['data']['path'] == '/data/u.data'
        assert 'features_path' not in document['data']

    def test_synthetic_source_keeps_path_empty(self):
        assert 'path' not in resolve_paths(json.loads(json.dumps(SMALL_RUN)))['data']

    def test_shipped_configs_parse(self):
        base = load_run_config(CONFIG_DIR / 'base.json')
        assert (base.policy.kind, base.partition.ubi, base.rounds) == ('ucb', 0.0146, 300)
        serializer = ExperimentMatrixSerializer(data=read_config_document(CONFIG_DIR / 'matrix.json'))
        assert serializer.is_valid(), serializer.errors
        assert len(serializer.save()) == 3 * 4 * 3

    def test_shipped_fleet_matches_default(self):
        assert load_fleet(CONFIG_DIR / 'fleet.json') == default_fleet()

    def test_load_run_config(self, config_file):
        config = load_run_config(config_file, seed=3)
        assert config.seed == 3
        assert config.partition.num_clients == 4


@pytest.mark.django_db
class TestRunCommand:

    def test_writes_artifacts(self, config_file, output_root):
        call_command('run', config=str(config_file), output_root=str(output_root), workers=1)
        (directory,) = run_dirs(output_root)
        assert re.fullmatch(r'[0-9a-f]{12}', directory.name)
        for name in ('trace.csv', 'summary.json', 'config-echo.json', 'observations.csv', 'model.ckpt'):
            assert (directory / name).exists()
        echo = json.loads((directory / 'config-echo.json').read_text())
        assert parse_config(echo).policy.kind == 'ucb'

        run = ExperimentRun.objects.get(config_hash=directory.name)
        assert run.status == ExperimentRun.STATUS_COMPLETED
        assert run.summary['rounds_completed'] == 2
        assert run.output_dir == str(directory)

    def test_byte_identical_traces(self, config_file, tmp_path):
        first, second = tmp_path / 'a', tmp_path / 'b'
        call_command('run', config=str(config_file), output_root=str(first), workers=1)
        call_command('run', config=str(config_file), output_root=str(second), workers=1)
        (run_a,), (run_b,) = run_dirs(first), run_dirs(second)
        assert run_a.name == run_b.name
        assert (run_a / 'trace.csv').read_bytes() == (run_b / 'trace.csv').read_bytes()

    def test_zero_rounds(self, config_file, output_root):
        call_command('run', config=str(config_file), output_root=str(output_root), rounds=0, workers=1)
        (directory,) = run_dirs(output_root)
        lines = (directory / 'trace.csv').read_text().splitlines()
        assert len(lines) == 1
        summary = json.loads((directory / 'summary.json').read_text())
        assert summary['final'] == summary['initial']

    def test_overrides_change_output_directory(self, config_file, output_root):
        call_command('run', config=str(config_file), output_root=str(output_root), rounds=0, workers=1)
        call_command('run', config=str(config_file), output_root=str(output_root), rounds=0,
                     policy='random', workers=1)
        assert len(run_dirs(output_root)) == 2
        assert ExperimentRun.objects.count() == 2

    def test_missing_config(self, tmp_path):
        with pytest.raises(CommandError) as info:
            call_command('run', config=str(tmp_path / 'nope.json'))
        assert info.value.returncode == 2

    def test_invalid_config(self, tmp_path):
        path = tmp_path / 'bad.json'
        path.write_text(json.dumps({'partition': {'ubi': 3.0}}))
        with pytest.raises(CommandError) as info:
            call_command('run', config=str(path))
        assert info.value.returncode == 3

    def test_malformed_json(self, tmp_path):
        path = tmp_path / 'bad.json'
        path.write_text('{"rounds": ')
        with pytest.raises(CommandError) as info:
            call_command('run', config=str(path))
        assert info.value.returncode == 3

    def test_missing_ratings_file(self, tmp_path, output_root):
        path = tmp_path / 'movielens.json'
        path.write_text(json.dumps({'data': {'path': str(tmp_path / 'missing' / 'u.data')}}))
        with pytest.raises(CommandError) as info:
            call_command('run', config=str(path), output_root=str(output_root))
        assert info.value.returncode == 2
        assert ExperimentRun.objects.get().status == ExperimentRun.STATUS_FAILED

    def test_undecodable_ratings_file(self, tmp_path, output_root):
        ratings = tmp_path / 'u.data'
        ratings.write_bytes(b'\xff\xfe\x001\t1\t5\t0\n')
        path = tmp_path / 'movielens.json'
        path.write_text(json.dumps({'data': {'path': str(ratings)}}))
        with pytest.raises(CommandError) as info:
            call_command('run', config=str(path), output_root=str(output_root))
        assert info.value.returncode == 3
        assert 'u.data' in str(info.value)
        assert ExperimentRun.objects.get().status == ExperimentRun.STATUS_FAILED


@pytest.mark.django_db
class TestCompareCommand:

    def write_matrix(self, tmp_path, **extra):
        matrix = {'base': SMALL_RUN, 'policies': ['ucb', 'fedavg'],
                  'partitions': [{'strategy': 'linear', 'ubi': 0.5}], 'seeds': [0, 1]}
        matrix.update(extra)
        path = tmp_path / 'matrix.json'
        path.write_text(json.dumps(matrix))
        return path

    def test_rows_and_aggregates(self, tmp_path, output_root):
        call_command('compare', matrix=str(self.write_matrix(tmp_path)), output_root=str(output_root))
        with (output_root / 'comparison.csv').open() as handle:
            rows = list(csv.DictReader(handle))
        assert list(rows[0].keys()) == comparison_columns(10)
        assert len(rows) == 6
        assert [r['Seed'] for r in rows].count(MEAN_SEED) == 2
        assert {r['Method'] for r in rows} == {'ucb', 'fedavg'}
        assert ExperimentRun.objects.filter(status=ExperimentRun.STATUS_COMPLETED).count() == 4

    def test_mean_row_averages_seeds(self, tmp_path, output_root):
        call_command('compare', matrix=str(self.write_matrix(tmp_path, policies=['ucb'])),
                     output_root=str(output_root))
        with (output_root / 'comparison.csv').open() as handle:
            rows = list(csv.DictReader(handle))
        seeds, mean = rows[:2], rows[2]
        expected = sum(float(r['Total Time (s)']) for r in seeds) / 2
        assert float(mean['Total Time (s)']) == pytest.approx(expected, abs=1e-6)

    def test_efficiency_against_random_baseline(self, tmp_path, output_root):
        base = {**SMALL_RUN, 'evaluation': {'k': 10, 'target_auc': 0.0}}
        call_command('compare', matrix=str(self.write_matrix(tmp_path, base=base)),
                     output_root=str(output_root))
        with (output_root / 'comparison.csv').open() as handle:
            means = {r['Method']: r for r in csv.DictReader(handle) if r['Seed'] == MEAN_SEED}
        with (output_root / 'efficiency.csv').open() as handle:
            (row,) = list(csv.DictReader(handle))
        assert list(row.keys()) == efficiency_columns()
        assert (row['Method'], row['Baseline']) == ('ucb', 'fedavg')
        for ratio, column in (('Time to Target Ratio', 'Time to Target (s)'),
                              ('Total Time Ratio', 'Total Time (s)')):
            expected = float(means['ucb'][column]) / float(means['fedavg'][column])
            assert float(row[ratio]) == pytest.approx(expected, rel=1e-3)

    def test_no_baseline_writes_empty_efficiency(self, tmp_path, output_root):
        call_command('compare', matrix=str(self.write_matrix(tmp_path, policies=['ucb'])),
                     output_root=str(output_root))
        lines = (output_root / 'efficiency.csv').read_text().splitlines()
        assert lines == [','.join(efficiency_columns())]

    def test_table_headers(self):
        assert comparison_columns() == ['Distribution', 'UBI', 'Method', 'Seed', 'Total Time (s)',
                                        'Time to Target (s)', 'AUC', 'NDCG@50', 'Recall@50']

    def test_unknown_policy(self, tmp_path):
        with pytest.raises(CommandError) as info:
            call_command('compare', matrix=str(self.write_matrix(tmp_path, policies=['ucb', 'nope'])))
        assert info.value.returncode == 3

    def test_missing_policy_list(self, tmp_path):
        path = tmp_path / 'matrix.json'
        path.write_text(json.dumps({'base': SMALL_RUN, 'seeds': [0]}))
        with pytest.raises(CommandError) as info:
            call_command('compare', matrix=str(path))
        assert info.value.returncode == 3


def mean_row(method, total, to_target, distribution='exponential', ubi=0.0146):
    return {'Distribution': distribution, 'UBI': ubi, 'Method': method, 'Seed': MEAN_SEED,
            'Total Time (s)': total, 'Time to Target (s)': to_target}


class TestEfficiencyRows:

    def test_ratios_against_baseline(self):
        seed_row = {**mean_row('ucb', 1.0, 1.0), 'Seed': 0}
        rows = efficiency_rows([seed_row, mean_row('fedavg', 10.0, 4.0), mean_row('ucb', 6.0, None),
                                mean_row('cluster', 12.0, 2.0)])
        assert [(r['Method'], r['Baseline']) for r in rows] == [('ucb', 'fedavg'), ('cluster', 'fedavg')]
        assert rows[0]['Total Time Ratio'] == pytest.approx(0.6)
        assert rows[0]['Time to Target Ratio'] is None
        assert rows[1]['Total Time Ratio'] == pytest.approx(1.2)
        assert rows[1]['Time to Target Ratio'] == pytest.approx(0.5)

    def test_baseline_matched_per_setting(self):
        rows = efficiency_rows([mean_row('random', 8.0, 8.0, ubi=0.1172), mean_row('ucb', 4.0, 2.0, ubi=0.1172),
                                mean_row('ucb', 4.0, 2.0, ubi=0.0146)])
        (row,) = rows
        assert (row['UBI'], row['Baseline'], row['Time to Target Ratio']) == (0.1172, 'random', 0.25)

    def test_baseline_never_reaching_target(self):
        (row,) = efficiency_rows([mean_row('random', 8.0, None), mean_row('ucb', 4.0, 2.0)])
        assert row['Time to Target Ratio'] is None
        assert row['Total Time Ratio'] == pytest.approx(0.5)


CANONICAL_DATA = pytest.mark.skipif(
    not os.path.exists(settings.FEDSEL['DATA_PATH']),
    reason="canonical MovieLens-100K u.data not available",
)


@pytest.mark.slow
@CANONICAL_DATA
@pytest.mark.django_db
class TestMovieLensAcceptance:
    """
    Full-scale runs on MovieLens-100K with the default 8-device fleet. Each
    takes minutes; deselect with ``-m "not slow"``.
    """

    def test_ucb_reaches_target_auc(self, output_root):
        call_command('run', config=str(CONFIG_DIR / 'base.json'), output_root=str(output_root),
                     policy='ucb', distribution='exponential', ubi=0.0146, rounds=300)
        run = ExperimentRun.objects.get()
        assert run.summary['target_auc'] == 0.80
        assert run.summary['time_to_target'] is not None, run.summary['final']

    def test_ucb_reaches_target_faster_than_random(self, tmp_path, output_root):
        matrix = {'base': read_config_document(CONFIG_DIR / 'base.json'), 'policies': ['ucb', 'random'],
                  'partitions': [{'strategy': 'exponential', 'ubi': 0.1172},
                                 {'strategy': 'exponential', 'ubi': 0.0146}],
                  'seeds': [0, 1, 2]}
        path = tmp_path / 'matrix.json'
        path.write_text(json.dumps(matrix))
        call_command('compare', matrix=str(path), output_root=str(output_root), processes=3)
        with (output_root / 'efficiency.csv').open() as handle:
            rows = list(csv.DictReader(handle))
        assert sorted(float(r['UBI']) for r in rows) == [0.0146, 0.1172]
        for row in rows:
            assert row['Time to Target Ratio'], row
            assert float(row['Time to Target Ratio']) <= 0.8, row


@pytest.mark.django_db
class TestPlotCommand:

    @pytest.fixture
    def traces(self, config_file, output_root):
        for policy in ('ucb', 'random', 'cluster'):
            call_command('run', config=str(config_file), output_root=str(output_root), policy=policy, workers=1)
        return [d / 'trace.csv' for d in run_dirs(output_root)]

    def test_one_polyline_per_trace(self, traces, tmp_path):
        output = tmp_path / 'auc.svg'
        call_command('plot', *[str(t) for t in traces], output=str(output))
        body = output.read_text()
        assert body.count('<polyline') == 3
        assert 'Simulated time (s)' in body
        assert 'AUC' in body

    def test_x_values_increase(self, traces, tmp_path):
        output = tmp_path / 'auc.svg'
        call_command('plot', str(traces[0]), output=str(output))
        points = re.search(r'<polyline[^>]*points="([^"]+)"', output.read_text()).group(1)
        xs = [float(pair.split(',')[0]) for pair in points.split()]
        assert all(a < b for a, b in zip(xs, xs[1:]))

    def test_empty_trace(self, config_file, output_root, tmp_path):
        call_command('run', config=str(config_file), output_root=str(output_root), rounds=0, workers=1)
        (directory,) = run_dirs(output_root)
        with pytest.raises(CommandError) as info:
            call_command('plot', str(directory / 'trace.csv'), output=str(tmp_path / 'auc.svg'))
        assert info.value.returncode == 3

    def test_missing_trace(self, tmp_path):
        with pytest.raises(CommandError) as info:
            call_command('plot', str(tmp_path / 'none.csv'), output=str(tmp_path / 'auc.svg'))
        assert info.value.returncode == 2


class TestRenderSvg:

    def test_no_curves(self):
        with pytest.raises(ValueError):
            render_svg([])

    def test_flat_curve(self):
        body = render_svg([('flat', [(1.0, 0.5), (2.0, 0.5)])])
        assert body.count('<polyline') == 1


class TestPartitionReportCommand:

    def test_synthetic_report(self):
        out = StringIO()
        call_command('partition_report', synthetic=True, distribution='exponential', ubi=0.1172,
                     clients=8, seed=0, stdout=out)
        rows = list(csv.DictReader(out.getvalue().splitlines()))
        assert [int(r['client_id']) for r in rows] == list(range(8))
        assert sum(int(r['num_users']) for r in rows) == 943
        assert 0.9 * 0.1172 <= float(rows[0]['realized_ubi']) <= 1.1 * 0.1172

    def test_invalid_ubi(self):
        with pytest.raises(CommandError) as info:
            call_command('partition_report', synthetic=True, ubi=0.0)
        assert info.value.returncode == 3

    def test_missing_ratings(self, tmp_path):
        with pytest.raises(CommandError) as info:
            call_command('partition_report', data=str(tmp_path / 'u.data'))
        assert info.value.returncode == 2
