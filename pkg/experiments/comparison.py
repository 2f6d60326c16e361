"""
Comparison table of a finished experiment matrix, one row per run plus a
seed-averaged row per (distribution, UBI, method), and the simulated-time
ratio of each method against the random baseline.
"""
import csv
from collections import OrderedDict
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .runner import MatrixOutcome

MEAN_SEED = 'mean'


def comparison_columns(k: int = 50) -> List[str]:
    return ['Distribution', 'UBI', 'Method', 'Seed', 'Total Time (s)', 'Time to Target (s)',
            'AUC', f'NDCG@{k}', f'Recall@{k}']


def outcome_row(outcome: MatrixOutcome, k: int) -> Dict[str, object]:
    config, summary = outcome.config, outcome.summary
    final = summary['final']
    values = [config.partition.strategy, config.partition.ubi, config.policy.kind, config.seed,
              summary['total_simulated_time'], summary['time_to_target'],
              final['auc'], final['ndcg'], final['recall']]
    return OrderedDict(zip(comparison_columns(k), values))


def _mean(values) -> Optional[float]:
    """Mean over seeds; undefined as soon as one seed has no value."""
    if any(v is None for v in values):
        return None
    return float(np.mean(values))


def comparison_rows(outcomes: Sequence[MatrixOutcome], k: int = 50) -> List[Dict[str, object]]:
    groups: Dict[tuple, List[Dict[str, object]]] = OrderedDict()
    for outcome in outcomes:
        row = outcome_row(outcome, k)
        groups.setdefault((row['Distribution'], row['UBI'], row['Method']), []).append(row)

    rows = []
    metrics = comparison_columns(k)[4:]
    for (distribution, ubi, method), members in groups.items():
        rows.extend(members)
        mean = OrderedDict([('Distribution', distribution), ('UBI', ubi), ('Method', method),
                            ('Seed', MEAN_SEED)])
        mean.update((name, _mean([m[name] for m in members])) for name in metrics)
        rows.append(mean)
    return rows


def _cell(value) -> str:
    if value is None:
        return ''
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)




def _write_rows(path, columns: Sequence[str], rows: Sequence[Dict[str, object]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[name]) for name in columns])
    return path


def write_comparison(path, rows: Sequence[Dict[str, object]], k: int = 50) -> Path:
    return _write_rows(path, comparison_columns(k), rows)


BASELINE_POLICIES = ('random', 'fedavg')


def efficiency_columns() -> List[str]:
    return ['Distribution', 'UBI', 'Method', 'Baseline', 'Time to Target Ratio', 'Total Time Ratio']


def _ratio(value, baseline) -> Optional[float]:
    if value is None or baseline is None or baseline == 0:
        return None
    return float(value) / float(baseline)


def efficiency_rows(rows: Sequence[Dict[str, object]]) -> List[Dict[str, object]]:
    """
    Seed-averaged simulated time of every method divided by the random
    baseline's, per (distribution, UBI). Settings without a baseline are left
    out; a ratio is empty when either side never reached the target AUC.
    """
    means = [row for row in rows if row['Seed'] == MEAN_SEED]
    baselines = {(r['Distribution'], r['UBI']): r for r in means if r['Method'] in BASELINE_POLICIES}
    result = []
    for row in means:
        baseline = baselines.get((row['Distribution'], row['UBI']))
        if baseline is None or row is baseline:
            continue
        result.append(OrderedDict(zip(efficiency_columns(), [
            row['Distribution'], row['UBI'], row['Method'], baseline['Method'],
            _ratio(row['Time to Target (s)'], baseline['Time to Target (s)']),
            _ratio(row['Total Time (s)'], baseline['Total Time (s)']),
        ])))
    return result


def write_efficiency(path, rows: Sequence[Dict[str, object]]) -> Path:
    return _write_rows(path, efficiency_columns(), rows)
