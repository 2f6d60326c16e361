"""
Run artifacts: trace.csv, observations.csv, summary.json, config-echo.json.

trace.csv has one row per round. Fixed columns come first (ROUND_COLUMNS),
then one block of CLIENT_FIELDS per client named ``c<id>_<field>``. Floats are
written with six decimals; empty cells mean "not measured this round".
"""
import csv
import json
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

from utility.ledger import OBSERVATION_FIELDS

from .engine import RoundRecord

ROUND_COLUMNS = (
    'round', 'status', 'selected', 't_round', 'normalized_time', 'round_reward', 'clock',
    'q_global', 'q_marginal', 'auc', 'ndcg', 'recall', 'precision', 'f1',
)
CLIENT_FIELDS = (
    'selected', 'index', 'probability', 'q_value', 'gain', 'reputation', 'deviation', 'relevance',
    'quality', 'quality_norm', 'score', 't_train', 't_comm', 'normalized_latency', 'reward',
)
OBSERVATION_COLUMNS = (
    ('round', 'client_id') + OBSERVATION_FIELDS + tuple(f'{name}_z' for name in OBSERVATION_FIELDS)
)


def format_value(value) -> str:
    if value is None:
        return ''
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def trace_columns(num_clients: int) -> List[str]:
    return list(ROUND_COLUMNS) + [f'c{c}_{name}' for c in range(num_clients) for name in CLIENT_FIELDS]


def trace_row(record: RoundRecord, num_clients: int) -> List[str]:
    report = record.evaluation
    values = [
        record.round, record.status, ' '.join(str(c) for c in record.selected),
        record.t_round, record.normalized_time, record.round_reward, record.clock,
        record.q_global, record.q_marginal,
        report.auc if report else None, report.ndcg if report else None,
        report.recall if report else None, report.precision if report else None,
        report.f1 if report else None,
    ]
    for client in range(num_clients):
        stats = record.clients.get(client)
        values.append(client in record.selected)
        values.append((record.indices or {}).get(client))
        values.append((record.probabilities or {}).get(client))
        values.extend(
            getattr(stats, name) if stats else None
            for name in CLIENT_FIELDS[3:]
        )
    return [format_value(v) for v in values]


def write_trace(path, trace: Sequence[RoundRecord], num_clients: int) -> Path:
    path = Path(path)
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(trace_columns(num_clients))
        for record in trace:
            writer.writerow(trace_row(record, num_clients))
    return path


def write_observations(path, rows: Iterable[dict]) -> Path:
    path = Path(path)
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(OBSERVATION_COLUMNS)
        for row in rows:
            writer.writerow([format_value(row.get(name)) for name in OBSERVATION_COLUMNS])
    return path


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + '\n', encoding='utf-8')
    return path


def read_auc_curve(path) -> List[Tuple[float, float]]:
    """(clock, auc) for every completed, evaluated round of a trace file."""
    points = []
    with Path(path).open('r', newline='', encoding='utf-8') as handle:
        for row in csv.DictReader(handle):
            if row.get('status') != 'ok' or not row.get('auc'):
                continue
            points.append((float(row['clock']), float(row['auc'])))
    return points


def read_summary(path) -> Optional[dict]:
    path = Path(path)
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding='utf-8'))
