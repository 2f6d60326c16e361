"""
Config loading and artifact handling shared by the management commands.
"""
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence

from django.conf import settings

from orchestrator.config import RunConfig
from orchestrator.engine import run_experiment
from orchestrator.serializers import config_echo, config_hash, parse_config
from orchestrator.trace import write_json, write_observations, write_trace
from recmodel.params import save_checkpoint

from .models import ExperimentRun

logger = logging.getLogger(__name__)

TRACE_FILE = 'trace.csv'
SUMMARY_FILE = 'summary.json'
ECHO_FILE = 'config-echo.json'
OBSERVATIONS_FILE = 'observations.csv'
CHECKPOINT_FILE = 'model.ckpt'


class ConfigFileError(OSError):
    """The config file is missing or unreadable."""


def read_config_document(path) -> dict:
    """Raw JSON document; OSError subclasses for I/O trouble, ValueError for bad JSON."""
    path = Path(path)
    if not path.is_file():
        raise ConfigFileError(f"Config file {path} does not exist")
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as exc:
        raise ConfigFileError(f"Cannot read config file {path}: {exc}") from exc
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise ValueError(f"{path} must hold a JSON object")
    return document


def apply_overrides(document: dict, policy: str = None, ubi: float = None, seed: int = None,
                    rounds: int = None, k: int = None, distribution: str = None) -> dict:
    """Flat command-line overrides for the experiment-matrix dimensions."""
    document = json.loads(json.dumps(document))
    if policy is not None:
        document.setdefault('policy', {})['kind'] = policy
    if k is not None:
        document.setdefault('policy', {})['k'] = k
    if ubi is not None:
        document.setdefault('partition', {})['ubi'] = ubi
    if distribution is not None:
        document.setdefault('partition', {})['strategy'] = distribution
    if seed is not None:
        document['seed'] = seed
    if rounds is not None:
        document['rounds'] = rounds
    return document


def resolve_paths(document: dict) -> dict:
    """Fill data/feature paths from settings so the echo records what was actually read."""
    data = document.setdefault('data', {})
    if data.get('source', 'movielens') == 'movielens' and not data.get('path'):
        data['path'] = settings.FEDSEL['DATA_PATH']
    if not data.get('features_path') and settings.FEDSEL.get('FEATURES_PATH'):
        data['features_path'] = settings.FEDSEL['FEATURES_PATH']
    return document


def load_run_config(path, **overrides) -> RunConfig:
    document = resolve_paths(apply_overrides(read_config_document(path), **overrides))
    return parse_config(document)


def output_root(root=None) -> Path:
    return Path(root or settings.FEDSEL['OUTPUT_ROOT'])


def run_directory(config: RunConfig, root=None) -> Path:
    return output_root(root) / config_hash(config)


def simulate_to_directory(config: RunConfig, directory, workers: int = None) -> dict:
    """Run one experiment and write every artifact into ``directory``; returns the summary."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_json(directory / ECHO_FILE, config_echo(config))
    result = run_experiment(config, workers=workers)
    write_trace(directory / TRACE_FILE, result.trace, config.partition.num_clients)
    write_observations(directory / OBSERVATIONS_FILE, result.observations)
    save_checkpoint(directory / CHECKPOINT_FILE, result.params,
                    metadata={'config_hash': result.summary['config_hash']})
    write_json(directory / SUMMARY_FILE, result.summary)
    return result.summary


def register_run(config: RunConfig, directory: Path) -> ExperimentRun:
    run, _ = ExperimentRun.objects.update_or_create(
        config_hash=config_hash(config),
        defaults={
            'name': config.name,
            'policy': config.policy.kind,
            'distribution': config.partition.strategy,
            'ubi': config.partition.ubi,
            'seed': config.seed,
            'status': ExperimentRun.STATUS_PENDING,
            'output_dir': str(directory),
            'config': config_echo(config),
            'summary': None,
        },
    )
    return run


def execute_run(config: RunConfig, root=None, workers: int = None):
    """Registered run: returns (ExperimentRun, summary, output directory)."""
    directory = run_directory(config, root)
    run = register_run(config, directory)
    logger.info(f"Run {run.config_hash}: policy {config.policy.kind}, {config.partition.strategy} "
                f"UBI {config.partition.ubi}, seed {config.seed} -> {directory}")
    run.mark_running()
    try:
        summary = simulate_to_directory(config, directory, workers)
    except Exception as exc:
        run.mark_failed(f"{type(exc).__name__}: {exc}")
        raise
    run.mark_finished(summary)
    return run, summary, directory


def _simulate_entry(args):
    config, directory, workers = args
    return simulate_to_directory(config, directory, workers)


@dataclass
class MatrixOutcome:
    config: RunConfig
    directory: Path
    summary: dict


def execute_matrix(configs: Sequence[RunConfig], root=None, processes: int = 1,
                   workers: int = None) -> List[MatrixOutcome]:
    """
    Run every config of a matrix, in separate processes when ``processes`` > 1.
    Registry rows are written from this process only.
    """
    directories = [run_directory(config, root) for config in configs]
    runs = [register_run(config, directory) for config, directory in zip(configs, directories)]
    summaries = []
    try:
        if processes > 1:
            for run in runs:
                run.mark_running()
            jobs = [(config, directory, workers) for config, directory in zip(configs, directories)]
            with ProcessPoolExecutor(max_workers=processes) as pool:
                for run, summary in zip(runs, pool.map(_simulate_entry, jobs)):
                    run.mark_finished(summary)
                    summaries.append(summary)
        else:
            for config, directory, run in zip(configs, directories, runs):
                run.mark_running()
                summary = simulate_to_directory(config, directory, workers)
                run.mark_finished(summary)
                summaries.append(summary)
    except Exception as exc:
        for run in runs[len(summaries):]:
            run.mark_failed(f"{type(exc).__name__}: {exc}")
        raise

    return [MatrixOutcome(config=c, directory=d, summary=s) for c, d, s in zip(configs, directories, summaries)]