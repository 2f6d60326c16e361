"""
The federated loop.

Each round the server snapshots last round's reputations, asks the policy for
K participants, trains them on private copies of the global model, averages
their deltas, scores every participant (reputation, relevance, data quality),
feeds the per-arm rewards back to the policy and advances the simulated clock
by the straggler's latency.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings

from dataset.features import ModalityBundle, load_features, synth_features
from dataset.movielens import InteractionLog, carve_validation, load_movielens, split_per_user, synth_interactions
from dataset.streams import LOCAL_TRAINING, keyed_rng
from metrics.efficiency import time_to_target, total_simulated_time
from metrics.ranking import RankingReport
from partition.portions import PortionVector, assign_users, compute_ubi, make_portions
from recmodel.params import ModelParams, init_params
from recmodel.training import LocalData, LocalUpdate, train_local
from selection.policies import SelectionContext, build_policy
from selection.solvers import per_arm_reward, round_reward
from sysmodel.fleet import ClientProfile, default_fleet, load_fleet
from sysmodel.latency import LatencyEstimate, estimate_latency, normalized_time, round_time, semi_boundary
from utility.ledger import ReputationLedger, build_observations
from utility.scoring import update_deviation

from .aggregation import fedavg_aggregate
from .config import DataConfig, FleetConfig, PartitionConfig, RunConfig
from .serializers import config_echo, config_hash
from .validation import ServerValidator, evaluate_model

logger = logging.getLogger(__name__)

STATUS_OK = 'ok'
STATUS_ABORTED = 'aborted'


@dataclass
class ClientRoundStats:
    """What the server learned about one participant in one round."""
    client_id: int
    num_samples: int
    mean_loss: float
    q_value: float
    gain: float
    reputation: float
    deviation: float
    relevance: float
    quality: float
    quality_norm: float
    score: float
    t_train: float
    t_comm: float
    normalized_latency: float
    reward: float


@dataclass
class RoundRecord:
    round: int
    selected: Tuple[int, ...]
    indices: Optional[Dict[int, float]] = None
    probabilities: Optional[Dict[int, float]] = None
    clients: Dict[int, ClientRoundStats] = field(default_factory=dict)
    t_round: float = 0.0
    normalized_time: float = 0.0
    round_reward: float = 0.0
    clock: float = 0.0
    q_global: Optional[float] = None
    q_marginal: Optional[float] = None
    evaluation: Optional[RankingReport] = None
    status: str = STATUS_OK
    error: str = ''

    @property
    def auc(self) -> Optional[float]:
        return self.evaluation.auc if self.evaluation else None


class RoundAbortedError(RuntimeError):
    """A participant failed; ``record`` is the diagnostic record of the round."""

    def __init__(self, record: RoundRecord):
        self.record = record
        super().__init__(f"Round {record.round} aborted: {record.error}")


@dataclass
class ExperimentResult:
    trace: List[RoundRecord]
    observations: List[dict]
    summary: dict
    params: ModelParams


def load_interactions(data: DataConfig, seed: int) -> InteractionLog:
    if data.source == 'synthetic':
        return synth_interactions(num_users=data.num_users, num_items=data.num_items, seed=seed)
    return load_movielens(data.path or settings.FEDSEL['DATA_PATH'])


def load_modalities(config: RunConfig, num_items: int) -> ModalityBundle:
    hyper = config.hyper
    if not config.data.features_path:
        return synth_features(config.seed, hyper.text_dim, hyper.visual_dim, num_items)
    bundle = load_features(config.data.features_path, num_items=num_items)
    if bundle.text.shape[1] != hyper.text_dim or bundle.visual.shape[1] != hyper.visual_dim:
        raise ValueError(
            f"Feature file dimensions ({bundle.text.shape[1]}, {bundle.visual.shape[1]}) do not match "
            f"text_dim/visual_dim ({hyper.text_dim}, {hyper.visual_dim})")
    return bundle


def client_portions(partition: PartitionConfig) -> PortionVector:
    if partition.num_clients == 1:
        return PortionVector((1.0,))
    return make_portions(partition.strategy, partition.num_clients, partition.ubi)


def build_fleet(fleet: FleetConfig, num_clients: int) -> List[ClientProfile]:
    profiles = load_fleet(fleet.path, fleet.calibration) if fleet.path else default_fleet(fleet.calibration)
    if len(profiles) < num_clients:
        raise ValueError(f"Fleet describes {len(profiles)} devices, the partition needs {num_clients}")
    return profiles[:num_clients]


class FederatedSimulation:
    """
    All mutable state of one run: global model, ledger, policy arms and the
    simulated clock. Only ``run_round`` mutates it.
    """

    def __init__(self, config: RunConfig, log: InteractionLog = None, features: ModalityBundle = None,
                 workers: int = 1):
        self.config = config
        self.workers = max(int(workers), 1)
        hyper = config.hyper
        self.log = log if log is not None else load_interactions(config.data, config.seed)
        self.features = features if features is not None else load_modalities(config, self.log.num_items)

        split = split_per_user(self.log, config.data.split_ratio, config.seed)
        self.split = carve_validation(split, config.data.validation_fraction, config.seed)

        num_clients = config.partition.num_clients
        self.assignment = assign_users(self.log, client_portions(config.partition), config.seed)
        mask = self.split.positive_mask()
        self.clients = [
            LocalData(client_id=c, pairs=self.split.train_pairs(users), positive_mask=mask)
            for c, users in enumerate(self.assignment.client_users)
        ]

        self.params = init_params(hyper, self.log.num_users, self.log.num_items, config.seed)
        self.fleet = build_fleet(config.fleet, num_clients)
        self.latencies: Dict[int, LatencyEstimate] = {
            data.client_id: estimate_latency(self.fleet[data.client_id], len(data), hyper.local_epochs,
                                             self.params.payload_bytes, config.fleet.comm_multiplier)
            for data in self.clients
        }
        self.t_semi = config.fleet.t_semi or semi_boundary(
            [self.latencies[c] for c in range(num_clients)], config.policy.k,
            config.fleet.semi_factor, config.seed)

        self.ledger = ReputationLedger(range(num_clients), config.utility)
        self.policy = build_policy(config.policy, num_clients, config.seed)
        self.validator = ServerValidator(self.split, self.features, hyper,
                                         config.data.validation_negatives, config.seed)
        self.q_global = self.validator.score(self.params)
        self.latest_updates: Dict[int, np.ndarray] = {}
        self.clock = 0.0
        self.observations: List[dict] = []

        logger.info(f"Simulation ready: {num_clients} clients, realized UBI {compute_ubi(self.assignment):.4f}, "
                    f"{self.params.num_parameters} parameters, T_semi {self.t_semi:.4f}s, "
                    f"initial Q {self.q_global:.4f}")

    @property
    def num_clients(self) -> int:
        return len(self.clients)

    def normalized_latency(self, client: int) -> float:
        return normalized_time(self.latencies[client].total, self.t_semi)

    def selection_context(self) -> SelectionContext:
        return SelectionContext(
            scores={c: self.ledger.score(c) for c in self.ledger.client_ids},
            normalized_latency={c: self.normalized_latency(c) for c in range(self.num_clients)},
            latest_updates=dict(self.latest_updates),
            t_semi=self.t_semi,
            kappa=self.config.utility.kappa,
        )

    def train_client(self, t: int, client: int) -> LocalUpdate:
        rng = keyed_rng(self.config.seed, LOCAL_TRAINING, t, client)
        return train_local(self.params, self.clients[client], self.features, self.config.hyper, rng)

    def train_selected(self, t: int, selected: Sequence[int]) -> Dict[int, LocalUpdate]:
        if self.workers > 1 and len(selected) > 1:
            with ThreadPoolExecutor(max_workers=min(self.workers, len(selected))) as pool:
                futures = {client: pool.submit(self.train_client, t, client) for client in selected}
                return {client: futures[client].result() for client in sorted(futures)}
        return {client: self.train_client(t, client) for client in sorted(selected)}

    def evaluate(self, params=None) -> RankingReport:
        evaluation = self.config.evaluation
        params = self.params if params is None else params
        return evaluate_model(params, self.features, self.config.hyper, self.split,
                              k=evaluation.k, chunk=evaluation.user_chunk)

    def run_round(self, t: int) -> RoundRecord:
        config = self.config
        self.ledger.begin_round()
        result = self.policy.select(t, self.selection_context())
        selected = tuple(sorted(result.selected))
        record = RoundRecord(round=t, selected=selected, indices=result.indices,
                             probabilities=result.probabilities, clock=self.clock)

        try:
            updates = self.train_selected(t, selected)
        except Exception as exc:
            record.status = STATUS_ABORTED
            record.error = f"{type(exc).__name__}: {exc}"
            logger.error(f"Round {t}: local training failed ({record.error})")
            raise RoundAbortedError(record) from exc

        previous = self.params
        new_global = fedavg_aggregate(previous, list(updates.values()))
        q_previous = self.q_global
        q_new = self.validator.score(new_global)
        improved = q_new > q_previous
        new_flat = new_global.flatten()
        total_samples = sum(u.num_samples for u in updates.values())

        q_values, deviations = {}, {}
        for client, update in updates.items():
            local = previous + update.delta
            q_values[client] = self.validator.score(local) if config.utility.attribution == 'marginal' else q_new
            deviations[client] = update_deviation(local.flatten(), new_flat)
            self.ledger.record_contribution(client, q_values[client], q_previous)
            self.ledger.record_relevance(client, deviations[client], improved)
            self.ledger.record_quality(client, update.sample_losses)

        rewards = {}
        for client, update in updates.items():
            entry = self.ledger[client]
            latency = self.latencies[client]
            score = self.ledger.score(client)
            rewards[client] = per_arm_reward(score, self.normalized_latency(client), config.utility.kappa)
            record.clients[client] = ClientRoundStats(
                client_id=client, num_samples=update.num_samples, mean_loss=update.mean_loss,
                q_value=q_values[client], gain=entry.gain, reputation=entry.reputation,
                deviation=deviations[client], relevance=entry.relevance,
                quality=entry.quality, quality_norm=entry.quality_norm, score=score,
                t_train=latency.t_train, t_comm=latency.t_comm,
                normalized_latency=self.normalized_latency(client), reward=rewards[client],
            )
        self.policy.update(t, rewards)

        record.t_round = round_time([self.latencies[c] for c in selected])
        record.normalized_time = normalized_time(record.t_round, self.t_semi)
        record.round_reward = round_reward([record.clients[c].score for c in selected],
                                           record.t_round, self.t_semi, config.utility.kappa)
        self.clock += record.t_round
        record.clock = self.clock
        record.q_global = q_new
        record.q_marginal = sum(q_values[c] * updates[c].num_samples / total_samples for c in selected)

        for observation in build_observations(self.ledger, self.latencies).values():
            self.ledger.observe(observation)
            row = {'round': t, **observation.as_row()}
            self.observations.append(row)
            logger.debug(f"Round {t} observation {row}")

        self.params = new_global
        self.q_global = q_new
        for client, update in updates.items():
            self.latest_updates[client] = update.delta.flatten()

        if t % config.evaluation.every == 0 or t == config.rounds:
            record.evaluation = self.evaluate()

        auc = f"{record.auc:.4f}" if record.auc is not None else '-'
        logger.info(f"Round {t}: selected {list(selected)}, T_round {record.t_round:.3f}s, "
                    f"clock {record.clock:.3f}s, Q {q_new:.4f}, AUC {auc}")
        return record


def build_summary(config: RunConfig, simulation: FederatedSimulation, trace: Sequence[RoundRecord],
                  initial: RankingReport, final: RankingReport, status: str, stopped_early: bool) -> dict:
    completed = [r for r in trace if r.status == STATUS_OK]
    target = config.evaluation.target_auc
    return {
        'config': config_echo(config),
        'config_hash': config_hash(config),
        'status': status,
        'rounds_completed': len(completed),
        'stopped_early': stopped_early,
        'initial': initial.as_dict(),
        'final': final.as_dict(),
        'target_auc': target,
        'time_to_target': time_to_target(((r.clock, r.auc) for r in completed), target),
        'total_simulated_time': total_simulated_time(r.t_round for r in completed),
        'cumulative_round_reward': float(sum(r.round_reward for r in completed)),
        't_semi': simulation.t_semi,
        'realized_ubi': compute_ubi(simulation.assignment),
    }


def run_experiment(config: RunConfig, log: InteractionLog = None, features: ModalityBundle = None,
                   workers: int = None) -> ExperimentResult:
    """
    ``config.rounds`` rounds, or fewer when evaluation AUC fails to improve by
    ``min_delta`` for ``patience`` consecutive evaluations. A failed round
    ends the run with an aborted record.
    """
    if workers is None:
        workers = settings.FEDSEL.get('WORKERS', 1)
    simulation = FederatedSimulation(config, log=log, features=features, workers=workers)
    initial = simulation.evaluate()
    final = initial
    best = initial.auc if initial.auc is not None else float('-inf')
    stale = 0
    trace: List[RoundRecord] = []
    status, stopped_early = 'completed', False

    for t in range(1, config.rounds + 1):
        try:
            record = simulation.run_round(t)
        except RoundAbortedError as exc:
            trace.append(exc.record)
            status = 'aborted'
            break
        trace.append(record)
        if record.evaluation is None:
            continue
        final = record.evaluation
        if record.auc is not None and record.auc >= best + config.evaluation.min_delta:
            best, stale = record.auc, 0
        else:
            stale += 1
        if stale >= config.evaluation.patience:
            logger.info(f"Early stop after round {t}: no AUC gain of {config.evaluation.min_delta} "
                        f"in {stale} evaluations")
            stopped_early = True
            break

    if trace and trace[-1].status == STATUS_OK and trace[-1].evaluation is None:
        final = simulation.evaluate()

    summary = build_summary(config, simulation, trace, initial, final, status, stopped_early)
    logger.info(f"Run {summary['config_hash']} {status}: {summary['rounds_completed']} rounds, "
                f"simulated time {summary['total_simulated_time']:.3f}s, final AUC {final.auc}")
    return ExperimentResult(trace=trace, observations=simulation.observations, summary=summary,
                            params=simulation.params)
