"""
Run configuration: every knob of one simulated experiment.

The dataclasses are frozen so a RunConfig can be hashed and echoed verbatim;
``orchestrator.serializers`` builds them from JSON and validates ranges.
"""
from dataclasses import dataclass, field
from typing import Optional

from partition.portions import STRATEGIES
from recmodel.params import HyperParams
from selection.policies import PolicyConfig
from utility.scoring import UtilityWeights

DATA_SOURCES = ('movielens', 'synthetic')


@dataclass(frozen=True)
class DataConfig:
    source: str = 'movielens'
    path: Optional[str] = None
    features_path: Optional[str] = None
    num_users: int = 943            # synthetic source only
    num_items: int = 1682           # synthetic source only
    split_ratio: float = 0.8
    validation_fraction: float = 0.1
    validation_negatives: int = 100

    def __post_init__(self):
        if self.source not in DATA_SOURCES:
            raise ValueError(f"Unknown data source {self.source!r}; expected one of {DATA_SOURCES}")
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError(f"split_ratio must lie in (0, 1), got {self.split_ratio}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError(f"validation_fraction must lie in (0, 1), got {self.validation_fraction}")
        if self.validation_negatives < 1:
            raise ValueError(f"validation_negatives must be >= 1, got {self.validation_negatives}")


@dataclass(frozen=True)
class PartitionConfig:
    strategy: str = 'exponential'
    ubi: float = 0.0146
    num_clients: int = 8

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"Unknown partition strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if not 0.0 < self.ubi <= 1.0:
            raise ValueError(f"UBI must lie in (0, 1], got {self.ubi}")
        if self.num_clients < 1:
            raise ValueError(f"num_clients must be >= 1, got {self.num_clients}")


@dataclass(frozen=True)
class FleetConfig:
    path: Optional[str] = None
    calibration: float = 200.0
    comm_multiplier: float = 2.0
    t_semi: Optional[float] = None
    semi_factor: float = 1.5

    def __post_init__(self):
        if self.t_semi is not None and self.t_semi <= 0:
            raise ValueError(f"t_semi must be > 0, got {self.t_semi}")


@dataclass(frozen=True)
class EvaluationConfig:
    every: int = 1
    k: int = 50
    target_auc: float = 0.80
    patience: int = 20
    min_delta: float = 1e-4
    user_chunk: int = 16

    def __post_init__(self):
        if self.every < 1:
            raise ValueError(f"Evaluation cadence must be >= 1, got {self.every}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class RunConfig:
    name: str = 'run'
    seed: int = 0
    rounds: int = 100
    data: DataConfig = field(default_factory=DataConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    hyper: HyperParams = field(default_factory=HyperParams)
    utility: UtilityWeights = field(default_factory=UtilityWeights)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    fleet: FleetConfig = field(default_factory=FleetConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    def __post_init__(self):
        if self.rounds < 0:
            raise ValueError(f"rounds must be >= 0, got {self.rounds}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")
        if self.policy.k > self.partition.num_clients:
            raise ValueError(f"K ({self.policy.k}) exceeds the number of clients ({self.partition.num_clients})")
