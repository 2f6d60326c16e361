"""
Serializers for RunConfig JSON documents.

``RunConfigSerializer(data=...)`` validates a config file, ``save()`` returns
the frozen RunConfig and ``RunConfigSerializer(config).data`` is the echo
written next to every run's artifacts.
"""
import hashlib
import json

from rest_framework import serializers

from partition.portions import STRATEGIES
from recmodel.params import HyperParams
from selection.policies import POLICY_ALIASES, POLICY_KINDS, PolicyConfig
from utility.scoring import ATTRIBUTION_MODES, UtilityWeights

from .config import (
    DATA_SOURCES,
    DataConfig,
    EvaluationConfig,
    FleetConfig,
    PartitionConfig,
    RunConfig,
)


class DataclassSerializer(serializers.Serializer):
    """
    Plain serializer over a frozen dataclass. Omitted fields fall back to the
    dataclass defaults; the dataclass' own checks run as object-level validation.
    """
    dataclass = None

    def build(self, attrs):
        return self.dataclass(**attrs)

    def validate(self, attrs):
        try:
            self.build(attrs)
        except ValueError as exc:
            raise serializers.ValidationError(str(exc))
        return attrs

    def create(self, validated_data):
        return self.build(validated_data)


class DataConfigSerializer(DataclassSerializer):
    """Interaction source, feature file and split settings."""
    dataclass = DataConfig

    source = serializers.ChoiceField(choices=DATA_SOURCES, required=False)
    path = serializers.CharField(required=False, allow_null=True)
    features_path = serializers.CharField(required=False, allow_null=True)
    num_users = serializers.IntegerField(min_value=1, required=False)
    num_items = serializers.IntegerField(min_value=1, required=False)
    split_ratio = serializers.FloatField(required=False)
    validation_fraction = serializers.FloatField(required=False)
    validation_negatives = serializers.IntegerField(min_value=1, required=False)


class PartitionConfigSerializer(DataclassSerializer):
    dataclass = PartitionConfig

    strategy = serializers.ChoiceField(choices=STRATEGIES, required=False)
    ubi = serializers.FloatField(required=False)
    num_clients = serializers.IntegerField(min_value=1, required=False)


class HyperParamsSerializer(DataclassSerializer):
    """Model and local-training hyper-parameters."""
    dataclass = HyperParams

    dim = serializers.IntegerField(min_value=1, required=False)
    factors = serializers.IntegerField(min_value=1, required=False)
    text_dim = serializers.IntegerField(min_value=1, required=False)
    visual_dim = serializers.IntegerField(min_value=1, required=False)
    text_hidden = serializers.IntegerField(min_value=1, required=False)
    visual_hidden = serializers.IntegerField(min_value=1, required=False)
    attention_hidden = serializers.IntegerField(min_value=1, required=False)
    negatives = serializers.IntegerField(min_value=1, required=False)
    margin = serializers.FloatField(required=False)
    dcor_weight = serializers.FloatField(min_value=0.0, required=False)
    weight_decay = serializers.FloatField(min_value=0.0, required=False)
    lr = serializers.FloatField(required=False)
    dropout = serializers.FloatField(required=False)
    local_epochs = serializers.IntegerField(min_value=0, required=False)
    batch_size = serializers.IntegerField(min_value=1, required=False)


class UtilityWeightsSerializer(DataclassSerializer):
    dataclass = UtilityWeights

    gamma = serializers.FloatField(required=False)
    alpha = serializers.FloatField(required=False)
    beta = serializers.FloatField(required=False)
    kappa = serializers.FloatField(required=False)
    attribution = serializers.ChoiceField(choices=ATTRIBUTION_MODES, required=False)


class PolicyConfigSerializer(DataclassSerializer):
    """Selection policy; ``kind`` also accepts the reporting aliases."""
    dataclass = PolicyConfig

    kind = serializers.ChoiceField(choices=POLICY_KINDS + tuple(POLICY_ALIASES), required=False)
    rho = serializers.FloatField(min_value=0.0, required=False)
    discount = serializers.FloatField(required=False)
    window = serializers.IntegerField(min_value=1, required=False, allow_null=True)
    k = serializers.IntegerField(min_value=1, required=False)
    clusters = serializers.IntegerField(min_value=1, required=False)


class FleetConfigSerializer(DataclassSerializer):
    """Device profiles (default fleet when ``path`` is null) and latency knobs."""
    dataclass = FleetConfig

    path = serializers.CharField(required=False, allow_null=True)
    calibration = serializers.FloatField(required=False)
    comm_multiplier = serializers.FloatField(required=False)
    t_semi = serializers.FloatField(required=False, allow_null=True)
    semi_factor = serializers.FloatField(required=False)

    def validate_calibration(self, value):
        if value <= 0:
            raise serializers.ValidationError("Calibration constant must be positive")
        return value

    def validate_comm_multiplier(self, value):
        if value <= 0:
            raise serializers.ValidationError("Communication multiplier must be positive")
        return value


class EvaluationConfigSerializer(DataclassSerializer):
    dataclass = EvaluationConfig

    every = serializers.IntegerField(min_value=1, required=False)
    k = serializers.IntegerField(min_value=1, required=False)
    target_auc = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    patience = serializers.IntegerField(min_value=1, required=False)
    min_delta = serializers.FloatField(min_value=0.0, required=False)
    user_chunk = serializers.IntegerField(min_value=1, required=False)


class RunConfigSerializer(DataclassSerializer):
    """A full experiment; every section is optional and defaults to its dataclass."""
    dataclass = RunConfig

    name = serializers.CharField(max_length=100, required=False)
    seed = serializers.IntegerField(min_value=0, required=False)
    rounds = serializers.IntegerField(min_value=0, required=False)
    data = DataConfigSerializer(required=False)
    partition = PartitionConfigSerializer(required=False)
    model = HyperParamsSerializer(source='hyper', required=False)
    utility = UtilityWeightsSerializer(required=False)
    policy = PolicyConfigSerializer(required=False)
    fleet = FleetConfigSerializer(required=False)
    evaluation = EvaluationConfigSerializer(required=False)

    def build(self, attrs):
        attrs = dict(attrs)
        for field in self.fields.values():
            if isinstance(field, DataclassSerializer) and field.source in attrs:
                attrs[field.source] = field.build(attrs[field.source])
        return RunConfig(**attrs)


def parse_config(data) -> RunConfig:
    """Validate a config document; raises rest_framework ValidationError."""
    serializer = RunConfigSerializer(data=data)
    serializer.is_valid(raise_exception=True)
    return serializer.save()


def config_echo(config: RunConfig) -> dict:
    """The config as plain JSON-ready dicts."""
    return json.loads(json.dumps(RunConfigSerializer(config).data))


def canonical_json(config: RunConfig) -> str:
    return json.dumps(config_echo(config), sort_keys=True, separators=(',', ':'))


def config_hash(config: RunConfig) -> str:
    """First 12 hex digits of SHA-256 over the canonical echo."""
    return hashlib.sha256(canonical_json(config).encode('utf-8')).hexdigest()[:12]
