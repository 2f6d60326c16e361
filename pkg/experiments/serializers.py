"""
Serializer for experiment-matrix documents used by ``manage.py compare``.
"""
from dataclasses import replace
from typing import List

from rest_framework import serializers

from orchestrator.config import RunConfig
from orchestrator.serializers import PartitionConfigSerializer, RunConfigSerializer
from selection.policies import POLICY_ALIASES, POLICY_KINDS


class ExperimentMatrixSerializer(serializers.Serializer):
    """
    ``base`` is a RunConfig document; the run list is the cartesian product
    partitions x policies x seeds applied on top of it.
    """
    base = RunConfigSerializer(required=False)
    policies = serializers.ListField(
        child=serializers.ChoiceField(choices=POLICY_KINDS + tuple(POLICY_ALIASES)),
        allow_empty=False,
    )
    partitions = serializers.ListField(child=PartitionConfigSerializer(), required=False)
    seeds = serializers.ListField(child=serializers.IntegerField(min_value=0), required=False)
    output = serializers.CharField(required=False, allow_null=True)

    def validate_seeds(self, value):
        if len(set(value)) != len(value):
            raise serializers.ValidationError("Seeds must be distinct")
        return value

    def validate(self, attrs):
        try:
            self.expand(attrs)
        except ValueError as exc:
            raise serializers.ValidationError(str(exc))
        return attrs

    def expand(self, attrs) -> List[RunConfig]:
        base = self.fields['base'].build(attrs['base']) if 'base' in attrs else RunConfig()
        partitions = [replace(base.partition, **p) for p in attrs.get('partitions', [])] or [base.partition]
        seeds = attrs.get('seeds') or [base.seed]
        return [
            replace(base, partition=partition, policy=replace(base.policy, kind=policy), seed=seed)
            for partition in partitions
            for policy in attrs['policies']
            for seed in seeds
        ]

    def create(self, validated_data):
        return self.expand(validated_data)
