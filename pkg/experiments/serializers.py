"""
Validation of experiment config files.

A config is JSON text with an explicit schema_version. Each nested section
has its own serializer; validated data becomes the frozen dataclasses the
library works with.
"""
import json
from pathlib import Path

from django.conf import settings
from rest_framework import serializers

from core.exceptions import ConfigError, ContractViolation
from merging.search import CROSSOVER_MODES, TrmConfig
from merging.subspace import PERTURBATION_MODES
from networks.mlp import ACTIVATIONS
from streams.generator import StreamConfig
from training.optim import TrainConfig

from .config import STRATEGIES, BaselineConfig, ExperimentConfig, ModelConfig


class StreamConfigSerializer(serializers.Serializer):
    """Serializer for the synthetic stream section"""
    num_classes = serializers.IntegerField(min_value=1)
    num_tasks = serializers.IntegerField(min_value=1)
    samples_per_class_train = serializers.IntegerField(min_value=1, required=False)
    samples_per_class_test = serializers.IntegerField(min_value=1, required=False)
    input_dim = serializers.IntegerField(min_value=1, required=False)
    cluster_radius = serializers.FloatField(min_value=0.0, required=False)
    noise_sigma = serializers.FloatField(required=False)
    seed = serializers.IntegerField(min_value=0, required=False)

    def validate_noise_sigma(self, value):
        if value <= 0:
            raise serializers.ValidationError("noise_sigma must be greater than 0")
        return value

    def validate(self, attrs):
        if attrs['num_classes'] % attrs['num_tasks']:
            raise serializers.ValidationError(
                f"num_classes ({attrs['num_classes']}) must be divisible by "
                f"num_tasks ({attrs['num_tasks']})"
            )
        return attrs


class ModelConfigSerializer(serializers.Serializer):
    """Serializer for the MLP section"""
    hidden_sizes = serializers.ListField(child=serializers.IntegerField(min_value=1),
                                         required=False)
    activation = serializers.ChoiceField(choices=ACTIVATIONS, required=False)


class TrainConfigSerializer(serializers.Serializer):
    """Serializer for the finetuning section"""
    epochs = serializers.IntegerField(min_value=0, required=False)
    batch_size = serializers.IntegerField(min_value=1, required=False)
    learning_rate = serializers.FloatField(required=False)
    weight_decay = serializers.FloatField(min_value=0.0, required=False)
    beta1 = serializers.FloatField(min_value=0.0, required=False)
    beta2 = serializers.FloatField(min_value=0.0, required=False)
    eps_adam = serializers.FloatField(min_value=0.0, required=False)
    cosine_anneal = serializers.BooleanField(required=False)
    seed = serializers.IntegerField(min_value=0, required=False)

    def validate_learning_rate(self, value):
        if value <= 0:
            raise serializers.ValidationError("learning_rate must be greater than 0")
        return value

    def validate_beta1(self, value):
        if value >= 1:
            raise serializers.ValidationError("beta1 must be below 1")
        return value

    def validate_beta2(self, value):
        if value >= 1:
            raise serializers.ValidationError("beta2 must be below 1")
        return value


class TrmConfigSerializer(serializers.Serializer):
    """Serializer for the merge-search section"""
    lambda1 = serializers.FloatField(min_value=0.0, required=False)
    lambda2 = serializers.FloatField(min_value=0.0, required=False)
    align_weight = serializers.FloatField(min_value=0.0, required=False)
    layer_pivot = serializers.IntegerField(min_value=1, allow_null=True, required=False)
    crossover_ratio = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    crossover_mode = serializers.ChoiceField(choices=CROSSOVER_MODES, required=False)
    merge_epochs = serializers.IntegerField(min_value=1, required=False)
    steps_per_epoch = serializers.IntegerField(min_value=1, required=False)
    coeff_lr = serializers.FloatField(required=False)
    fd_eps = serializers.FloatField(required=False)
    beta_max = serializers.FloatField(min_value=0.0, required=False)
    merge_batch_size = serializers.IntegerField(min_value=1, required=False)
    num_perturbations = serializers.IntegerField(min_value=0, required=False)
    perturbation_mode = serializers.ChoiceField(choices=PERTURBATION_MODES, required=False)
    clamp_alpha = serializers.BooleanField(required=False)
    anchor_only = serializers.BooleanField(required=False)
    seed = serializers.IntegerField(min_value=0, required=False)

    def validate_coeff_lr(self, value):
        if value <= 0:
            raise serializers.ValidationError("coeff_lr must be greater than 0")
        return value

    def validate_fd_eps(self, value):
        if value <= 0:
            raise serializers.ValidationError("fd_eps must be greater than 0")
        return value


class BaselineConfigSerializer(serializers.Serializer):
    """Serializer for baseline merge settings"""
    ties_keep_fraction = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)

    def validate_ties_keep_fraction(self, value):
        if value <= 0:
            raise serializers.ValidationError("ties_keep_fraction must be greater than 0")
        return value


class ExperimentConfigSerializer(serializers.Serializer):
    """Serializer for a whole experiment config file"""
    schema_version = serializers.IntegerField()
    stream = StreamConfigSerializer()
    model = ModelConfigSerializer(required=False)
    train = TrainConfigSerializer(required=False)
    trm = TrmConfigSerializer(required=False)
    baselines = BaselineConfigSerializer(required=False)
    strategies = serializers.ListField(child=serializers.ChoiceField(choices=STRATEGIES),
                                       min_length=1)
    seeds = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=1)
    output_dir = serializers.CharField(required=False, allow_blank=False)

    def validate_schema_version(self, value):
        if value != settings.CONFIG_SCHEMA_VERSION:
            raise serializers.ValidationError(
                f"Unsupported schema_version {value}; expected {settings.CONFIG_SCHEMA_VERSION}"
            )
        return value

    def validate(self, attrs):
        trm = attrs.get('trm', {})
        pivot = trm.get('layer_pivot')
        if pivot is not None:
            layers = len(attrs.get('model', {}).get('hidden_sizes', ModelConfig.hidden_sizes)) + 1
            if pivot > layers:
                raise serializers.ValidationError(
                    {'trm': {'layer_pivot': [f"layer_pivot must not exceed the {layers} layers"]}}
                )
        return attrs

    def to_config(self):
        data = self.validated_data
        model = data.get('model', {})
        if 'hidden_sizes' in model:
            model = dict(model, hidden_sizes=tuple(model['hidden_sizes']))
        try:
            return ExperimentConfig(
                stream=StreamConfig(**data['stream']),
                model=ModelConfig(**model),
                train=TrainConfig(**data.get('train', {})),
                trm=TrmConfig(**data.get('trm', {})),
                baselines=BaselineConfig(**data.get('baselines', {})),
                strategies=tuple(data['strategies']),
                seeds=tuple(data['seeds']),
                output_dir=Path(data['output_dir']) if 'output_dir' in data else None,
            )
        except ContractViolation as exc:
            raise ConfigError(str(exc)) from exc


def flatten_errors(errors, prefix=''):
    """Serializer errors as 'section.field: message' lines."""
    lines = []
    if isinstance(errors, dict):
        for key, value in errors.items():
            path = prefix if key == 'non_field_errors' else f"{prefix}.{key}" if prefix else str(key)
            lines.extend(flatten_errors(value, path))
    elif isinstance(errors, list):
        for index, value in enumerate(errors):
            if isinstance(value, (dict, list)):
                lines.extend(flatten_errors(value, f"{prefix}[{index}]"))
            else:
                lines.append(f"{prefix or 'config'}: {value}")
    else:
        lines.append(f"{prefix or 'config'}: {errors}")
    return lines


def parse_config_text(text, source='<config>', overrides=None):
    """Parse and validate a JSON config; errors carry source:line:col."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}:1:1: the config must be a JSON object")
    raw.update({key: value for key, value in (overrides or {}).items() if value is not None})
    serializer = ExperimentConfigSerializer(data=raw)
    if not serializer.is_valid():
        raise ConfigError(f"{source}: invalid config\n  " + "\n  ".join(flatten_errors(serializer.errors)))
    return serializer.to_config()


def load_experiment_config(path, overrides=None):
    """Read, validate and type a config file; overrides replace top-level keys first."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, str(path), overrides)
