"""Typed experiment configuration, built from JSON validated in serializers.py."""
from dataclasses import dataclass, field, replace
from pathlib import Path

from core.exceptions import require
from merging.search import TrmConfig
from networks.mlp import MlpSpec
from streams.generator import StreamConfig
from training.optim import TrainConfig

STRATEGIES = ('seq_finetune', 'average', 'ties', 'magmax', 'trm')


@dataclass(frozen=True)
class ModelConfig:
    hidden_sizes: tuple = (64, 64)
    activation: str = 'relu'

    def spec_for(self, stream_cfg):
        return MlpSpec(
            (stream_cfg.input_dim,) + tuple(self.hidden_sizes) + (stream_cfg.num_classes,),
            self.activation,
        )


@dataclass(frozen=True)
class BaselineConfig:
    ties_keep_fraction: float = 0.2


@dataclass(frozen=True)
class ExperimentConfig:
    stream: StreamConfig = field(default_factory=StreamConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    trm: TrmConfig = field(default_factory=TrmConfig)
    baselines: BaselineConfig = field(default_factory=BaselineConfig)
    strategies: tuple = ('seq_finetune', 'trm')
    seeds: tuple = (0,)
    output_dir: Path = None

    def __post_init__(self):
        require(len(self.seeds) > 0, 'at least one seed is required')
        require(len(self.strategies) > 0, 'at least one strategy is required')
        unknown = set(self.strategies) - set(STRATEGIES)
        require(not unknown, f"unknown strategies: {sorted(unknown)}")

    @property
    def spec(self):
        return self.model.spec_for(self.stream)

    def with_trm(self, **changes):
        return replace(self, trm=replace(self.trm, **changes))
