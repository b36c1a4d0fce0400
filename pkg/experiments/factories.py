"""factory-boy factories for the config dataclasses, sized for quick tests."""
import factory

from merging.search import TrmConfig
from streams.generator import StreamConfig
from training.optim import TrainConfig

from .config import BaselineConfig, ExperimentConfig, ModelConfig


class StreamConfigFactory(factory.Factory):
    class Meta:
        model = StreamConfig

    num_classes = 6
    num_tasks = 3
    samples_per_class_train = 30
    samples_per_class_test = 20
    input_dim = 2
    cluster_radius = 5.0
    noise_sigma = 0.5
    seed = factory.Sequence(lambda n: n)


class ModelConfigFactory(factory.Factory):
    class Meta:
        model = ModelConfig

    hidden_sizes = (8,)
    activation = 'relu'


class TrainConfigFactory(factory.Factory):
    class Meta:
        model = TrainConfig

    epochs = 5
    batch_size = 16
    learning_rate = 0.01
    weight_decay = 0.0
    seed = 0


class TrmConfigFactory(factory.Factory):
    class Meta:
        model = TrmConfig

    merge_epochs = 1
    steps_per_epoch = 3
    merge_batch_size = 64
    seed = 0


class ExperimentConfigFactory(factory.Factory):
    class Meta:
        model = ExperimentConfig

    stream = factory.SubFactory(StreamConfigFactory, seed=0)
    model = factory.SubFactory(ModelConfigFactory)
    train = factory.SubFactory(TrainConfigFactory)
    trm = factory.SubFactory(TrmConfigFactory)
    baselines = factory.LazyFunction(BaselineConfig)
    strategies = ('seq_finetune', 'trm')
    seeds = (0,)
    output_dir = None
