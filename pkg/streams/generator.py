"""
Synthetic class-incremental task streams.

Class c is a Gaussian blob N(mu_c, noise_sigma^2 I). In two dimensions the
means sit on a ring of radius cluster_radius; in higher dimensions they are
random unit directions scaled by cluster_radius. Classes are dealt to tasks
contiguously by index, so task t owns classes [(t-1)k, tk).
"""
import csv
import io
import logging
from dataclasses import dataclass

import numpy as np

from core.exceptions import ContractViolation, require
from core.rng import RngState
from core.storage import format_real, write_text_atomic

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StreamConfig:
    num_classes: int = 10
    num_tasks: int = 5
    samples_per_class_train: int = 100
    samples_per_class_test: int = 50
    input_dim: int = 2
    cluster_radius: float = 5.0
    noise_sigma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        require(self.num_tasks >= 1, 'a stream needs at least one task')
        require(self.num_classes >= 1, 'a stream needs at least one class')
        if self.num_classes % self.num_tasks:
            raise ContractViolation(
                f"{self.num_classes} classes cannot be split evenly into {self.num_tasks} tasks"
            )
        require(self.samples_per_class_train >= 1, 'samples_per_class_train must be >= 1')
        require(self.samples_per_class_test >= 1, 'samples_per_class_test must be >= 1')
        require(self.input_dim >= 1, 'input_dim must be >= 1')
        require(self.noise_sigma > 0, 'noise_sigma must be > 0')

    @property
    def classes_per_task(self):
        return self.num_classes // self.num_tasks


@dataclass(frozen=True)
class Split:
    features: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.labels)


@dataclass(frozen=True)
class TaskDataset:
    task_index: int
    class_ids: frozenset
    train: Split
    test: Split


def class_means(cfg):
    """Class centres: evenly spaced on a circle in 2-D, random directions otherwise."""
    rng = RngState(cfg.seed).spawn('means')
    if cfg.input_dim == 2:
        angles = 2.0 * np.pi * np.arange(cfg.num_classes) / cfg.num_classes
        return cfg.cluster_radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    means = np.empty((cfg.num_classes, cfg.input_dim))
    for c in range(cfg.num_classes):
        direction, _ = rng.spawn(c).normal(cfg.input_dim)
        means[c] = cfg.cluster_radius * direction / np.linalg.norm(direction)
    return means


def _sample_split(cfg, means, class_ids, split, per_class):
    rng = RngState(cfg.seed).spawn(split)
    features, labels = [], []
    for c in class_ids:
        noise, _ = rng.spawn(c).normal(per_class * cfg.input_dim)
        features.append(means[c] + cfg.noise_sigma * noise.reshape(per_class, cfg.input_dim))
        labels.append(np.full(per_class, c, dtype=np.int64))
    return Split(np.concatenate(features), np.concatenate(labels))


def generate_stream(cfg):
    """Class-incremental task list; task t owns classes [(t-1)k, tk)."""
    means = class_means(cfg)
    k = cfg.classes_per_task
    stream = []
    for t in range(cfg.num_tasks):
        class_ids = list(range(t * k, (t + 1) * k))
        stream.append(TaskDataset(
            task_index=t + 1,
            class_ids=frozenset(class_ids),
            train=_sample_split(cfg, means, class_ids, 'train', cfg.samples_per_class_train),
            test=_sample_split(cfg, means, class_ids, 'test', cfg.samples_per_class_test),
        ))
    logger.debug(f"Generated {cfg.num_tasks} tasks of {k} classes (seed {cfg.seed})")
    return stream


def joint_testset(stream, upto_t):
    """Test splits of tasks 1..upto_t concatenated in task order."""
    if not 1 <= upto_t <= len(stream):
        raise ContractViolation(f"upto_t must lie in [1, {len(stream)}], got {upto_t}")
    seen = stream[:upto_t]
    return Split(
        np.concatenate([task.test.features for task in seen]),
        np.concatenate([task.test.labels for task in seen]),
    )


def write_csv(path, stream):
    """One row per sample: task,split,class,feature_0..feature_{d-1}."""
    dim = stream[0].train.features.shape[1]
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(['task', 'split', 'class'] + [f"feature_{i}" for i in range(dim)])
    for task in stream:
        for split_name in ('train', 'test'):
            split = getattr(task, split_name)
            for row, label in zip(split.features, split.labels):
                writer.writerow([task.task_index, split_name, int(label)] + [format_real(v) for v in row])
    return write_text_atomic(path, buffer.getvalue())


def read_csv(path, task=None, split=None):
    """Load samples from a stream dump, optionally filtered by task index and split."""
    features, labels = [], []
    try:
        handle = open(path, newline='')
    except OSError as exc:
        raise ContractViolation(f"cannot read stream dump {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header or header[:3] != ['task', 'split', 'class']:
            raise ContractViolation(f"{path} is not a stream dump (bad header)")
        for line_no, row in enumerate(reader, start=2):
            if len(row) < 4 or len(row) != len(header):
                raise ContractViolation(
                    f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                row_task, label = int(row[0]), int(row[2])
                values = [float(v) for v in row[3:]]
            except ValueError as exc:
                raise ContractViolation(f"{path}:{line_no}: {exc}") from exc
            if task is not None and row_task != task:
                continue
            if split is not None and row[1] != split:
                continue
            labels.append(label)
            features.append(values)
    if not labels:
        raise ContractViolation(f"{path} holds no samples for task={task} split={split}")
    return Split(np.array(features, dtype=np.float64), np.array(labels, dtype=np.int64))
