"""Continual-learning metrics: per-stage accuracy matrix, last accuracy, forgetting."""
import numpy as np

from core.exceptions import ContractViolation, require
from networks.mlp import predict


def accuracy(model, testset):
    """Fraction of rows whose argmax prediction equals the label."""
    require(len(testset.labels) > 0, 'accuracy needs a nonempty test set')
    return float(np.mean(predict(model, testset.features) == testset.labels))


class AccuracyMatrix:
    """a[t][i]: accuracy on task i after stage t, defined for i <= t (1-based)."""

    def __init__(self, num_tasks):
        require(num_tasks >= 1, 'an accuracy matrix needs at least one task')
        self.num_tasks = num_tasks
        self._rows = [[None] * t for t in range(1, num_tasks + 1)]

    def _check(self, stage, task):
        if not 1 <= stage <= self.num_tasks:
            raise ContractViolation(f"stage {stage} outside [1, {self.num_tasks}]")
        if not 1 <= task <= stage:
            raise ContractViolation(f"a[{stage}][{task}] lies above the diagonal")

    def set(self, stage, task, value):
        self._check(stage, task)
        require(0.0 <= value <= 1.0, f"accuracy {value} outside [0, 1]")
        self._rows[stage - 1][task - 1] = float(value)

    def get(self, stage, task):
        self._check(stage, task)
        value = self._rows[stage - 1][task - 1]
        if value is None:
            raise ContractViolation(f"a[{stage}][{task}] has not been recorded")
        return value

    @property
    def completed_stages(self):
        return sum(1 for row in self._rows if all(v is not None for v in row))

    def rows(self):
        """(stage, task, accuracy) for every recorded entry, row by row."""
        for stage, row in enumerate(self._rows, start=1):
            for task, value in enumerate(row, start=1):
                if value is not None:
                    yield stage, task, value

    @classmethod
    def from_rows(cls, rows):
        """Build from a lower-triangular list of lists (row t holds t entries)."""
        matrix = cls(len(rows))
        for stage, row in enumerate(rows, start=1):
            require(len(row) == stage, f"row {stage} must hold {stage} entries")
            for task, value in enumerate(row, start=1):
                matrix.set(stage, task, value)
        return matrix


def average_forgetting(matrix):
    """Mean over tasks 1..T-1 of (peak accuracy over stages i..T) - final accuracy."""
    last = matrix.completed_stages
    if last < 2:
        raise ContractViolation('average forgetting needs at least two stages')
    drops = []
    for task in range(1, last):
        peak = max(matrix.get(stage, task) for stage in range(task, last + 1))
        drops.append(peak - matrix.get(last, task))
    return sum(drops) / (last - 1)
