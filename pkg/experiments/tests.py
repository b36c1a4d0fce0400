import numpy as np
import pytest

from core.exceptions import ContractViolation
from experiments.metrics import AccuracyMatrix, accuracy, average_forgetting
from networks.mlp import MlpSpec, ModelParams, flatten
from streams.generator import Split


@pytest.fixture
def identity_model():
    """Fixture for a linear 2-class model whose logits equal its inputs"""
    return ModelParams(MlpSpec((2, 2)), flatten([(np.eye(2), np.zeros(2))]))


class TestAccuracy:
    """Tests for argmax accuracy"""

    def test_all_correct(self, identity_model):
        """Test that all correct predictions give 1.0"""
        data = Split(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0, 1]))
        assert accuracy(identity_model, data) == 1.0

    def test_all_wrong(self, identity_model):
        """Test that all wrong predictions give 0.0"""
        data = Split(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([1, 0]))
        assert accuracy(identity_model, data) == 0.0

    def test_half(self, identity_model):
        """Test that half correct predictions give 0.5"""
        features = np.array([[1.0, 0.0]] * 3 + [[0.0, 1.0]] * 3)
        data = Split(features, np.array([0, 0, 0, 0, 0, 0]))
        assert accuracy(identity_model, data) == 0.5

    def test_empty(self, identity_model):
        """Test that an empty split is rejected"""
        with pytest.raises(ContractViolation):
            accuracy(identity_model, Split(np.zeros((0, 2)), np.zeros(0, dtype=np.int64)))


class TestAccuracyMatrix:
    """Tests for the lower-triangular accuracy matrix and forgetting"""

    def test_above_diagonal(self):
        """Test that entries above the diagonal are rejected"""
        matrix = AccuracyMatrix(3)
        with pytest.raises(ContractViolation):
            matrix.set(1, 2, 0.5)
        with pytest.raises(ContractViolation):
            matrix.get(2, 3)

    def test_rows_in_order(self):
        """Test that rows come out stage by stage"""
        matrix = AccuracyMatrix.from_rows([[0.9], [0.7, 0.8]])
        assert list(matrix.rows()) == [(1, 1, 0.9), (2, 1, 0.7), (2, 2, 0.8)]

    def test_constant_matrix(self):
        """Test that a constant matrix has no forgetting"""
        matrix = AccuracyMatrix.from_rows([[0.5], [0.5, 0.5], [0.5, 0.5, 0.5]])
        assert average_forgetting(matrix) == 0.0

    def test_two_tasks(self):
        """Test forgetting of a two-task matrix"""
        matrix = AccuracyMatrix.from_rows([[0.9], [0.7, 0.95]])
        assert average_forgetting(matrix) == pytest.approx(0.2)

    def test_nondecreasing_columns(self):
        """Test that improving columns count as zero forgetting"""
        matrix = AccuracyMatrix.from_rows([[0.4], [0.6, 0.5], [0.9, 0.7, 0.2]])
        assert average_forgetting(matrix) == 0.0

    def test_needs_two_stages(self):
        """Test that forgetting needs at least two stages"""
        with pytest.raises(ContractViolation):
            average_forgetting(AccuracyMatrix.from_rows([[0.9]]))
