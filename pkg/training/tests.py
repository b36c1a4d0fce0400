import numpy as np
import pytest

from core.exceptions import ContractViolation
from core.rng import RngState
from networks.mlp import MlpSpec, init_params
from streams.generator import StreamConfig, generate_stream
from training.finetune import finetune
from training.optim import AdamState, TrainConfig, adamw_step, cosine_lr


class TestAdamwStep:
    """Tests for one AdamW update"""

    def test_pure_decay(self):
        """Test that a zero gradient only applies weight decay"""
        theta = np.array([1.0, -2.0, 3.0])
        cfg = TrainConfig(learning_rate=0.01, weight_decay=0.1)
        out = adamw_step(theta, np.zeros(3), AdamState.zeros(3), cfg, step=1)
        assert np.allclose(out, theta * (1 - 0.001), rtol=0, atol=1e-14)

    def test_first_step_is_sign(self):
        """Test that the first bias-corrected step moves by lr times the sign"""
        theta = np.zeros(3)
        grad = np.array([0.3, -5.0, 2e-3])
        cfg = TrainConfig(learning_rate=0.01, weight_decay=0.0)
        out = adamw_step(theta, grad, AdamState.zeros(3), cfg, step=1)
        assert np.allclose(out, -0.01 * np.sign(grad), rtol=0, atol=0.01 * 1e-6)

    def test_fixed_point(self):
        """Test that zero gradient and no decay leave theta unchanged"""
        theta = np.array([0.5, 1.5])
        cfg = TrainConfig(weight_decay=0.0)
        out = adamw_step(theta, np.zeros(2), AdamState.zeros(2), cfg, step=3)
        assert np.array_equal(out, theta)

    def test_length_mismatch(self):
        """Test that gradient and theta must have one length"""
        with pytest.raises(ContractViolation):
            adamw_step(np.zeros(3), np.zeros(2), AdamState.zeros(3), TrainConfig(), step=1)

    def test_step_starts_at_one(self):
        """Test that step 0 is rejected"""
        with pytest.raises(ContractViolation):
            adamw_step(np.zeros(2), np.zeros(2), AdamState.zeros(2), TrainConfig(), step=0)


class TestCosineLr:
    """Tests for the annealing schedule"""

    def test_endpoints(self):
        """Test the learning rate at the first and last step"""
        cfg = TrainConfig(learning_rate=0.1)
        assert cosine_lr(cfg, 1, 100) == pytest.approx(0.1)
        assert cosine_lr(cfg, 100, 100) == pytest.approx(0.001)

    def test_disabled(self):
        """Test that disabling annealing keeps the base rate"""
        cfg = TrainConfig(learning_rate=0.1, cosine_anneal=False)
        assert cosine_lr(cfg, 50, 100) == 0.1


@pytest.fixture
def task():
    """Fixture for the first task of a small stream"""
    return generate_stream(StreamConfig(num_classes=4, num_tasks=2, samples_per_class_train=50))[0]


class TestFinetune:
    """Tests for minibatch finetuning"""

    def test_zero_epochs(self, task):
        """Test that zero epochs return the start model"""
        start = init_params(MlpSpec((2, 8, 4)), RngState(0))
        model, report = finetune(start, task, TrainConfig(epochs=0))
        assert np.array_equal(model.theta, start.theta)
        assert report.steps == 0

    def test_start_not_mutated(self, task):
        """Test that finetuning leaves the start model untouched"""
        start = init_params(MlpSpec((2, 8, 4)), RngState(0))
        before = start.theta.copy()
        finetune(start, task, TrainConfig(epochs=2))
        assert np.array_equal(start.theta, before)

    def test_deterministic(self, task):
        """Test that one seed gives byte-identical weights"""
        start = init_params(MlpSpec((2, 8, 4)), RngState(0))
        a, _ = finetune(start, task, TrainConfig(epochs=3, seed=4))
        b, _ = finetune(start, task, TrainConfig(epochs=3, seed=4))
        assert a.theta.tobytes() == b.theta.tobytes()

    def test_separable_blobs(self, task):
        """Test that separable blobs reach high training accuracy"""
        start = init_params(MlpSpec((2, 16, 4)), RngState(1))
        _, report = finetune(start, task, TrainConfig(epochs=20, learning_rate=0.01))
        assert report.train_accuracy >= 0.95
        assert all(np.isfinite(report.epoch_losses))

    @pytest.mark.parametrize('seed', range(10))
    def test_loss_decreases(self, seed):
        """Test that the last epoch loss is below the first"""
        stream = generate_stream(StreamConfig(seed=seed))
        start = init_params(MlpSpec((2, 64, 64, 10)), RngState(seed))
        _, report = finetune(start, stream[seed % 5], TrainConfig(seed=seed))
        assert report.epoch_losses[-1] < report.epoch_losses[0]
