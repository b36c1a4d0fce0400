import math

import numpy as np
import pytest

from core.exceptions import ContractViolation, UndefinedAngleError
from core.rng import RngState
from diagnostics.measures import grad_angle, layer_drift, loss_interpolation_scan, taylor_check
from diagnostics.spectral import hessian_lambda_max, hvp
from networks.mlp import BatchObjective, MlpSpec, ModelParams, flatten, init_params
from streams.generator import StreamConfig, generate_stream
from training.finetune import finetune
from training.optim import TrainConfig


class Quadratic:
    """L(theta) = 1/2 theta^T A theta + b^T theta, with the objective interface the measures use."""

    def __init__(self, a, b=None):
        self.a = np.asarray(a, dtype=np.float64)
        self.b = np.zeros(len(self.a)) if b is None else np.asarray(b, dtype=np.float64)

    def loss(self, theta):
        return float(0.5 * theta @ self.a @ theta + self.b @ theta)

    def grad(self, theta):
        return self.a @ theta + self.b

    def loss_and_grad(self, theta):
        return self.loss(theta), self.grad(theta)


def random_symmetric(seed, n):
    values, _ = RngState(seed).normal(n * n)
    b = values.reshape(n, n)
    return b @ b.T / n + np.eye(n)


def constant_model(value):
    return ModelParams(MlpSpec((1, 1)), flatten([(np.zeros((1, 1)), np.array([value]))]))


@pytest.fixture(scope='module')
def converged():
    """A small tanh MLP finetuned to convergence on one task, with its batch objective"""
    task = generate_stream(StreamConfig(num_classes=4, num_tasks=2, samples_per_class_train=40))[0]
    spec = MlpSpec((2, 8, 4), 'tanh')
    model, _ = finetune(init_params(spec, RngState(0)), task,
                        TrainConfig(epochs=40, learning_rate=0.01, weight_decay=0.0))
    return model, BatchObjective(spec, task.train.features, task.train.labels)


class TestLayerDrift:
    """Tests for per-layer output drift"""

    def test_identical_models(self):
        """Test that identical models drift by zero"""
        model = init_params(MlpSpec((2, 5, 3)), RngState(0))
        drift = layer_drift(model, model, np.ones((4, 2)))
        assert drift.values == (0.0, 0.0)

    def test_only_last_layer_differs(self):
        """Test that only the changed layer reports drift"""
        spec = MlpSpec((2, 5, 3))
        model = init_params(spec, RngState(0))
        theta = model.theta.copy()
        theta[spec.slices()[-1][1]] += 1.0
        drift = layer_drift(model, model.with_theta(theta), np.ones((4, 2)))
        assert drift.values[0] == 0.0
        assert drift.values[1] > 0.0

    def test_scalar_layer(self):
        """Test drift between two constant outputs"""
        drift = layer_drift(constant_model(3.0), constant_model(1.0), np.zeros((1, 1)))
        assert drift.values == (2.0,)

    def test_spec_mismatch(self):
        """Test that models of different architectures are rejected"""
        with pytest.raises(ContractViolation):
            layer_drift(constant_model(1.0), init_params(MlpSpec((1, 2)), RngState(0)),
                        np.zeros((1, 1)))


class TestGradAngle:
    """Tests for gradient angular deviation"""

    def test_zero_step(self):
        """Test that a zero step has zero angle"""
        angle = grad_angle(Quadratic(np.eye(2)), np.array([1.0, 2.0]), np.zeros(2))
        assert angle == pytest.approx(0.0, abs=1e-7)

    def test_right_angle(self):
        """Test an orthogonal gradient pair on a diagonal quadratic"""
        objective = Quadratic(np.diag([2.0, 20.0]))
        angle = grad_angle(objective, np.array([1.0, 0.0]), np.array([-1.0, 1.0]))
        assert angle == pytest.approx(math.pi / 2)

    def test_antipodal(self):
        """Test that opposite points of a centred quadratic give pi"""
        theta = np.array([0.3, -1.2, 2.0])
        assert grad_angle(Quadratic(2.0 * np.eye(3)), theta, -2.0 * theta) == pytest.approx(math.pi)

    def test_vanishing_gradient(self):
        """Test that a zero gradient raises UndefinedAngleError"""
        with pytest.raises(UndefinedAngleError):
            grad_angle(Quadratic(np.eye(2)), np.zeros(2), np.ones(2))

    def test_swap_symmetry(self):
        """Test that swapping the endpoints keeps the angle"""
        objective = Quadratic(random_symmetric(1, 4))
        a, b = np.array([1.0, 0.0, -1.0, 2.0]), np.array([0.5, 1.0, 1.0, -1.0])
        assert grad_angle(objective, a, b - a) == pytest.approx(grad_angle(objective, b, a - b))


class TestInterpolationScan:
    """Tests for the loss along a straight path"""

    def test_two_points_are_endpoints(self):
        """Test that a two-point scan evaluates just the endpoints"""
        objective = Quadratic(np.eye(2))
        a, b = np.array([1.0, 0.0]), np.array([0.0, 3.0])
        scan = loss_interpolation_scan(objective, a, b, 2)
        assert scan.fractions == (0.0, 1.0)
        assert scan.losses == (objective.loss(a), objective.loss(b))

    def test_constant_profile(self):
        """Test that a zero-length path gives a flat profile"""
        objective = Quadratic(np.eye(2))
        theta = np.array([1.0, 2.0])
        assert len(set(loss_interpolation_scan(objective, theta, theta, 5).losses)) == 1

    def test_analytic_parabola(self):
        """Test the scan of a quadratic against its closed form"""
        objective = Quadratic(np.diag([2.0, 4.0]), [1.0, -1.0])
        a, b = np.array([1.0, -1.0]), np.array([-2.0, 0.5])
        scan = loss_interpolation_scan(objective, a, b, 21)
        assert len(scan.fractions) == 21
        assert scan.fractions[1] == pytest.approx(0.05)
        for s, value in zip(scan.fractions, scan.losses):
            point = a + s * (b - a)
            expected = point[0] ** 2 + 2.0 * point[1] ** 2 + point[0] - point[1]
            assert abs(value - expected) <= 1e-9

    def test_with_angles(self):
        """Test that angles start at zero and stay within [0, pi]"""
        scan = loss_interpolation_scan(Quadratic(np.diag([1.0, 5.0])), np.array([1.0, 1.0]),
                                       np.array([-1.0, 2.0]), 4, with_angles=True)
        assert scan.angles[0] == 0.0
        assert all(0.0 <= angle <= math.pi for angle in scan.angles)

    def test_needs_two_points(self):
        """Test that fewer than two points are rejected"""
        with pytest.raises(ContractViolation):
            loss_interpolation_scan(Quadratic(np.eye(1)), [0.0], [1.0], 1)


class TestTaylorCheck:
    """Tests for the first-order decrease check"""

    def test_analytic_quadratic(self):
        """Test predicted and actual decrease on x^2 / 2"""
        check = taylor_check(Quadratic(np.eye(1)), np.array([1.0]), 0.01)
        assert check.predicted_decrease == pytest.approx(0.01)
        assert check.actual_decrease == pytest.approx(0.00995)

    def test_ratio_approaches_one(self):
        """Test that the ratio tends to one as the step shrinks"""
        objective = Quadratic(np.eye(1))
        ratios = [taylor_check(objective, np.array([1.0]), eta).ratio for eta in (1e-2, 1e-3, 1e-4)]
        assert ratios[0] < ratios[1] < ratios[2] < 1.0
        assert abs(ratios[2] - 1.0) < 1e-3

    def test_stationary_point(self):
        """Test that a stationary point predicts no decrease"""
        check = taylor_check(Quadratic(np.eye(2)), np.zeros(2), 0.1)
        assert check.predicted_decrease == 0.0
        assert abs(check.actual_decrease) <= 1e-12

    @pytest.mark.parametrize('seed', range(10))
    def test_converged_models(self, seed):
        """Test the first-order ratio on finetuned networks"""
        task = generate_stream(StreamConfig(num_classes=4, num_tasks=2, seed=seed))[0]
        spec = MlpSpec((2, 8, 4))
        model, _ = finetune(init_params(spec, RngState(seed)), task,
                            TrainConfig(learning_rate=0.01, seed=seed))
        objective = BatchObjective(spec, task.train.features, task.train.labels)
        assert 0.95 <= taylor_check(objective, model.theta, 1e-4).ratio <= 1.05


class TestHvp:
    """Tests for finite-difference Hessian-vector products"""

    def test_diagonal_hessian(self):
        """Test Hessian-vector products against a diagonal Hessian"""
        objective = Quadratic(np.diag([3.0, 1.0]))
        theta = np.array([0.4, -0.7])
        assert np.allclose(hvp(objective, theta, np.array([1.0, 0.0])), [3.0, 0.0], atol=1e-6)
        assert np.allclose(hvp(objective, theta, np.array([0.0, 1.0])), [0.0, 1.0], atol=1e-6)

    def test_linearity(self):
        """Test that hvp is linear in the direction"""
        objective = Quadratic(random_symmetric(3, 5))
        theta = np.ones(5)
        v1, v2 = np.arange(5.0), np.array([1.0, -1.0, 2.0, 0.0, 0.5])
        combined = hvp(objective, theta, v1 + v2)
        separate = hvp(objective, theta, v1) + hvp(objective, theta, v2)
        assert np.allclose(combined, separate, rtol=1e-5, atol=1e-8)

    def test_zero_direction(self):
        """Test that a zero direction is rejected"""
        with pytest.raises(ContractViolation):
            hvp(Quadratic(np.eye(2)), np.zeros(2), np.zeros(2))


class TestHessianLambdaMax:
    """Tests for the power-iteration spectral norm"""

    def test_diagonal(self):
        """Test the dominant eigenvalue of a diagonal Hessian"""
        value = hessian_lambda_max(Quadratic(np.diag([3.0, 1.0])), np.zeros(2), RngState(0))
        assert value == pytest.approx(3.0, rel=0.01)

    def test_identity(self):
        """Test that the identity Hessian gives one"""
        value = hessian_lambda_max(Quadratic(np.eye(6)), np.ones(6), RngState(1))
        assert value == pytest.approx(1.0, rel=0.01)

    @pytest.mark.parametrize('seed', range(5))
    def test_random_quadratic_matches_dense_oracle(self, seed):
        """Test power iteration against eigvalsh on random quadratics"""
        a = random_symmetric(seed, 10)
        value = hessian_lambda_max(Quadratic(a), np.zeros(10), RngState(seed))
        assert value == pytest.approx(np.linalg.eigvalsh(a).max(), rel=0.01)

    def test_seed_invariance(self):
        """Test that the start vector seed does not change the result"""
        objective = Quadratic(np.diag([10.0, 2.0, 1.0]))
        values = [hessian_lambda_max(objective, np.zeros(3), RngState(s)) for s in range(4)]
        assert max(values) == pytest.approx(min(values), rel=0.01)

    def test_mlp_matches_dense_oracle(self, converged):
        """Test power iteration against the dense Hessian of a small network"""
        model, objective = converged
        n = model.spec.param_count
        assert n <= 200
        dense = np.stack([hvp(objective, model.theta, np.eye(n)[i]) for i in range(n)], axis=1)
        eigenvalues = np.linalg.eigvalsh(0.5 * (dense + dense.T))
        dominant = eigenvalues[np.argmax(np.abs(eigenvalues))]
        value = hessian_lambda_max(objective, model.theta, RngState(0), iters=200)
        assert value == pytest.approx(dominant, rel=0.01)

    def test_needs_an_iteration(self):
        """Test that zero iterations are rejected"""
        with pytest.raises(ContractViolation):
            hessian_lambda_max(Quadratic(np.eye(2)), np.zeros(2), RngState(0), iters=0)
