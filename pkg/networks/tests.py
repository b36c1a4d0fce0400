import numpy as np
import pytest

from core.exceptions import CheckpointError, ContractViolation
from core.rng import RngState
from core.tensorcore import cross_entropy
from networks.checkpoint import decode, encode, load_checkpoint, save_checkpoint
from networks.mlp import (
    BatchObjective,
    MlpSpec,
    ModelParams,
    flatten,
    forward_with_trace,
    init_params,
    logits,
    loss,
    loss_and_grad,
    predict,
)


def random_batch(spec, seed, rows=16):
    rng = RngState(seed).spawn('batch')
    x, rng = rng.normal(rows * spec.input_size)
    bits, _ = rng.raw(rows)
    labels = (bits % np.uint64(spec.num_classes)).astype(np.int64)
    return x.reshape(rows, spec.input_size), labels


def relative_error(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-4)


class TestInitParams:
    """Tests for the parameter layout and initialisation"""

    def test_layout_length(self):
        """Test the flat parameter count of a small network"""
        model = init_params(MlpSpec((2, 3, 2)), RngState(0))
        assert model.theta.size == 17

    def test_deterministic(self):
        """Test that one seed gives one initialisation"""
        spec = MlpSpec((2, 8, 4))
        assert np.array_equal(init_params(spec, RngState(3)).theta,
                              init_params(spec, RngState(3)).theta)

    def test_biases_zero(self):
        """Test that biases start at zero"""
        model = init_params(MlpSpec((4, 16, 16, 5)), RngState(1))
        assert all(not bias.any() for _, bias in model.layers())

    def test_theta_is_read_only(self):
        """Test that theta cannot be written in place"""
        model = init_params(MlpSpec((2, 3, 2)), RngState(0))
        with pytest.raises(ValueError):
            model.theta[0] = 1.0

    def test_wrong_length(self):
        """Test that a theta of the wrong length is rejected"""
        with pytest.raises(ContractViolation):
            ModelParams(MlpSpec((2, 3, 2)), np.zeros(5))


class TestForward:
    """Tests for forward_with_trace, logits and predict"""

    def test_zero_model_gives_zero_trace(self):
        """Test that an all-zero model outputs zeros at every layer"""
        spec = MlpSpec((3, 4, 2))
        trace = forward_with_trace(ModelParams(spec, np.zeros(spec.param_count)), np.ones((5, 3)))
        assert all(not h.any() for h in trace)

    def test_identity_layer(self):
        """Test that an identity layer passes inputs through"""
        spec = MlpSpec((2, 2))
        model = ModelParams(spec, flatten([(np.eye(2), np.zeros(2))]))
        x = np.array([[1.5, -2.0], [0.25, 3.0]])
        assert np.array_equal(logits(model, x), x)

    def test_trace_shapes(self):
        """Test the per-layer shapes of the forward trace"""
        spec = MlpSpec((2, 4, 3))
        trace = forward_with_trace(init_params(spec, RngState(0)), np.zeros((5, 2)))
        assert [h.shape for h in trace] == [(5, 4), (5, 3)]

    def test_wrong_input_width(self):
        """Test that inputs of the wrong width are rejected"""
        with pytest.raises(ContractViolation):
            forward_with_trace(init_params(MlpSpec((2, 4, 3)), RngState(0)), np.zeros((5, 3)))

    def test_predict(self):
        """Test argmax prediction with ties going to the lower class"""
        spec = MlpSpec((2, 2))
        model = ModelParams(spec, flatten([(np.eye(2), np.zeros(2))]))
        assert predict(model, np.array([[0.1, 0.9]])).tolist() == [1]
        assert predict(model, np.array([[0.5, 0.5]])).tolist() == [0]
        assert predict(model, np.zeros((3, 2))).shape == (3,)


class TestGradient:
    """Backprop against central finite differences"""

    @pytest.mark.parametrize('sizes, activation', [
        ((2, 8, 4), 'relu'),
        ((4, 16, 16, 5), 'relu'),
        ((4, 16, 16, 5), 'tanh'),
    ])
    @pytest.mark.parametrize('seed', range(10))
    def test_matches_finite_differences(self, sizes, activation, seed):
        """Test backprop against central differences on random coordinates"""
        spec = MlpSpec(sizes, activation)
        model = init_params(spec, RngState(seed))
        x, labels = random_batch(spec, seed)
        objective = BatchObjective(spec, x, labels)
        _, grad = objective.loss_and_grad(model.theta)
        picks, _ = RngState(seed).spawn('coordinates').raw(100)
        eps = 1e-5
        for index in (picks % np.uint64(spec.param_count)).astype(np.int64):
            step = np.zeros(spec.param_count)
            step[index] = eps
            fd = (objective.loss(model.theta + step) - objective.loss(model.theta - step)) / (2 * eps)
            assert relative_error(fd, grad[index]) < 1e-5

    def test_duplicated_rows_keep_gradient(self):
        """Test that duplicating every row leaves the mean gradient unchanged"""
        spec = MlpSpec((2, 8, 4))
        model = init_params(spec, RngState(2))
        x, labels = random_batch(spec, 2, rows=1)
        _, single = loss_and_grad(model, x, labels)
        _, doubled = loss_and_grad(model, np.vstack([x, x]), np.concatenate([labels, labels]))
        assert np.allclose(single, doubled, atol=1e-14)

    def test_loss_matches_cross_entropy(self):
        """Test that loss_and_grad reports the cross-entropy of the logits"""
        spec = MlpSpec((2, 8, 4))
        model = init_params(spec, RngState(5))
        x, labels = random_batch(spec, 5)
        value, _ = loss_and_grad(model, x, labels)
        assert value == cross_entropy(logits(model, x), labels)
        assert value == loss(model, x, labels)


class TestCheckpoint:
    """Tests for the binary checkpoint format"""

    def test_save_and_load(self, tmp_path):
        """Test that a saved checkpoint loads back identically"""
        model = init_params(MlpSpec((2, 5, 3), 'tanh'), RngState(8))
        path = save_checkpoint(tmp_path / 'm.trm', model)
        loaded = load_checkpoint(path)
        assert loaded.spec == model.spec
        assert np.array_equal(loaded.theta, model.theta)

    def test_header_layout(self):
        """Test the magic and byte length of an encoded checkpoint"""
        payload = encode(init_params(MlpSpec((2, 3)), RngState(0)))
        assert payload[:4] == b'TRM1'
        assert len(payload) == 4 + 4 + 4 + 2 * 4 + 4 + 8 * 9

    def test_bad_magic(self):
        """Test that foreign bytes raise CheckpointError"""
        with pytest.raises(CheckpointError):
            decode(b'NOPE' + bytes(32))

    def test_truncated_body(self):
        """Test that a truncated body raises CheckpointError"""
        payload = encode(init_params(MlpSpec((2, 3)), RngState(0)))
        with pytest.raises(CheckpointError):
            decode(payload[:-8])

    def test_missing_file(self, tmp_path):
        """Test that a missing file raises CheckpointError"""
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / 'absent.trm')
