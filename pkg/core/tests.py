import math

import numpy as np
import pytest

from core.exceptions import ContractViolation
from core.rng import RngState, gaussian_vector, mix_seed, splitmix64
from core.storage import format_real, write_csv_atomic, write_json_atomic
from core.tensorcore import cross_entropy, matmul, softmax_rows


class TestMatmul:
    """Tests for the deterministic matrix product"""

    def test_identity(self):
        """Test that multiplying by the identity returns the operand"""
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(matmul(np.eye(2), a), a)

    def test_hand_arithmetic(self):
        """Test that a 1x2 by 2x1 product matches hand arithmetic"""
        assert matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]])).tolist() == [[11.0]]

    def test_zero_annihilates(self):
        """Test that a zero left operand gives a zero product"""
        b = np.arange(6.0).reshape(2, 3)
        assert not matmul(np.zeros((2, 2)), b).any()

    def test_dimension_mismatch(self):
        """Test that incompatible shapes raise ContractViolation"""
        with pytest.raises(ContractViolation):
            matmul(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_associativity(self):
        """Test that (AB)C and A(BC) agree to rounding"""
        rng = RngState(7)
        for _ in range(5):
            a, rng = rng.normal(12)
            b, rng = rng.normal(20)
            c, rng = rng.normal(15)
            a, b, c = a.reshape(3, 4), b.reshape(4, 5), c.reshape(5, 3)
            left = matmul(matmul(a, b), c)
            right = matmul(a, matmul(b, c))
            assert np.allclose(left, right, rtol=1e-9, atol=1e-12)


class TestSoftmaxAndCrossEntropy:
    """Tests for the row-wise softmax and mean cross-entropy"""

    def test_symmetric_row(self):
        """Test that equal logits give equal probabilities"""
        assert np.allclose(softmax_rows(np.array([[0.0, 0.0]])), [[0.5, 0.5]])

    def test_analytic_row(self):
        """Test that logits (log 3, 0) give (0.75, 0.25)"""
        assert np.allclose(softmax_rows(np.array([[math.log(3.0), 0.0]])), [[0.75, 0.25]])

    def test_large_logits_do_not_overflow(self):
        """Test that huge logits stay finite"""
        out = softmax_rows(np.array([[1000.0, 0.0]]))
        assert np.all(np.isfinite(out))
        assert out[0, 0] == pytest.approx(1.0)

    def test_rows_sum_to_one(self):
        """Test that every softmax row sums to one"""
        z, _ = RngState(3).normal(40)
        assert np.allclose(softmax_rows(z.reshape(8, 5)).sum(axis=1), 1.0, atol=1e-12)

    def test_uniform_logits(self):
        """Test that zero logits give log(num_classes)"""
        assert cross_entropy(np.zeros((3, 4)), [0, 1, 2]) == pytest.approx(math.log(4.0), abs=1e-6)

    def test_analytic_value(self):
        """Test cross-entropy against a hand-computed value"""
        value = cross_entropy(np.array([[math.log(3.0), 0.0]]), [0])
        assert value == pytest.approx(-math.log(0.75), abs=1e-6)

    def test_saturated(self):
        """Test that a confident correct prediction costs almost nothing"""
        assert cross_entropy(np.array([[50.0, 0.0]]), [0]) < 1e-20

    def test_empty_batch(self):
        """Test that an empty batch is rejected"""
        with pytest.raises(ContractViolation):
            cross_entropy(np.zeros((0, 3)), [])

    def test_label_out_of_range(self):
        """Test that a label beyond the logit width is rejected"""
        with pytest.raises(ContractViolation):
            cross_entropy(np.zeros((1, 3)), [3])


class TestRng:
    """Tests for the counter-based generator"""

    def test_splitmix_reference_value(self):
        """Test the first splitmix64 output against the reference"""
        # first output of the reference splitmix64 seeded with 0
        assert int(splitmix64(0, [0])[0]) == 0xE220A8397B1DCDAF

    def test_same_state_same_draws(self):
        """Test that equal states draw equal vectors"""
        assert np.array_equal(gaussian_vector(RngState(5, 3), 8), gaussian_vector(RngState(5, 3), 8))

    def test_draw_advances_state(self):
        """Test that drawing returns an advanced state"""
        first, state = RngState(1).uniform(4)
        second, _ = state.uniform(4)
        assert state.counter == 4
        assert not np.array_equal(first, second)

    def test_uniforms_in_half_open_interval(self):
        """Test that uniforms lie in (0, 1]"""
        u, _ = RngState(11).uniform(10_000)
        assert u.min() > 0.0 and u.max() <= 1.0

    def test_gaussian_moments(self):
        """Test gaussian sample mean and variance"""
        samples = gaussian_vector(RngState(0), 100_000)
        assert abs(samples.mean()) <= 3.0 / math.sqrt(100_000)
        assert 0.97 <= samples.var() <= 1.03

    def test_gaussian_needs_positive_n(self):
        """Test that a zero-length gaussian draw is rejected"""
        with pytest.raises(ContractViolation):
            gaussian_vector(RngState(0), 0)

    def test_spawn_is_keyed(self):
        """Test that spawned streams depend on their key"""
        rng = RngState(9)
        assert rng.spawn('a') == rng.spawn('a')
        assert rng.spawn('a') != rng.spawn('b')
        assert mix_seed(9, 1, 2) != mix_seed(9, 2, 1)

    def test_permutation(self):
        """Test that permutation covers every index once"""
        perm, _ = RngState(4).permutation(50)
        assert sorted(perm.tolist()) == list(range(50))


class TestStorage:
    """Tests for atomic output files"""

    def test_csv_written_whole(self, tmp_path):
        """Test that csv output leaves no temporary file behind"""
        path = write_csv_atomic(tmp_path / 'sub' / 'out.csv', ['a', 'b'], [[1, 2], [3, 4]])
        assert path.read_text() == 'a,b\n1,2\n3,4\n'
        assert [p.name for p in path.parent.iterdir()] == ['out.csv']

    def test_json_is_sorted(self, tmp_path):
        """Test that json keys are written sorted"""
        path = write_json_atomic(tmp_path / 'x.json', {'b': 1, 'a': 2})
        assert path.read_text().index('"a"') < path.read_text().index('"b"')

    def test_format_real_round_trips(self):
        """Test that formatted reals parse back exactly"""
        assert float(format_real(0.1 + 0.2)) == 0.1 + 0.2
