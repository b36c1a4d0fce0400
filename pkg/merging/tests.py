import math
from decimal import Decimal

import numpy as np
import pytest

from core.exceptions import ContractViolation, DegenerateDirectionError, InsufficientDimensionError
from core.rng import RngState
from merging.baselines import keep_count, merge_magmax, merge_ties, trim
from merging.search import MergeCoefficients
from merging.subspace import (
    SubspaceBasis,
    build_basis,
    crossover_start,
    gram_schmidt_extend,
    orthogonal_perturbation,
    orthogonalize,
    unit,
)
from merging.task_vectors import (
    TaskVector,
    crossover_base,
    merge_1d,
    merge_average,
    merge_point,
    task_vector,
)


def basis_of(tau_prev, tau_cur):
    return SubspaceBasis.from_task_vectors(TaskVector(tau_prev), TaskVector(tau_cur))


def random_vector(rng, n, scale=1.0):
    values, rng = rng.normal(n)
    return scale * values, rng


class TestTaskVectors:
    """Tests for task-vector algebra and merge points"""

    def test_zero_task_vector(self):
        """Test that a model minus itself is the zero task vector"""
        assert not task_vector([1.0, 2.0], [1.0, 2.0]).tau.any()

    def test_difference(self):
        """Test the coordinate-wise difference"""
        assert task_vector([1.0, 2.0], [0.5, 0.0]).tau.tolist() == [0.5, 2.0]

    def test_add_back(self):
        """Test that applying a task vector restores the model"""
        theta, init = np.array([0.3, -1.7, 2.2]), np.array([0.1, 0.4, -0.9])
        assert np.array_equal(task_vector(theta, init).apply_to(init), init + (theta - init))

    def test_length_mismatch(self):
        """Test that vectors of different lengths are rejected"""
        with pytest.raises(ContractViolation):
            task_vector([1.0, 2.0], [1.0])

    def test_merge_1d(self):
        """Test the 1-D merge at alpha 0, 0.5 and 1"""
        basis = basis_of([0.0, 2.0], [2.0, 0.0])
        assert np.array_equal(merge_1d(basis, 1.0), [2.0, 0.0])
        assert np.array_equal(merge_1d(basis, 0.0), [0.0, 2.0])
        assert np.array_equal(merge_1d(basis, 0.5), [1.0, 1.0])

    def test_merge_point_arithmetic(self):
        """Test that a merge point adds the merged task vector to its base"""
        basis = basis_of([0.0, 2.0], [2.0, 0.0])
        point = merge_point([1.0, 1.0], basis, MergeCoefficients(0.5))
        assert point.tolist() == [2.0, 2.0]

    def test_merge_point_needs_one_beta_per_direction(self):
        """Test that extra betas are rejected"""
        basis = basis_of([0.0, 2.0], [2.0, 0.0])
        with pytest.raises(ContractViolation):
            merge_point([1.0, 1.0], basis, MergeCoefficients(0.5, (0.1,)))

    @pytest.mark.parametrize('seed', range(5))
    def test_endpoints_with_zero_crossover(self, seed):
        """Test that alpha 1 and 0 recover the two endpoints"""
        rng = RngState(seed)
        init, rng = random_vector(rng, 500)
        prev, rng = random_vector(rng, 500)
        cur, rng = random_vector(rng, 500)
        basis = build_basis(task_vector(prev, init), task_vector(cur, init), 1, 'difference', rng)
        base = crossover_base(init, prev, cur, 0.0, rng.spawn('crossover'))
        assert np.array_equal(base, init)
        at_cur = merge_point(base, basis, MergeCoefficients(1.0, (0.0,)))
        at_prev = merge_point(base, basis, MergeCoefficients(0.0, (0.0,)))
        assert np.max(np.abs(at_cur - cur)) <= 1e-12
        assert np.max(np.abs(at_prev - prev)) <= 1e-12

    def test_merge_average(self):
        """Test plain averaging of two models"""
        assert merge_average([0.0, 2.0], [2.0, 0.0]).tolist() == [1.0, 1.0]
        assert merge_average([3.0, -1.0], [3.0, -1.0]).tolist() == [3.0, -1.0]

    def test_average_is_midpoint_from_init(self):
        """Test that averaging equals the alpha 0.5 merge from init"""
        init, prev, cur = np.array([1.0, 1.0]), np.array([1.0, 3.0]), np.array([3.0, 1.0])
        basis = basis_of(prev - init, cur - init)
        assert np.allclose(merge_average(prev, cur), init + merge_1d(basis, 0.5))


class TestCrossoverBase:
    """Tests for the random search base"""

    @pytest.fixture
    def vectors(self):
        rng = RngState(21)
        init, rng = random_vector(rng, 10_000)
        prev, rng = random_vector(rng, 10_000)
        cur, _ = random_vector(rng, 10_000)
        return init, prev, cur

    def test_ratio_zero_keeps_init(self, vectors):
        """Test that ratio 0 returns theta_init"""
        init, prev, cur = vectors
        assert np.array_equal(crossover_base(init, prev, cur, 0.0, RngState(1)), init)

    def test_ratio_one_replaces_everything(self, vectors):
        """Test that ratio 1 takes every coordinate from a donor"""
        init, prev, cur = vectors
        base = crossover_base(init, prev, cur, 1.0, RngState(1))
        assert np.all((base == prev) | (base == cur))

    def test_replaced_fraction(self, vectors):
        """Test that ratio 0.6 replaces about 60% of coordinates"""
        init, prev, cur = vectors
        base = crossover_base(init, prev, cur, 0.6, RngState(1))
        assert 0.57 <= np.mean(base != init) <= 0.63

    def test_deterministic(self, vectors):
        """Test that one seed gives one crossover point"""
        init, prev, cur = vectors
        a = crossover_base(init, prev, cur, 0.6, RngState(8))
        assert np.array_equal(a, crossover_base(init, prev, cur, 0.6, RngState(8)))

    def test_ratio_out_of_range(self, vectors):
        """Test that a ratio above one is rejected"""
        init, prev, cur = vectors
        with pytest.raises(ContractViolation):
            crossover_base(init, prev, cur, 1.5, RngState(1))


class TestCrossoverStart:
    """Tests for the crossover-drawn search start"""

    @pytest.fixture
    def basis(self):
        rng = RngState(33)
        prev, rng = random_vector(rng, 5_000)
        cur, rng = random_vector(rng, 5_000)
        return build_basis(TaskVector(prev), TaskVector(cur), 1, 'difference', rng)

    def test_ratio_zero_starts_at_midpoint(self, basis):
        """Test that without replacement the search starts at (0.5, 0)"""
        alpha, betas = crossover_start(basis, 0.0, RngState(1))
        assert alpha == pytest.approx(0.5, abs=1e-12)
        assert betas == pytest.approx((0.0,), abs=1e-9 * basis.trajectory_norm)

    @pytest.mark.parametrize('ratio', [0.2, 0.6, 1.0])
    def test_start_lies_on_segment(self, basis, ratio):
        """Test that the start alpha stays within [0, 1] for any ratio"""
        alpha, betas = crossover_start(basis, ratio, RngState(int(ratio * 10)))
        assert 0.0 <= alpha <= 1.0
        assert len(betas) == 1

    def test_shares_draw_with_crossover_base(self, basis):
        """Test that the start is the projection of the crossover point shifted to theta_prev"""
        init = np.zeros(basis.dim)
        prev, cur = basis.tau_prev.tau, basis.tau_cur.tau
        point = crossover_base(init, prev, cur, 1.0, RngState(5))
        alpha, _ = crossover_start(basis, 1.0, RngState(5))
        expected = np.dot(point - prev, basis.d) / np.dot(basis.d, basis.d)
        assert alpha == pytest.approx(expected, rel=1e-9)

    def test_ratio_out_of_range(self, basis):
        """Test that a negative ratio is rejected"""
        with pytest.raises(ContractViolation):
            crossover_start(basis, -0.1, RngState(1))


class TestSubspace:
    """Tests for perturbation directions"""

    def test_hand_projection(self):
        """Test one Gram-Schmidt projection by hand"""
        residual = orthogonalize([1.0, 1.0], [unit(np.array([0.0, 2.0]))])
        assert np.allclose(unit(residual), [1.0, 0.0], atol=1e-15)

    @pytest.mark.parametrize('dim', [10, 1_000, 100_000])
    def test_orthogonal_perturbation_contract(self, dim):
        """Test that perturbations are unit length and orthogonal to d"""
        rng = RngState(dim)
        for _ in range(50):
            prev, rng = random_vector(rng, dim)
            cur, rng = random_vector(rng, dim)
            d = cur - prev
            p = orthogonal_perturbation(d, rng.spawn('p'))
            assert abs(np.linalg.norm(p) - 1.0) <= 1e-12
            assert abs(np.dot(p, d)) <= 1e-10 * np.linalg.norm(d)

    @pytest.mark.parametrize('dim', [10, 1_000, 100_000])
    def test_gram_schmidt_contract(self, dim):
        """Test that extended directions are orthonormal and orthogonal to both task vectors"""
        rng = RngState(dim + 1)
        for _ in range(50):
            prev, rng = random_vector(rng, dim)
            cur, rng = random_vector(rng, dim)
            basis = gram_schmidt_extend(basis_of(prev, cur), 3, rng.spawn('gs'))
            ps = basis.perturbations
            assert len(ps) == 3
            for i, p in enumerate(ps):
                assert abs(np.linalg.norm(p) - 1.0) <= 1e-12
                assert abs(np.dot(p, cur)) <= 1e-10 * np.linalg.norm(cur)
                assert abs(np.dot(p, prev)) <= 1e-10 * np.linalg.norm(prev)
                for q in ps[i + 1:]:
                    assert abs(np.dot(p, q)) <= 1e-10

    def test_deterministic(self):
        """Test that one seed gives one perturbation"""
        d = np.array([1.0, -2.0, 0.5, 3.0])
        assert np.array_equal(orthogonal_perturbation(d, RngState(3)),
                              orthogonal_perturbation(d, RngState(3)))

    def test_zero_difference(self):
        """Test that a zero trajectory raises DegenerateDirectionError"""
        with pytest.raises(DegenerateDirectionError):
            orthogonal_perturbation(np.zeros(5), RngState(0))

    def test_unique_complement(self):
        """Test the only direction left in three dimensions"""
        basis = gram_schmidt_extend(basis_of([0.0, 1.0, 0.0], [1.0, 0.0, 0.0]), 1, RngState(4))
        assert np.allclose(np.abs(basis.perturbations[0]), [0.0, 0.0, 1.0], atol=1e-12)

    def test_insufficient_dimension(self):
        """Test that asking for too many directions raises InsufficientDimensionError"""
        with pytest.raises(InsufficientDimensionError):
            gram_schmidt_extend(basis_of([0.0, 1.0, 0.0], [1.0, 0.0, 0.0]), 2, RngState(4))

    def test_difference_mode_extra_directions(self):
        """Test that difference mode yields orthonormal directions orthogonal to d"""
        rng = RngState(12)
        prev, rng = random_vector(rng, 50)
        cur, rng = random_vector(rng, 50)
        basis = build_basis(TaskVector(prev), TaskVector(cur), 3, 'difference', rng)
        stacked = np.stack(basis.perturbations)
        assert np.allclose(stacked @ stacked.T, np.eye(3), atol=1e-10)
        assert np.all(np.abs(stacked @ basis.d) <= 1e-10 * np.linalg.norm(basis.d))

    def test_no_perturbations(self):
        """Test that zero perturbations give an empty tuple"""
        basis = build_basis(TaskVector([1.0, 0.0]), TaskVector([1.0, 0.0]), 0, 'difference',
                            RngState(0))
        assert basis.perturbations == ()


def brute_ties(taus, keep_fraction):
    n = len(taus[0])
    keep = math.ceil(Decimal(repr(keep_fraction)) * n)
    trimmed = []
    for tau in taus:
        order = sorted(range(n), key=lambda i: (-abs(tau[i]), i))[:keep]
        trimmed.append([tau[i] if i in order else 0.0 for i in range(n)])
    merged = []
    for i in range(n):
        total = 0.0
        for row in trimmed:
            total += row[i]
        sign = (total > 0) - (total < 0)
        acc, count = 0.0, 0
        for row in trimmed:
            if row[i] != 0.0 and ((row[i] > 0) - (row[i] < 0)) == sign:
                acc += row[i]
                count += 1
        merged.append(acc / count if count else 0.0)
    return merged


def brute_magmax(taus):
    merged = []
    for i in range(len(taus[0])):
        best = taus[0][i]
        for tau in taus[1:]:
            if abs(tau[i]) >= abs(best):
                best = tau[i]
        merged.append(best)
    return merged


def random_task_vectors(rng):
    """Two or three quantised vectors, so zeros and magnitude ties occur."""
    bits, rng = rng.raw(2)
    n = int(bits[0] % np.uint64(64)) + 1
    count = int(bits[1] % np.uint64(2)) + 2
    taus = []
    for _ in range(count):
        values, rng = rng.normal(n)
        taus.append(np.round(values * 2.0) / 2.0)
    return taus, rng


class TestBaselines:
    """Tests for TIES and MagMax merging"""

    def test_ties_hand_example(self):
        """Test TIES on a hand-worked pair"""
        merged = merge_ties([[1.0, -0.2, 3.0, 0.1], [-2.0, 0.5, 1.0, -0.3]], 0.5)
        assert merged.tau.tolist() == [-2.0, 0.0, 2.0, 0.0]

    def test_ties_single_vector(self):
        """Test that TIES of one untrimmed vector is that vector"""
        assert merge_ties([[0.3, -1.0, 2.0]], 1.0).tau.tolist() == [0.3, -1.0, 2.0]

    def test_ties_opposites_cancel(self):
        """Test that opposite vectors cancel under TIES"""
        tau = np.array([0.5, -1.5, 2.0])
        assert not merge_ties([tau, -tau], 1.0).tau.any()

    @pytest.mark.parametrize('keep_fraction, expected',
                             [(0.07, 7), (0.14, 14), (0.29, 29), (0.2, 20), (0.005, 1)])
    def test_trim_keeps_decimal_count(self, keep_fraction, expected):
        """Test that 0.07 of 100 entries keeps 7, not 8"""
        tau = np.arange(1.0, 101.0)
        assert keep_count(keep_fraction, 100) == expected
        kept = trim(tau, keep_fraction)
        assert np.count_nonzero(kept) == expected
        assert kept[-expected:].tolist() == tau[-expected:].tolist()

    def test_ties_empty(self):
        """Test that TIES needs at least one vector"""
        with pytest.raises(ContractViolation):
            merge_ties([], 0.5)

    def test_magmax_hand_example(self):
        """Test MagMax on a hand-worked pair"""
        merged = merge_magmax([[0.5, -2.0, 1.0], [-1.0, 1.5, -0.5]])
        assert merged.tau.tolist() == [-1.0, -2.0, 1.0]

    def test_magmax_against_zero(self):
        """Test that a zero vector never wins MagMax"""
        assert merge_magmax([[0.5, -2.0], [0.0, 0.0]]).tau.tolist() == [0.5, -2.0]

    def test_magmax_order_only_matters_at_ties(self):
        """Test that input order only decides equal magnitudes"""
        a, b = np.array([1.0, -3.0, 2.0]), np.array([-2.0, 1.0, -2.0])
        forward, backward = merge_magmax([a, b]).tau, merge_magmax([b, a]).tau
        assert forward[:2].tolist() == backward[:2].tolist()
        assert forward[2] == -2.0 and backward[2] == 2.0

    def test_magmax_empty(self):
        """Test that MagMax needs at least one vector"""
        with pytest.raises(ContractViolation):
            merge_magmax([])

    def test_match_brute_force(self):
        """Test TIES and MagMax against brute-force versions"""
        rng = RngState(2024)
        for _ in range(500):
            taus, rng = random_task_vectors(rng)
            fraction, rng = rng.uniform(1)
            keep = float(fraction[0])
            assert merge_ties(taus, keep).tau.tolist() == brute_ties([t.tolist() for t in taus], keep)
            assert merge_magmax(taus).tau.tolist() == brute_magmax([t.tolist() for t in taus])
