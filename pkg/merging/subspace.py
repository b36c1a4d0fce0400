"""
The augmented trajectory subspace: the two task vectors, their difference d,
and unit perturbation directions orthogonal to d (or to span(tau_t, tau_{t-1})).
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import DegenerateDirectionError, InsufficientDimensionError, require
from core.tensorcore import require_same_length

from .task_vectors import TaskVector, crossover_mask

logger = logging.getLogger(__name__)

# residual norm below which a random draw is considered to lie in the span
RESAMPLE_THRESHOLD = 1e-12
MAX_DRAWS = 16

PERTURBATION_MODES = ('difference', 'span')


@dataclass(frozen=True)
class SubspaceBasis:
    tau_prev: TaskVector
    tau_cur: TaskVector
    d: np.ndarray = field(repr=False)
    perturbations: tuple = ()

    @classmethod
    def from_task_vectors(cls, tau_prev, tau_cur):
        require_same_length(tau_prev.tau, tau_cur.tau, what='task vectors')
        return cls(tau_prev, tau_cur, tau_cur.tau - tau_prev.tau)

    @property
    def dim(self):
        return len(self.d)

    @property
    def trajectory_norm(self):
        return float(np.linalg.norm(self.d))

    def with_perturbations(self, perturbations):
        return SubspaceBasis(self.tau_prev, self.tau_cur, self.d, tuple(perturbations))


def orthogonalize(r, references):
    """r minus its projections on the orthonormal references, applied twice for precision."""
    r = np.array(r, dtype=np.float64)
    for _ in range(2):
        for q in references:
            r -= np.dot(q, r) * q
    return r


def unit(vector):
    return vector / np.linalg.norm(vector)


def _draw_orthonormal(references, k, rng, dim):
    """k unit vectors orthogonal to the references and to each other."""
    references = list(references)
    drawn = []
    for _ in range(k):
        for attempt in range(MAX_DRAWS):
            r, rng = rng.normal(dim)
            residual = orthogonalize(r, references)
            norm = np.linalg.norm(residual)
            if norm >= RESAMPLE_THRESHOLD:
                break
            logger.warning(f"Perturbation draw {attempt + 1} fell into the span; resampling")
        else:
            raise InsufficientDimensionError('no direction outside the span after repeated draws')
        direction = residual / norm
        references.append(direction)
        drawn.append(direction)
    return drawn


def orthogonal_perturbation(d, rng):
    """P = normalize(r - (<r, d> / |d|^2) d) for r ~ N(0, I)."""
    d = np.asarray(d, dtype=np.float64)
    if not np.any(d):
        raise DegenerateDirectionError('trajectory difference d is zero')
    if len(d) < 2:
        raise InsufficientDimensionError('a direction orthogonal to d needs dimension >= 2')
    return _draw_orthonormal([unit(d)], 1, rng, len(d))[0]


def gram_schmidt_extend(basis, k, rng):
    """k unit perturbations orthogonal to tau_t, tau_{t-1} and to one another."""
    require(k >= 1, f"k must be >= 1, got {k}")
    if basis.dim < k + 2:
        raise InsufficientDimensionError(
            f"dimension {basis.dim} cannot hold {k} directions beside two task vectors"
        )
    references = []
    for tau in (basis.tau_cur.tau, basis.tau_prev.tau):
        residual = orthogonalize(tau, references)
        norm = np.linalg.norm(residual)
        if norm > RESAMPLE_THRESHOLD * max(1.0, np.linalg.norm(tau)):
            references.append(residual / norm)
    return basis.with_perturbations(_draw_orthonormal(references, k, rng, basis.dim))


def build_basis(tau_prev, tau_cur, count, mode, rng):
    """
    Basis with count perturbations in the given mode.

    'difference' draws the first direction orthogonal to d and Gram-Schmidts
    further ones against d and earlier directions; 'span' uses
    gram_schmidt_extend. A zero d raises DegenerateDirectionError.
    """
    require(mode in PERTURBATION_MODES, f"unknown perturbation mode {mode!r}")
    basis = SubspaceBasis.from_task_vectors(tau_prev, tau_cur)
    if count == 0:
        return basis
    if not np.any(basis.d):
        raise DegenerateDirectionError('trajectory difference d is zero')
    if mode == 'span':
        return gram_schmidt_extend(basis, count, rng)
    first = orthogonal_perturbation(basis.d, rng)
    rest = []
    if count > 1:
        if basis.dim < count + 1:
            raise InsufficientDimensionError(
                f"dimension {basis.dim} cannot hold {count} directions beside d"
            )
        rest = _draw_orthonormal(
            [unit(basis.d), first], count - 1, rng.spawn('extend'), basis.dim
        )
    return basis.with_perturbations([first] + rest)


def crossover_start(basis, ratio, rng):
    """
    Search start drawn by crossover, as (alpha, betas).

    A replaced coordinate sits at the endpoint it was taken from (alpha 0 for
    theta_prev, 1 for theta_cur_ft); every other coordinate sits at the
    midpoint. The start is that point's projection onto the subspace, so
    ratio 0 gives (0.5, 0, ...).
    """
    replaced, from_cur = crossover_mask(basis.dim, ratio, rng)
    position = np.where(replaced, np.where(from_cur, 1.0, 0.0), 0.5)
    offset = position * basis.d
    d_sq = float(np.dot(basis.d, basis.d))
    alpha = float(np.dot(offset, basis.d)) / d_sq if d_sq > 0.0 else 0.5
    return alpha, tuple(float(np.dot(offset, p)) for p in basis.perturbations)
