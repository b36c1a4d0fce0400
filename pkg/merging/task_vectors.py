"""
Task-vector algebra: tau = theta - theta_init, and the points of the merge segment.
"""
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import require
from core.tensorcore import as_param_vec, require_same_length


@dataclass(frozen=True)
class TaskVector:
    tau: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, 'tau', as_param_vec(self.tau))

    def __len__(self):
        return len(self.tau)

    def apply_to(self, theta_init):
        """theta_init + tau: the parameters this task vector was taken from."""
        return as_param_vec(theta_init) + self.tau


def tau_of(value):
    return value.tau if isinstance(value, TaskVector) else as_param_vec(value)


def task_vector(theta, theta_init):
    """theta - theta_init as a TaskVector."""
    theta, theta_init = as_param_vec(theta), as_param_vec(theta_init)
    require_same_length(theta, theta_init)
    return TaskVector(theta - theta_init)


def merge_1d(basis, alpha):
    """alpha * tau_t + (1 - alpha) * tau_{t-1}, in task-vector space."""
    return alpha * basis.tau_cur.tau + (1.0 - alpha) * basis.tau_prev.tau


def merge_point(base, basis, coeffs):
    """base + alpha * tau_t + (1 - alpha) * tau_{t-1} + sum_i beta_i * P_i."""
    base = as_param_vec(base)
    require_same_length(base, basis.tau_cur.tau, basis.tau_prev.tau)
    require(
        len(coeffs.betas) == len(basis.perturbations),
        f"{len(coeffs.betas)} betas for {len(basis.perturbations)} perturbations",
    )
    point = base + merge_1d(basis, coeffs.alpha)
    for beta, direction in zip(coeffs.betas, basis.perturbations):
        point = point + beta * direction
    return point


def crossover_mask(n, ratio, rng):
    """
    Per-coordinate crossover draw: (replaced, from_cur). A coordinate is
    replaced with probability ratio; a replaced coordinate comes from the
    current finetuned model or from theta_prev with equal odds.
    """
    require(0.0 <= ratio <= 1.0, f"crossover ratio must lie in [0, 1], got {ratio}")
    replace, rng = rng.uniform(n)
    source, _ = rng.uniform(n)
    # uniforms lie in (0, 1], so ratio 0 replaces nothing and ratio 1 everything
    return replace <= ratio, source > 0.5


def crossover_base(theta_init, theta_prev, theta_cur_ft, ratio, rng):
    """
    Random search base: each coordinate keeps theta_init with probability
    1 - ratio, otherwise takes theta_prev or theta_cur_ft with equal odds.
    """
    theta_init, theta_prev, theta_cur_ft = (
        as_param_vec(v) for v in (theta_init, theta_prev, theta_cur_ft)
    )
    require_same_length(theta_init, theta_prev, theta_cur_ft)
    replaced, from_cur = crossover_mask(len(theta_init), ratio, rng)
    donor = np.where(from_cur, theta_cur_ft, theta_prev)
    return np.where(replaced, donor, theta_init)


def merge_average(theta_prev, theta_cur_ft):
    """Coordinate-wise mean of theta_prev and theta_cur_ft."""
    theta_prev, theta_cur_ft = as_param_vec(theta_prev), as_param_vec(theta_cur_ft)
    require_same_length(theta_prev, theta_cur_ft)
    return 0.5 * (theta_prev + theta_cur_ft)
