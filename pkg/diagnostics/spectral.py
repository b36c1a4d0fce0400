"""Hessian access through finite differences of gradients, and its spectral norm."""
import logging

import numpy as np

from core.exceptions import ContractViolation, require
from core.tensorcore import as_param_vec

logger = logging.getLogger(__name__)

HVP_EPS = 1e-4
STALL_TOLERANCE = 1e-6


def hvp(objective, theta, v, eps=HVP_EPS):
    """H v ~ (g(theta + eps v^) - g(theta - eps v^)) / (2 eps) * |v|."""
    theta, v = as_param_vec(theta), as_param_vec(v)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ContractViolation('hvp needs a nonzero direction')
    unit = v / norm
    g_plus = objective.grad(theta + eps * unit)
    g_minus = objective.grad(theta - eps * unit)
    return (g_plus - g_minus) / (2.0 * eps) * norm


def hessian_lambda_max(objective, theta, rng, iters=50, eps=HVP_EPS):
    """
    Dominant Hessian eigenvalue by power iteration on hvp.

    Returns the Rayleigh quotient after iters steps, or earlier once it changes
    by less than 1e-6 relative. The result is the largest-magnitude eigenvalue,
    which equals lambda_max near a minimum.
    """
    require(iters >= 1, f"iters must be >= 1, got {iters}")
    theta = as_param_vec(theta)
    v, _ = rng.normal(len(theta))
    v /= np.linalg.norm(v)
    estimate = None
    for step in range(iters):
        hv = hvp(objective, theta, v, eps)
        rayleigh = float(np.dot(v, hv))
        norm = np.linalg.norm(hv)
        if norm == 0.0:
            logger.warning('Hessian-vector product vanished; spectrum is zero along the iterate')
            return 0.0
        v = hv / norm
        if estimate is not None and abs(rayleigh - estimate) <= STALL_TOLERANCE * abs(estimate):
            logger.debug(f"power iteration stalled after {step + 1} steps")
            return rayleigh
        estimate = rayleigh
    return estimate
