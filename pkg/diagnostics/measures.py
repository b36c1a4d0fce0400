"""
Measures of how a merge moves a model: per-layer output drift, gradient angular
deviation, the loss along a straight path, and the first-order Taylor check.

Loss-based measures take an objective: anything with loss(theta) and
grad(theta), normally a networks.mlp.BatchObjective.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from core.exceptions import UndefinedAngleError, require
from core.tensorcore import as_param_vec, sq_norm
from networks.mlp import forward_with_trace, require_same_spec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DriftProfile:
    values: tuple

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class TrajectoryScan:
    fractions: tuple
    losses: tuple
    angles: tuple = None


@dataclass(frozen=True)
class TaylorCheck:
    predicted_decrease: float
    actual_decrease: float

    @property
    def ratio(self):
        if self.predicted_decrease == 0.0:
            return math.nan
        return self.actual_decrease / self.predicted_decrease


def layer_drift(model_a, model_b, features):
    """Per layer, the mean over samples of |h^l(x; a) - h^l(x; b)|_2."""
    require_same_spec(model_a, model_b)
    require(len(features) > 0, 'layer_drift needs a nonempty dataset')
    trace_a = forward_with_trace(model_a, features)
    trace_b = forward_with_trace(model_b, features)
    return DriftProfile(tuple(
        float(np.mean(np.linalg.norm(ha - hb, axis=1))) for ha, hb in zip(trace_a, trace_b)
    ))


def grad_angle(objective, theta, delta):
    """Angle in radians between the gradients at theta and theta + delta."""
    theta = as_param_vec(theta)
    g0 = objective.grad(theta)
    g1 = objective.grad(theta + as_param_vec(delta))
    n0, n1 = np.linalg.norm(g0), np.linalg.norm(g1)
    if n0 == 0.0 or n1 == 0.0:
        raise UndefinedAngleError('gradient vanishes; the angle is undefined')
    cosine = float(np.dot(g0, g1) / (n0 * n1))
    return math.acos(min(1.0, max(-1.0, cosine)))


def interpolation_fractions(n_points):
    require(n_points >= 2, f"a scan needs at least 2 points, got {n_points}")
    return tuple(i / (n_points - 1) for i in range(n_points))


def loss_interpolation_scan(objective, theta_a, theta_b, n_points, with_angles=False):
    """Loss at theta_a + s (theta_b - theta_a) for n evenly spaced s in [0, 1]."""
    theta_a, theta_b = as_param_vec(theta_a), as_param_vec(theta_b)
    direction = theta_b - theta_a
    fractions = interpolation_fractions(n_points)
    losses = tuple(objective.loss(theta_a + s * direction) for s in fractions)
    angles = None
    if with_angles:
        angles = tuple(
            0.0 if s == 0.0 else grad_angle(objective, theta_a, s * direction) for s in fractions
        )
    return TrajectoryScan(fractions, losses, angles)


def taylor_check(objective, theta, eta):
    """Predicted decrease eta |g|^2 against L(theta) - L(theta - eta g)."""
    require(eta > 0, f"eta must be > 0, got {eta}")
    theta = as_param_vec(theta)
    value, grad = objective.loss_and_grad(theta)
    actual = value - objective.loss(theta - eta * grad)
    return TaylorCheck(eta * sq_norm(grad), actual)
