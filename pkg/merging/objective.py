"""
The trajectory-regularisation objective:

    L_total = w_align * L_align + lambda1 * L_pre + lambda2 * L_res

L_align is the cross-entropy of the merged model on the current task batch,
L_pre the layer-weighted squared distance of the merged hidden states to the
centroid of the finetuned and previous models' hidden states, and L_res the
negative squared gradient norm at the merged point.
"""
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from core.exceptions import NumericFailure, require
from core.tensorcore import sq_norm
from networks.mlp import BatchObjective, forward_with_trace, loss, loss_and_grad, require_same_spec


def default_pivot(num_layers):
    """Layers up to the pivot share the smallest weight; the top five grow."""
    return max(1, num_layers - 5)


def layer_weights(num_layers, pivot):
    """omega_l proportional to exp(max(1, l - pivot)), normalised to sum to 1."""
    require(num_layers >= 1, f"need at least one layer, got {num_layers}")
    require(1 <= pivot <= num_layers, f"pivot must lie in [1, {num_layers}], got {pivot}")
    exponents = [max(1, l - pivot) for l in range(1, num_layers + 1)]
    top = max(exponents)
    raw = [math.exp(e - top) for e in exponents]
    total = math.fsum(raw)
    return [w / total for w in raw]


class ObjectiveTerms(NamedTuple):
    align: float
    pre: float
    res: float

    def total(self, cfg):
        return cfg.align_weight * self.align + cfg.lambda1 * self.pre + cfg.lambda2 * self.res


def consistency(trace, centroid, weights):
    """sum_l omega_l * mean_i |h^l_i - c^l_i|^2."""
    value = 0.0
    for omega, hidden, center in zip(weights, trace, centroid):
        diff = hidden - center
        value += omega * float(np.mean(np.sum(diff * diff, axis=1)))
    return value


def centroid_trace(model_a, model_b, x):
    """Per-layer mean of the two models' hidden outputs."""
    return [
        0.5 * (ha + hb)
        for ha, hb in zip(forward_with_trace(model_a, x), forward_with_trace(model_b, x))
    ]


def responsiveness(grad):
    return -sq_norm(grad)


def loss_align(model, batch):
    return loss(model, batch.features, batch.labels)


def loss_pre(model_mrg, model_cur_ft, model_prev, batch, weights):
    """Layer-weighted distance of the merged model's outputs from the centroid of the two endpoints."""
    require_same_spec(model_mrg, model_cur_ft, model_prev)
    require(len(weights) == model_mrg.spec.num_layers, 'one weight per affine layer')
    trace = forward_with_trace(model_mrg, batch.features)
    return consistency(trace, centroid_trace(model_cur_ft, model_prev, batch.features), weights)


def loss_res(model, batch):
    """Negative squared gradient norm of the current-task loss."""
    _, grad = loss_and_grad(model, batch.features, batch.labels)
    return responsiveness(grad)


@dataclass
class MergeContext:
    """Everything loss_total needs besides the merged theta, fixed for one merge."""
    objective: BatchObjective
    weights: list
    centroid: list = field(repr=False)
    evaluations: int = 0

    @classmethod
    def build(cls, model_prev, model_cur_ft, batch, pivot=None):
        require_same_spec(model_prev, model_cur_ft)
        spec = model_cur_ft.spec
        pivot = default_pivot(spec.num_layers) if pivot is None else pivot
        return cls(
            objective=BatchObjective(spec, batch.features, batch.labels),
            weights=layer_weights(spec.num_layers, pivot),
            centroid=centroid_trace(model_cur_ft, model_prev, batch.features),
        )


def loss_total(theta, context, cfg):
    """(L_total, ObjectiveTerms) from one forward/backward pass at theta."""
    align, grad, trace = context.objective.forward_backward(theta)
    context.evaluations += 1
    terms = ObjectiveTerms(align, consistency(trace, context.centroid, context.weights),
                           responsiveness(grad))
    for name, value in zip(('L_align', 'L_pre', 'L_res'), terms):
        if not math.isfinite(value):
            raise NumericFailure(name)
    return terms.total(cfg), terms
