"""
Trajectory-regularised merging: coefficient search over the augmented subspace.

The search sees exactly three parameter vectors (theta_init, theta_{t-1} and
the current finetuned theta) plus the current task's data.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import DegenerateDirectionError, require
from core.rng import RngState
from networks.mlp import require_same_spec
from streams.generator import Split

from .objective import MergeContext, loss_total
from .subspace import PERTURBATION_MODES, build_basis, crossover_start
from .task_vectors import crossover_base, merge_point, task_vector

logger = logging.getLogger(__name__)

ANCHORS = (0.0, 1.0, 0.5)

# 'start': the crossover draws the search start on the segment from theta_prev
# to theta_cur_ft. 'shift': the crossover point replaces theta_init as the base
# of every merge point.
CROSSOVER_MODES = ('start', 'shift')

# a coefficient step that raises L_total is halved at most this many times
MAX_HALVINGS = 4


@dataclass(frozen=True)
class TrmConfig:
    lambda1: float = 0.1
    lambda2: float = 0.01
    align_weight: float = 1.0
    layer_pivot: int = None
    crossover_ratio: float = 0.6
    crossover_mode: str = 'start'
    merge_epochs: int = 5
    steps_per_epoch: int = 10
    coeff_lr: float = 0.05
    fd_eps: float = 1e-3
    beta_max: float = 0.05
    merge_batch_size: int = 256
    num_perturbations: int = 1
    perturbation_mode: str = 'difference'
    clamp_alpha: bool = True
    anchor_only: bool = False
    seed: int = 0

    def __post_init__(self):
        require(self.lambda1 >= 0 and self.lambda2 >= 0, 'lambda1 and lambda2 must be >= 0')
        require(self.align_weight >= 0, 'align_weight must be >= 0')
        require(self.merge_epochs >= 1, 'merge_epochs must be >= 1')
        require(self.steps_per_epoch >= 1, 'steps_per_epoch must be >= 1')
        require(0.0 <= self.crossover_ratio <= 1.0, 'crossover_ratio must lie in [0, 1]')
        require(self.crossover_mode in CROSSOVER_MODES,
                f"crossover_mode must be one of {CROSSOVER_MODES}")
        require(self.coeff_lr > 0 and self.fd_eps > 0, 'coeff_lr and fd_eps must be > 0')
        require(self.beta_max >= 0, 'beta_max must be >= 0')
        require(self.merge_batch_size >= 1, 'merge_batch_size must be >= 1')
        require(self.num_perturbations >= 0, 'num_perturbations must be >= 0')
        require(self.perturbation_mode in PERTURBATION_MODES,
                f"perturbation_mode must be one of {PERTURBATION_MODES}")
        require(self.layer_pivot is None or self.layer_pivot >= 1, 'layer_pivot must be >= 1')


@dataclass(frozen=True)
class MergeCoefficients:
    alpha: float
    betas: tuple = ()

    def as_array(self):
        return np.array((self.alpha,) + tuple(self.betas))

    @classmethod
    def from_array(cls, values):
        return cls(float(values[0]), tuple(float(b) for b in values[1:]))


@dataclass(frozen=True)
class TracePoint:
    alpha: float
    betas: tuple
    align: float
    pre: float
    res: float
    total: float

    def as_row(self):
        return {'alpha': self.alpha, 'betas': list(self.betas), 'L_align': self.align,
                'L_pre': self.pre, 'L_res': self.res, 'L_total': self.total}


@dataclass(frozen=True)
class MergeOutcome:
    theta_merged: np.ndarray = field(repr=False)
    coefficients: MergeCoefficients
    objective_trace: tuple
    anchor_values: dict
    base_point_seed: int
    objective_evaluations: int
    selected: str
    shifted_anchor_values: dict = field(default_factory=dict)
    start_point: TracePoint = None

    @property
    def total(self):
        return min(self.candidates(), key=lambda item: item[1])[1]

    def candidates(self):
        points = [(f"anchor {alpha}", value) for alpha, value in self.anchor_values.items()]
        points += [(f"shifted anchor {alpha}", value)
                   for alpha, value in self.shifted_anchor_values.items()]
        if self.start_point is not None:
            points.append(('start', self.start_point.total))
        return points + [(f"step {i}", p.total) for i, p in enumerate(self.objective_trace)]

    def to_record(self):
        """Structured text record stored next to the merged checkpoint."""
        return {
            'alpha': self.coefficients.alpha,
            'betas': list(self.coefficients.betas),
            'anchor_values': {str(alpha): value for alpha, value in self.anchor_values.items()},
            'shifted_anchor_values': {
                str(alpha): value for alpha, value in self.shifted_anchor_values.items()
            },
            'start': None if self.start_point is None else self.start_point.as_row(),
            'selected': self.selected,
            'base_point_seed': self.base_point_seed,
            'objective_evaluations': self.objective_evaluations,
            'trace': [point.as_row() for point in self.objective_trace],
        }


def merge_batch(train, size, rng):
    """Fixed subsample of the training split, in original order."""
    n = len(train)
    if size >= n:
        return train
    order, _ = rng.permutation(n)
    idx = np.sort(order[:size])
    return Split(train.features[idx], train.labels[idx])


class CoefficientSearch:
    """
    Projected finite-difference descent on L_total over (alpha, betas).

    A step that raises L_total is halved up to MAX_HALVINGS times; if none of
    the shorter steps helps, the iterate stays where it is for that step.
    """

    def __init__(self, base, basis, context, cfg):
        self.base = base
        self.basis = basis
        self.context = context
        self.cfg = cfg
        self.beta_bound = cfg.beta_max * basis.trajectory_norm

    def evaluate(self, coeffs, base=None):
        theta = merge_point(self.base if base is None else base, self.basis, coeffs)
        return loss_total(theta, self.context, self.cfg)

    def project(self, values):
        values = np.array(values, dtype=np.float64)
        if self.cfg.clamp_alpha:
            values[0] = min(1.0, max(0.0, values[0]))
        values[1:] = np.clip(values[1:], -self.beta_bound, self.beta_bound)
        return values

    def gradient(self, values):
        """Central differences of the scalar objective in each coefficient."""
        eps = self.cfg.fd_eps
        grad = np.zeros_like(values)
        for i in range(len(values)):
            step = np.zeros_like(values)
            step[i] = eps
            up, _ = self.evaluate(MergeCoefficients.from_array(values + step))
            down, _ = self.evaluate(MergeCoefficients.from_array(values - step))
            grad[i] = (up - down) / (2.0 * eps)
        return grad

    def descend(self, values, total):
        """One projected step from values: (values, total, terms), or None if no step length helps."""
        grad = self.gradient(values)
        lr = self.cfg.coeff_lr
        for _ in range(MAX_HALVINGS + 1):
            trial = self.project(values - lr * grad)
            trial_total, terms = self.evaluate(MergeCoefficients.from_array(trial))
            if trial_total <= total:
                return trial, trial_total, terms
            lr *= 0.5
        return None

    def run(self, start):
        """(start point, one TracePoint per step)."""
        values = self.project(start.as_array())
        total, terms = self.evaluate(MergeCoefficients.from_array(values))
        first = TracePoint(float(values[0]), tuple(float(b) for b in values[1:]), *terms, total)
        points = []
        for epoch in range(self.cfg.merge_epochs):
            for _ in range(self.cfg.steps_per_epoch):
                step = self.descend(values, total)
                if step is not None:
                    values, total, terms = step
                coeffs = MergeCoefficients.from_array(values)
                points.append(TracePoint(coeffs.alpha, coeffs.betas, *terms, total))
            logger.debug(f"merge epoch {epoch + 1}: alpha={values[0]:.4f} L_total={total:.6f}")
        return first, points


def trm_search(theta_init, theta_prev, theta_cur_ft, task_data, cfg):
    """
    Search (alpha, betas) minimising L_total for merging theta_prev and theta_cur_ft.

    The three models are ModelParams sharing one spec; task_data is the current
    TaskDataset. Returns the argmin over the anchors (0, 0), (1, 0), (0.5, 0)
    on the segment from theta_prev to theta_cur_ft, the search start and every
    visited iterate, all evaluated on one fixed merge batch. In 'shift' mode the
    anchors of the shifted segment are candidates too.
    """
    require_same_spec(theta_init, theta_prev, theta_cur_ft)
    require(len(task_data.train) > 0, 'trm_search needs current-task training data')
    rng = RngState(cfg.seed)

    tau_prev = task_vector(theta_prev.theta, theta_init.theta)
    tau_cur = task_vector(theta_cur_ft.theta, theta_init.theta)
    try:
        basis = build_basis(tau_prev, tau_cur, cfg.num_perturbations, cfg.perturbation_mode,
                            rng.spawn('perturbation'))
    except DegenerateDirectionError:
        logger.warning('Trajectory difference is zero; falling back to a 1-D search')
        basis = build_basis(tau_prev, tau_cur, 0, cfg.perturbation_mode, rng)
    zero_betas = (0.0,) * len(basis.perturbations)

    crossover_rng = rng.spawn('crossover')
    if cfg.crossover_mode == 'shift':
        base = crossover_base(theta_init.theta, theta_prev.theta, theta_cur_ft.theta,
                              cfg.crossover_ratio, crossover_rng)
        start = MergeCoefficients(0.5, zero_betas)
    else:
        base = theta_init.theta
        start = MergeCoefficients(*crossover_start(basis, cfg.crossover_ratio, crossover_rng))

    batch = merge_batch(task_data.train, cfg.merge_batch_size, rng.spawn('merge-batch'))
    context = MergeContext.build(theta_prev, theta_cur_ft, batch, cfg.layer_pivot)
    search = CoefficientSearch(base, basis, context, cfg)

    candidates = []
    anchor_values = {}
    for alpha in ANCHORS:
        coeffs = MergeCoefficients(alpha, zero_betas)
        total, _ = search.evaluate(coeffs, base=theta_init.theta)
        anchor_values[alpha] = total
        candidates.append((total, f"anchor {alpha}", coeffs, theta_init.theta))

    shifted_anchor_values = {}
    if cfg.crossover_mode == 'shift':
        for alpha in ANCHORS:
            coeffs = MergeCoefficients(alpha, zero_betas)
            total, _ = search.evaluate(coeffs)
            shifted_anchor_values[alpha] = total
            candidates.append((total, f"shifted anchor {alpha}", coeffs, base))

    first, points = None, []
    if not cfg.anchor_only:
        first, points = search.run(start)
        candidates.append((first.total, 'start', MergeCoefficients(first.alpha, first.betas), base))
        candidates += [
            (p.total, f"step {i}", MergeCoefficients(p.alpha, p.betas), base)
            for i, p in enumerate(points)
        ]

    # min keeps the first of equal values, so anchors win ties
    best_total, selected, best, best_base = min(candidates, key=lambda item: item[0])
    logger.info(
        f"Merged task {task_data.task_index}: alpha={best.alpha:.4f} "
        f"betas={[round(b, 6) for b in best.betas]} L_total={best_total:.6f} ({selected})"
    )
    return MergeOutcome(
        theta_merged=merge_point(best_base, basis, best),
        coefficients=best,
        objective_trace=tuple(points),
        anchor_values=anchor_values,
        base_point_seed=crossover_rng.seed,
        objective_evaluations=context.evaluations,
        selected=selected,
        shifted_anchor_values=shifted_anchor_values,
        start_point=first,
    )
