"""
Baseline merge rules on task vectors: TIES (trim, elect sign, disjoint mean)
and MagMax (per-coordinate maximum magnitude). Plain averaging lives in
task_vectors.merge_average.
"""
import math
from fractions import Fraction

import numpy as np

from core.exceptions import ContractViolation, require
from core.tensorcore import require_same_length

from .task_vectors import TaskVector, tau_of


def _stack(taus):
    if not taus:
        raise ContractViolation('merging needs at least one task vector')
    vectors = [tau_of(t) for t in taus]
    require_same_length(*vectors, what='task vectors')
    return np.stack(vectors)


def keep_count(keep_fraction, n):
    """ceil(keep_fraction * n), taking keep_fraction at its decimal value (0.07 * 100 keeps 7)."""
    return math.ceil(Fraction(str(float(keep_fraction))) * n)


def trim(tau, keep_fraction):
    """Zero all but the keep_count largest magnitudes (lower index wins ties)."""
    keep = keep_count(keep_fraction, len(tau))
    order = np.argsort(-np.abs(tau), kind='stable')
    trimmed = np.zeros_like(tau)
    trimmed[order[:keep]] = tau[order[:keep]]
    return trimmed


def merge_ties(taus, keep_fraction):
    """TIES: trim each task vector, elect a sign per coordinate, average the agreeing entries."""
    require(0.0 < keep_fraction <= 1.0, f"keep_fraction must lie in (0, 1], got {keep_fraction}")
    stacked = _stack(taus)
    trimmed = np.stack([trim(row, keep_fraction) for row in stacked])
    elected = np.sign(trimmed.sum(axis=0))
    agrees = (np.sign(trimmed) == elected) & (trimmed != 0.0)
    counts = agrees.sum(axis=0)
    sums = np.where(agrees, trimmed, 0.0).sum(axis=0)
    merged = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    return TaskVector(merged)


def merge_magmax(taus):
    """Per coordinate, the entry of largest magnitude across task vectors."""
    stacked = _stack(taus)
    merged = stacked[0].copy()
    for row in stacked[1:]:
        # >= hands exact magnitude ties to the later task vector
        take = np.abs(row) >= np.abs(merged)
        merged[take] = row[take]
    return TaskVector(merged)
