"""AdamW with decoupled weight decay and a cosine learning-rate schedule."""
import math
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import ContractViolation, require


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    weight_decay: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    cosine_anneal: bool = True
    seed: int = 0

    def __post_init__(self):
        require(self.learning_rate > 0, 'learning_rate must be > 0')
        require(0 <= self.beta1 < 1 and 0 <= self.beta2 < 1, 'beta1 and beta2 must lie in [0, 1)')
        require(self.batch_size >= 1, 'batch_size must be >= 1')
        require(self.epochs >= 0, 'epochs must be >= 0')
        require(self.weight_decay >= 0, 'weight_decay must be >= 0')


@dataclass
class AdamState:
    """First and second moment estimates; updated in place by adamw_step."""
    m: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n))


def cosine_lr(cfg, step, total_steps):
    """Anneal from lr down to 0.01 * lr over total_steps; step counts from 1."""
    if not cfg.cosine_anneal or total_steps <= 1:
        return cfg.learning_rate
    floor = 0.01 * cfg.learning_rate
    progress = (step - 1) / (total_steps - 1)
    return floor + 0.5 * (cfg.learning_rate - floor) * (1.0 + math.cos(math.pi * progress))


def adamw_step(theta, grad, state, cfg, step, lr=None):
    """
    One AdamW update.

    The decoupled decay theta <- theta - lr * wd * theta is applied first, then
    the bias-corrected Adam step. Returns the new theta; state is updated.
    """
    if len(theta) != len(grad) or len(state.m) != len(theta):
        raise ContractViolation(
            f"adamw_step length mismatch: theta {len(theta)}, grad {len(grad)}, state {len(state.m)}"
        )
    require(step >= 1, f"step must be >= 1, got {step}")
    lr = cfg.learning_rate if lr is None else lr

    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad
    state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad * grad
    m_hat = state.m / (1.0 - cfg.beta1 ** step)
    v_hat = state.v / (1.0 - cfg.beta2 ** step)

    decayed = theta - lr * cfg.weight_decay * theta
    return decayed - lr * m_hat / (np.sqrt(v_hat) + cfg.eps_adam)
