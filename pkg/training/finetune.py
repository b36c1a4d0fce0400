import logging
from dataclasses import dataclass

import numpy as np

from core.exceptions import NumericFailure, require
from core.rng import RngState
from networks.mlp import loss_and_grad, predict

from .optim import AdamState, adamw_step, cosine_lr

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainReport:
    epoch_losses: tuple
    train_accuracy: float
    steps: int


def finetune(start, data, cfg):
    """
    Train a copy of start on data.train and return (finetuned model, report).

    Minibatch order comes from RngState(cfg.seed); start is never modified.
    """
    features, labels = data.train.features, data.train.labels
    require(len(labels) > 0, 'finetune needs a nonempty training split')

    n = len(labels)
    batches_per_epoch = -(-n // cfg.batch_size)
    total_steps = cfg.epochs * batches_per_epoch

    theta = np.array(start.theta, dtype=np.float64)
    state = AdamState.zeros(len(theta))
    rng = RngState(cfg.seed).spawn('shuffle')
    epoch_losses, step = [], 0

    for epoch in range(cfg.epochs):
        order, rng = rng.permutation(n)
        running = 0.0
        for offset in range(0, n, cfg.batch_size):
            idx = order[offset:offset + cfg.batch_size]
            loss, grad = loss_and_grad(start.with_theta(theta), features[idx], labels[idx])
            if not np.isfinite(loss):
                raise NumericFailure('finetune loss', f"Non-finite loss at epoch {epoch + 1}")
            step += 1
            theta = adamw_step(theta, grad, state, cfg, step, lr=cosine_lr(cfg, step, total_steps))
            running += loss * len(idx)
        epoch_losses.append(running / n)
        logger.debug(f"epoch {epoch + 1}/{cfg.epochs} mean loss {epoch_losses[-1]:.6f}")

    model = start.with_theta(theta)
    train_accuracy = float(np.mean(predict(model, features) == labels))
    logger.info(
        f"Finetuned task {data.task_index}: {step} steps, train accuracy {train_accuracy:.3f}"
    )
    return model, TrainReport(tuple(epoch_losses), train_accuracy, step)
