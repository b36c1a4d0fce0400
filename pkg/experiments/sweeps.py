"""
Sensitivity studies built on the TRM protocol: crossover ratio, one-parameter
sweeps (lambda1, lambda2, merge_epochs, num_perturbations) and the sharpness
of the final model as lambda2 grows.
"""
import logging

from core.exceptions import require
from core.rng import RngState
from diagnostics.spectral import hessian_lambda_max
from networks.mlp import BatchObjective
from streams.generator import generate_stream

from .runner import RunJob, execute, run_matrix

logger = logging.getLogger(__name__)

RUNS_PER_RATIO = 10

SWEEPABLE = {
    'lambda1': float,
    'lambda2': float,
    'merge_epochs': int,
    'num_perturbations': int,
}


def summarize(value, accuracies):
    return {
        'value': value,
        'min': min(accuracies),
        'max': max(accuracies),
        'mean': sum(accuracies) / len(accuracies),
    }


def sweep_ratio(cfg, grid, runs=RUNS_PER_RATIO):
    """Per crossover ratio, last accuracy over `runs` seeds counted up from the first config seed."""
    for ratio in grid:
        require(0.0 <= ratio <= 1.0, f"crossover ratio {ratio} outside [0, 1]")
    seeds = [cfg.seeds[0] + i for i in range(runs)]
    jobs = [RunJob(seed, 'trm', cfg.with_trm(crossover_ratio=ratio))
            for ratio in grid for seed in seeds]
    reports = run_matrix(jobs)
    rows = []
    for index, ratio in enumerate(grid):
        chunk = reports[index * runs:(index + 1) * runs]
        rows.append(summarize(ratio, [r.last_accuracy for r in chunk]))
    return rows


def sweep_parameter(cfg, param, values):
    """Per value of one TRM parameter, last accuracy over the config seeds."""
    require(param in SWEEPABLE, f"cannot sweep {param!r}; choose from {sorted(SWEEPABLE)}")
    values = [SWEEPABLE[param](v) for v in values]
    jobs = [RunJob(seed, 'trm', cfg.with_trm(**{param: value}))
            for value in values for seed in cfg.seeds]
    reports = run_matrix(jobs)
    per_value = len(cfg.seeds)
    return [
        summarize(value, [r.last_accuracy for r in reports[i * per_value:(i + 1) * per_value]])
        for i, value in enumerate(values)
    ]


def sharpness_study(cfg, lambda2_grid, seed, iters=50):
    """
    lambda_max of the final merged model for each lambda2, plus the last
    finetuned model ('finetune'), measured on the last task's training split.
    """
    stream = generate_stream(cfg.stream)
    last = stream[-1].train
    objective = BatchObjective(cfg.spec, last.features, last.labels)
    rng = RngState(seed).spawn('power-iteration')
    rows = []
    finetuned = None
    for lambda2 in lambda2_grid:
        report = execute(RunJob(seed, 'trm', cfg.with_trm(lambda2=float(lambda2))), stream)
        if finetuned is None:
            finetuned = report.final_finetuned
        value = hessian_lambda_max(objective, report.final_model.theta, rng, iters)
        logger.info(f"lambda2={lambda2}: lambda_max={value:.4f}")
        rows.append((f"lambda2={lambda2}", value))
    if finetuned is not None:
        rows.insert(0, ('finetune', hessian_lambda_max(objective, finetuned.theta, rng, iters)))
    return rows
