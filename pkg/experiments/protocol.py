"""
The sequential continual-learning protocol.

Stage 1 finetunes from theta_init and keeps the result. Every later stage
finetunes from the previous merged model and merges the two with the chosen
strategy. The loop holds three parameter vectors at any time: theta_init,
the current merged model and the current finetuned model.
"""
import logging
import time
from dataclasses import dataclass, replace

from core.exceptions import require
from core.rng import RngState, mix_seed
from merging.baselines import merge_magmax, merge_ties
from merging.search import trm_search
from merging.task_vectors import merge_average, task_vector
from networks.mlp import MlpSpec, init_params
from streams.generator import joint_testset
from training.finetune import finetune

from .config import STRATEGIES
from .metrics import AccuracyMatrix, accuracy, average_forgetting

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StageSummary:
    stage: int
    train_accuracy: float
    seconds: float
    merge: dict = None


@dataclass(frozen=True)
class CLReport:
    strategy: str
    seed: int
    matrix: AccuracyMatrix
    last_accuracy: float
    average_forgetting: float
    stages: tuple
    final_model: object = None
    final_finetuned: object = None


def default_spec(stream):
    first = stream[0]
    num_classes = max(max(task.class_ids) for task in stream) + 1
    return MlpSpec((first.train.features.shape[1], 64, 64, num_classes))


def merge_stage(strategy, theta_init, theta_prev, theta_ft, task, trm_cfg, keep_fraction):
    """Consolidate theta_prev and theta_ft; returns (merged model, merge record or None)."""
    if strategy == 'seq_finetune':
        return theta_ft, None
    if strategy == 'average':
        return theta_ft.with_theta(merge_average(theta_prev.theta, theta_ft.theta)), None
    if strategy in ('ties', 'magmax'):
        taus = [task_vector(theta_prev.theta, theta_init.theta),
                task_vector(theta_ft.theta, theta_init.theta)]
        merged = merge_ties(taus, keep_fraction) if strategy == 'ties' else merge_magmax(taus)
        return theta_ft.with_theta(merged.apply_to(theta_init.theta)), None
    outcome = trm_search(theta_init, theta_prev, theta_ft, task, trm_cfg)
    return theta_ft.with_theta(outcome.theta_merged), outcome.to_record()


def run_cl_experiment(stream, strategy, train_cfg, trm_cfg, seed, spec=None,
                      keep_fraction=0.2, on_stage=None):
    """
    Run the protocol over the whole stream and return a CLReport.

    on_stage(stage, model, merge_record) is called after each stage, e.g. to
    write checkpoints.
    """
    require(strategy in STRATEGIES, f"unknown strategy {strategy!r}")
    require(len(stream) >= 1, 'the stream holds no tasks')
    spec = spec or default_spec(stream)
    num_tasks = len(stream)

    theta_init = init_params(spec, RngState(seed).spawn('init'))
    theta_prev = theta_init
    theta_ft = None
    matrix = AccuracyMatrix(num_tasks)
    stages = []

    for task in stream:
        t = task.task_index
        started = time.perf_counter()
        stage_train = replace(train_cfg, seed=mix_seed(train_cfg.seed, seed, t))
        theta_ft, report = finetune(theta_prev, task, stage_train)

        record = None
        if t == 1:
            theta_prev = theta_ft
        else:
            stage_trm = replace(trm_cfg, seed=mix_seed(trm_cfg.seed, seed, t))
            theta_prev, record = merge_stage(strategy, theta_init, theta_prev, theta_ft, task,
                                             stage_trm, keep_fraction)

        for seen in stream[:t]:
            matrix.set(t, seen.task_index, accuracy(theta_prev, seen.test))
        if on_stage is not None:
            on_stage(t, theta_prev, record)

        seconds = time.perf_counter() - started
        stages.append(StageSummary(t, report.train_accuracy, seconds, record))
        logger.info(
            f"[{strategy} seed={seed}] stage {t}/{num_tasks}: "
            f"acc on seen tasks {[round(matrix.get(t, i), 3) for i in range(1, t + 1)]}"
        )

    last_accuracy = accuracy(theta_prev, joint_testset(stream, num_tasks))
    forgetting = average_forgetting(matrix) if num_tasks >= 2 else None
    return CLReport(
        strategy=strategy,
        seed=seed,
        matrix=matrix,
        last_accuracy=last_accuracy,
        average_forgetting=forgetting,
        stages=tuple(stages),
        final_model=theta_prev,
        final_finetuned=theta_ft,
    )
