"""
Run-matrix execution.

(seed, strategy) runs are independent and go to a thread pool bounded by
settings.TRM_LAB_THREADS; results come back in submission order so output
files do not depend on scheduling.
"""
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from django.conf import settings

from core.storage import write_json_atomic
from networks.checkpoint import save_checkpoint
from streams.generator import generate_stream

from .protocol import run_cl_experiment

logger = logging.getLogger(__name__)

# serialises checkpoint writes coming from worker threads
_write_lock = threading.Lock()


@dataclass(frozen=True)
class RunJob:
    seed: int
    strategy: str
    cfg: object
    checkpoint_dir: object = None


def worker_count(jobs):
    return max(1, min(int(settings.TRM_LAB_THREADS), len(jobs)))


def _checkpoint_writer(directory):
    def on_stage(stage, model, record):
        with _write_lock:
            save_checkpoint(directory / f"stage{stage}.trm", model)
            if record is not None:
                write_json_atomic(directory / f"stage{stage}.merge.json", record)
    return on_stage


def execute(job, stream=None):
    """Run one job, writing per-stage checkpoints when it has a checkpoint_dir."""
    cfg = job.cfg
    stream = stream if stream is not None else generate_stream(cfg.stream)
    on_stage = None
    if job.checkpoint_dir is not None:
        on_stage = _checkpoint_writer(job.checkpoint_dir / f"seed{job.seed}" / job.strategy)
    return run_cl_experiment(
        stream, job.strategy, cfg.train, cfg.trm, job.seed,
        spec=cfg.spec, keep_fraction=cfg.baselines.ties_keep_fraction, on_stage=on_stage,
    )


def run_matrix(jobs):
    """Execute jobs and return their CLReports in job order."""
    jobs = list(jobs)
    if not jobs:
        return []
    streams = {}
    for job in jobs:
        streams.setdefault(job.cfg.stream, None)
    for stream_cfg in streams:
        streams[stream_cfg] = generate_stream(stream_cfg)
    workers = worker_count(jobs)
    logger.info(f"Running {len(jobs)} runs on {workers} worker(s)")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: execute(job, streams[job.cfg.stream]), jobs))
