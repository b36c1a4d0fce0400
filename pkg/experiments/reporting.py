"""results.csv / summary.json / ablation and sweep tables."""
from core.storage import format_real, write_csv_atomic, write_json_atomic

from .ablation import HEADER as ABLATION_HEADER

RESULTS_HEADER = ['seed', 'strategy', 'stage', 'eval_task', 'accuracy']
TIMING_HEADER = ['seed', 'strategy', 'stage', 'train_accuracy', 'seconds']
SWEEP_HEADER = ['min', 'max', 'mean']


def results_rows(reports):
    """One csv row per accuracy-matrix entry of every report."""
    for report in reports:
        for stage, task, value in report.matrix.rows():
            yield [report.seed, report.strategy, stage, task, format_real(value)]


def timing_rows(reports):
    """Per-stage finetuning accuracy and wall time; not part of the byte-stable outputs."""
    for report in reports:
        for stage in report.stages:
            yield [report.seed, report.strategy, stage.stage, format_real(stage.train_accuracy),
                   f"{stage.seconds:.3f}"]


def _mean(values):
    values = [v for v in values if v is not None]
    return sum(values) / len(values) if values else None


def summary(reports, strategies, seeds):
    """Per strategy: seeds, mean last accuracy, mean average forgetting, per-seed values."""
    entries = []
    for strategy in strategies:
        runs = [r for r in reports if r.strategy == strategy]
        entries.append({
            'strategy': strategy,
            'seeds': list(seeds),
            'mean_last_accuracy': _mean([r.last_accuracy for r in runs]),
            'mean_average_forgetting': _mean([r.average_forgetting for r in runs]),
            'per_seed': [
                {'seed': r.seed, 'last_accuracy': r.last_accuracy,
                 'average_forgetting': r.average_forgetting}
                for r in runs
            ],
        })
    return {'schema_version': 1, 'strategies': entries}


def write_results(out_dir, reports, strategies, seeds):
    write_csv_atomic(out_dir / 'results.csv', RESULTS_HEADER, results_rows(reports))
    write_json_atomic(out_dir / 'summary.json', summary(reports, strategies, seeds))


def write_timing(out_dir, reports):
    return write_csv_atomic(out_dir / 'timing.csv', TIMING_HEADER, timing_rows(reports))


def write_ablation(path, rows):
    return write_csv_atomic(path, ABLATION_HEADER, [
        [row['variant'], *(int(flag) for flag in row['flags']), row['seed'],
         format_real(row['last_accuracy']),
         '' if row['average_forgetting'] is None else format_real(row['average_forgetting'])]
        for row in rows
    ])


def write_sweep(path, key, rows, labels=None):
    """labels, when given, are written verbatim in place of the swept values."""
    labels = labels or [row['value'] for row in rows]
    return write_csv_atomic(path, [key] + SWEEP_HEADER, [
        [label] + [format_real(row[col]) for col in SWEEP_HEADER] for label, row in zip(labels, rows)
    ])
