"""
Ablation over the three objective terms.

Variant a is the anchor baseline: the three anchors are scored with the full
objective and the best one kept, with no coefficient search. Variants b..h
search with the terms their flags enable; a disabled term gets weight 0.
"""
from dataclasses import replace

from core.exceptions import require

from .runner import RunJob, run_matrix

VARIANTS = {
    'a': (False, False, False),
    'b': (True, False, False),
    'c': (False, True, False),
    'd': (False, False, True),
    'e': (True, True, False),
    'f': (True, False, True),
    'g': (False, True, True),
    'h': (True, True, True),
}

HEADER = ['variant', 'align', 'pre', 'res', 'seed', 'last_accuracy', 'average_forgetting']


def variant_trm_config(trm_cfg, variant):
    """TrmConfig for one ablation variant; 'a' skips the search entirely."""
    align, pre, res = VARIANTS[variant]
    if variant == 'a':
        return replace(trm_cfg, anchor_only=True)
    return replace(
        trm_cfg,
        align_weight=1.0 if align else 0.0,
        lambda1=trm_cfg.lambda1 if pre else 0.0,
        lambda2=trm_cfg.lambda2 if res else 0.0,
    )


def ablation_suite(cfg, variants=None, seeds=None):
    """One row per (variant, seed) using the TRM strategy."""
    variants = list(variants or VARIANTS)
    unknown = [v for v in variants if v not in VARIANTS]
    require(not unknown, f"unknown ablation variants: {unknown}")
    seeds = list(seeds if seeds is not None else cfg.seeds)
    jobs = [
        RunJob(seed, 'trm', replace(cfg, trm=variant_trm_config(cfg.trm, variant)))
        for variant in variants for seed in seeds
    ]
    reports = run_matrix(jobs)
    rows = []
    for job, report, variant in zip(jobs, reports, [v for v in variants for _ in seeds]):
        rows.append({
            'variant': variant,
            'flags': VARIANTS[variant],
            'seed': job.seed,
            'last_accuracy': report.last_accuracy,
            'average_forgetting': report.average_forgetting,
        })
    return rows
