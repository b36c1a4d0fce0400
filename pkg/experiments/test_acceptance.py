"""
Directional reproduction on the default 5-task, 10-class stream over seeds 0..9.

These runs take minutes; deselect them with -m "not slow".
"""
from dataclasses import replace

import pytest

from experiments.ablation import ablation_suite
from experiments.config import ExperimentConfig
from experiments.runner import RunJob, run_matrix
from streams.generator import StreamConfig

SEEDS = tuple(range(10))


def mean(values):
    return sum(values) / len(values)


@pytest.fixture(scope='module')
def reports():
    """Default-config reports for the three strategies the checks compare"""
    cfg = ExperimentConfig(seeds=SEEDS)
    strategies = ('seq_finetune', 'average', 'trm')
    jobs = [RunJob(seed, strategy, cfg) for strategy in strategies for seed in SEEDS]
    finished = run_matrix(jobs)
    return {
        strategy: [r for r in finished if r.strategy == strategy] for strategy in strategies
    }


@pytest.mark.slow
class TestForgettingReproduction:
    """Sequential finetuning forgets; trajectory-regularised merging recovers"""

    def test_sequential_finetuning_forgets(self, reports):
        """Test that sequential finetuning forgets at least 0.10"""
        assert mean([r.average_forgetting for r in reports['seq_finetune']]) >= 0.10

    def test_trm_beats_sequential_finetuning(self, reports):
        """Test that TRM improves last accuracy over sequential finetuning"""
        trm = mean([r.last_accuracy for r in reports['trm']])
        seq = mean([r.last_accuracy for r in reports['seq_finetune']])
        assert trm >= seq + 0.05

    def test_trm_at_least_plain_averaging(self, reports):
        """Test that TRM matches or beats plain averaging"""
        trm = mean([r.last_accuracy for r in reports['trm']])
        average = mean([r.last_accuracy for r in reports['average']])
        assert trm >= average

    def test_trm_forgets_less(self, reports):
        """Test that TRM forgets no more than sequential finetuning"""
        trm = mean([r.average_forgetting for r in reports['trm']])
        seq = mean([r.average_forgetting for r in reports['seq_finetune']])
        assert trm <= seq


@pytest.mark.slow
class TestTwoTaskMerge:
    """On a two-task stream the searched merge is at least as good as averaging"""

    def test_trm_at_least_averaging(self):
        """Test that TRM matches or beats averaging on two tasks"""
        cfg = ExperimentConfig(stream=StreamConfig(num_classes=4, num_tasks=2), seeds=SEEDS)
        jobs = [RunJob(seed, strategy, cfg) for strategy in ('average', 'trm') for seed in SEEDS]
        finished = run_matrix(jobs)
        average = mean([r.last_accuracy for r in finished[:10]])
        trm = mean([r.last_accuracy for r in finished[10:]])
        assert trm >= average


@pytest.mark.slow
class TestAblationStructure:
    """The full objective is at least as good as any single term"""

    def test_full_objective_is_best_single(self):
        """Test that the full objective beats every single-term variant"""
        cfg = ExperimentConfig(seeds=SEEDS)
        rows = ablation_suite(replace(cfg, strategies=('trm',)), ['b', 'c', 'd', 'h'])
        by_variant = {}
        for row in rows:
            by_variant.setdefault(row['variant'], []).append(row['last_accuracy'])
        full = mean(by_variant['h'])
        for single in ('b', 'c', 'd'):
            assert full >= mean(by_variant[single])
