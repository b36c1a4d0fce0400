import inspect
from dataclasses import replace

import numpy as np
import pytest

from core.exceptions import ContractViolation
from core.rng import RngState, mix_seed
from experiments.ablation import HEADER, VARIANTS, ablation_suite, variant_trm_config
from experiments.factories import ExperimentConfigFactory, StreamConfigFactory
from experiments.metrics import accuracy
from experiments.protocol import merge_stage, run_cl_experiment
from experiments.reporting import timing_rows
from experiments.runner import RunJob, execute, run_matrix, worker_count
from experiments.sweeps import sharpness_study, sweep_parameter, sweep_ratio
from merging.search import TrmConfig
from networks.checkpoint import load_checkpoint
from networks.mlp import init_params
from streams.generator import generate_stream
from training.finetune import finetune


@pytest.fixture
def cfg():
    """Fixture for a small three-task experiment"""
    return ExperimentConfigFactory()


@pytest.fixture
def stream(cfg):
    return generate_stream(cfg.stream)


class TestRunClExperiment:
    """Tests for the sequential protocol"""

    @pytest.mark.parametrize('strategy', ['seq_finetune', 'average', 'ties', 'magmax', 'trm'])
    def test_every_strategy_completes(self, cfg, stream, strategy):
        """Test that each strategy fills the whole accuracy matrix"""
        report = run_cl_experiment(stream, strategy, cfg.train, cfg.trm, 0, spec=cfg.spec)
        assert report.matrix.completed_stages == 3
        assert 0.0 <= report.last_accuracy <= 1.0
        assert report.average_forgetting is not None
        assert len(report.stages) == 3

    def test_single_task_is_plain_finetune(self, cfg):
        """Test that a one-task stream reduces to finetuning"""
        stream_cfg = StreamConfigFactory(num_classes=2, num_tasks=1, seed=0)
        one = generate_stream(stream_cfg)
        spec = cfg.model.spec_for(stream_cfg)
        report = run_cl_experiment(one, 'trm', cfg.train, cfg.trm, 5, spec=spec)
        start = init_params(spec, RngState(5).spawn('init'))
        stage_train = replace(cfg.train, seed=mix_seed(cfg.train.seed, 5, 1))
        expected, _ = finetune(start, one[0], stage_train)
        assert np.array_equal(report.final_model.theta, expected.theta)
        assert report.average_forgetting is None
        assert report.matrix.get(1, 1) == accuracy(expected, one[0].test)

    def test_deterministic(self, cfg, stream):
        """Test that one seed gives identical reports"""
        a = run_cl_experiment(stream, 'trm', cfg.train, cfg.trm, 2, spec=cfg.spec)
        b = run_cl_experiment(stream, 'trm', cfg.train, cfg.trm, 2, spec=cfg.spec)
        assert list(a.matrix.rows()) == list(b.matrix.rows())
        assert a.final_model.theta.tobytes() == b.final_model.theta.tobytes()

    def test_trm_stages_carry_merge_records(self, cfg, stream):
        """Test that every TRM stage after the first has a merge record"""
        report = run_cl_experiment(stream, 'trm', cfg.train, cfg.trm, 0, spec=cfg.spec)
        assert report.stages[0].merge is None
        assert all(stage.merge is not None for stage in report.stages[1:])

    def test_stage_summaries_reach_timing_rows(self, cfg, stream):
        """Test that each stage reports its finetuning accuracy and wall time"""
        report = run_cl_experiment(stream, 'average', cfg.train, cfg.trm, 1, spec=cfg.spec)
        assert [stage.stage for stage in report.stages] == [1, 2, 3]
        assert all(0.0 <= stage.train_accuracy <= 1.0 for stage in report.stages)
        assert all(stage.seconds >= 0.0 for stage in report.stages)
        rows = list(timing_rows([report]))
        assert [row[:3] for row in rows] == [[1, 'average', 1], [1, 'average', 2], [1, 'average', 3]]

    def test_unknown_strategy(self, cfg, stream):
        """Test that an unknown strategy is rejected"""
        with pytest.raises(ContractViolation):
            run_cl_experiment(stream, 'replay', cfg.train, cfg.trm, 0)

    def test_no_model_history_in_interfaces(self):
        """Test that no interface accepts a history of models"""
        loop = list(inspect.signature(run_cl_experiment).parameters)
        assert loop == ['stream', 'strategy', 'train_cfg', 'trm_cfg', 'seed', 'spec',
                        'keep_fraction', 'on_stage']
        merge = list(inspect.signature(merge_stage).parameters)
        assert merge == ['strategy', 'theta_init', 'theta_prev', 'theta_ft', 'task', 'trm_cfg',
                         'keep_fraction']

    def test_on_stage_sees_every_stage(self, cfg, stream):
        """Test that on_stage is called once per stage"""
        seen = []
        run_cl_experiment(stream, 'average', cfg.train, cfg.trm, 0, spec=cfg.spec,
                          on_stage=lambda stage, model, record: seen.append(stage))
        assert seen == [1, 2, 3]


class TestRunner:
    """Tests for the run matrix"""

    def test_results_in_job_order(self, cfg, settings):
        """Test that reports come back in job order"""
        settings.TRM_LAB_THREADS = 3
        jobs = [RunJob(seed, strategy, cfg) for seed in (0, 1) for strategy in ('trm', 'average')]
        reports = run_matrix(jobs)
        assert [(r.seed, r.strategy) for r in reports] == [(j.seed, j.strategy) for j in jobs]

    def test_threads_do_not_change_results(self, cfg, settings):
        """Test that the thread count does not change any weight"""
        jobs = [RunJob(seed, 'trm', cfg) for seed in (0, 1, 2)]
        settings.TRM_LAB_THREADS = 1
        serial = run_matrix(jobs)
        settings.TRM_LAB_THREADS = 3
        parallel = run_matrix(jobs)
        for a, b in zip(serial, parallel):
            assert a.final_model.theta.tobytes() == b.final_model.theta.tobytes()

    def test_worker_count_bounded(self, settings):
        """Test that workers are bounded by jobs and by one"""
        settings.TRM_LAB_THREADS = 8
        assert worker_count([1, 2]) == 2
        settings.TRM_LAB_THREADS = 0
        assert worker_count([1, 2]) == 1

    def test_checkpoints_written(self, cfg, tmp_path):
        """Test the per-stage checkpoint and merge record files"""
        execute(RunJob(0, 'trm', cfg, tmp_path))
        directory = tmp_path / 'seed0' / 'trm'
        assert sorted(p.name for p in directory.iterdir()) == [
            'stage1.trm', 'stage2.merge.json', 'stage2.trm', 'stage3.merge.json', 'stage3.trm',
        ]
        assert load_checkpoint(directory / 'stage3.trm').spec == cfg.spec


class TestAblation:
    """Tests for the objective-term ablation"""

    def test_variant_configs(self):
        """Test the coefficients each variant sets"""
        base = TrmConfig(lambda1=0.1, lambda2=0.01)
        assert variant_trm_config(base, 'a').anchor_only
        full = variant_trm_config(base, 'h')
        assert (full.align_weight, full.lambda1, full.lambda2) == (1.0, 0.1, 0.01)
        pre_only = variant_trm_config(base, 'c')
        assert (pre_only.align_weight, pre_only.lambda1, pre_only.lambda2) == (0.0, 0.1, 0.0)

    def test_rows_per_variant_and_seed(self, cfg):
        """Test one row per variant and seed"""
        rows = ablation_suite(replace(cfg, seeds=(0, 1)), ['a', 'h'])
        assert [(r['variant'], r['seed']) for r in rows] == [('a', 0), ('a', 1), ('h', 0), ('h', 1)]
        assert rows[-1]['flags'] == (True, True, True)

    def test_all_variants(self):
        """Test that variants a to h exist"""
        assert sorted(VARIANTS) == list('abcdefgh')
        assert HEADER[1:4] == ['align', 'pre', 'res']

    def test_unknown_variant(self, cfg):
        """Test that an unknown variant is rejected"""
        with pytest.raises(ContractViolation):
            ablation_suite(cfg, ['z'])


class TestSweeps:
    """Tests for the sensitivity studies"""

    def test_ratio_rows(self, cfg):
        """Test one ordered row per crossover ratio"""
        rows = sweep_ratio(cfg, [0.0, 0.6, 1.0], runs=2)
        assert [row['value'] for row in rows] == [0.0, 0.6, 1.0]
        assert all(row['min'] <= row['mean'] <= row['max'] for row in rows)

    def test_ratio_outside_unit_interval(self, cfg):
        """Test that a ratio above one is rejected"""
        with pytest.raises(ContractViolation):
            sweep_ratio(cfg, [1.2], runs=1)

    def test_parameter_sweep(self, cfg):
        """Test that sweep values are parsed to the field type"""
        rows = sweep_parameter(cfg, 'merge_epochs', ['1', '2'])
        assert [row['value'] for row in rows] == [1, 2]

    def test_unsweepable_parameter(self, cfg):
        """Test that seed cannot be swept"""
        with pytest.raises(ContractViolation):
            sweep_parameter(cfg, 'seed', [1])

    def test_sharpness_rows(self, cfg):
        """Test the labels and finiteness of sharpness rows"""
        rows = sharpness_study(cfg, [0.0, 1.0], seed=0, iters=5)
        assert [label for label, _ in rows] == ['finetune', 'lambda2=0.0', 'lambda2=1.0']
        assert all(np.isfinite(value) for _, value in rows)
