import inspect
import math

import numpy as np
import pytest

from core.exceptions import ContractViolation, NumericFailure
from core.rng import RngState
from core.tensorcore import cross_entropy
from experiments.factories import StreamConfigFactory, TrainConfigFactory
from merging.objective import (
    MergeContext,
    ObjectiveTerms,
    consistency,
    layer_weights,
    loss_align,
    loss_pre,
    loss_res,
    loss_total,
    responsiveness,
)
from merging.search import TrmConfig, merge_batch, trm_search
from networks.mlp import MlpSpec, ModelParams, flatten, init_params, logits
from streams.generator import Split, generate_stream
from training.finetune import finetune

SPEC = MlpSpec((2, 8, 4))


def constant_model(value):
    """One affine layer whose single output is value for every input."""
    return ModelParams(MlpSpec((1, 1)), flatten([(np.zeros((1, 1)), np.array([value]))]))


def two_task_setup(seed):
    """theta_init, theta_1 and the finetuned model of task 2 on a 4-class stream."""
    stream = generate_stream(StreamConfigFactory(num_classes=4, num_tasks=2, seed=seed))
    train = TrainConfigFactory(seed=seed)
    theta_init = init_params(SPEC, RngState(seed))
    theta_prev, _ = finetune(theta_init, stream[0], train)
    theta_ft, _ = finetune(theta_prev, stream[1], train)
    return theta_init, theta_prev, theta_ft, stream[1]


class TestLayerWeights:
    """Tests for the progressive layer weighting"""

    def test_twelve_layers_pivot_seven(self):
        """Test twelve-layer weights with pivot seven against reference values"""
        weights = layer_weights(12, 7)
        for w in weights[:8]:
            assert w == pytest.approx(0.010777, abs=1e-6)
        expected = [0.029295, 0.079631, 0.216459, 0.588399]
        assert weights[8:] == pytest.approx(expected, abs=1e-6)
        assert abs(sum(weights) - 1.0) <= 1e-12
        assert all(a <= b for a, b in zip(weights, weights[1:]))

    def test_single_layer(self):
        """Test that a single layer gets all the weight"""
        assert layer_weights(1, 1) == [1.0]

    @pytest.mark.parametrize('num_layers, pivot', [(3, 1), (5, 5), (20, 15), (8, 2)])
    def test_normalised(self, num_layers, pivot):
        """Test that the weights sum to one"""
        assert abs(math.fsum(layer_weights(num_layers, pivot)) - 1.0) <= 1e-12

    def test_pivot_out_of_range(self):
        """Test that a pivot beyond the layer count is rejected"""
        with pytest.raises(ContractViolation):
            layer_weights(3, 4)


class TestObjectiveTerms:
    """Tests for L_align, L_pre, L_res and their combination"""

    def test_align_uniform_logits(self):
        """Test that zero logits give log(num_classes)"""
        model = ModelParams(MlpSpec((2, 4)), np.zeros(12))
        batch = Split(np.ones((3, 2)), np.array([0, 1, 3]))
        assert loss_align(model, batch) == pytest.approx(math.log(4.0))

    def test_align_is_cross_entropy(self):
        """Test that L_align is the batch cross-entropy"""
        model = init_params(SPEC, RngState(2))
        batch = Split(np.array([[0.5, -1.0], [2.0, 0.3]]), np.array([1, 3]))
        assert loss_align(model, batch) == cross_entropy(logits(model, batch.features), batch.labels)

    def test_pre_scalar_outputs(self):
        """Test L_pre on constant scalar outputs"""
        batch = Split(np.zeros((4, 1)), np.zeros(4, dtype=np.int64))
        value = loss_pre(constant_model(2.0), constant_model(1.0), constant_model(2.0), batch, [1.0])
        assert value == pytest.approx(0.25)

    def test_pre_degenerate_centroid(self):
        """Test that identical models give zero L_pre"""
        model = init_params(SPEC, RngState(3))
        batch = Split(np.array([[1.0, 2.0], [-1.0, 0.5]]), np.array([0, 1]))
        assert loss_pre(model, model, model, batch, layer_weights(2, 1)) == 0.0

    def test_pre_spec_mismatch(self):
        """Test that models of different architectures are rejected"""
        batch = Split(np.zeros((1, 1)), np.zeros(1, dtype=np.int64))
        other = ModelParams(MlpSpec((1, 2)), np.zeros(4))
        with pytest.raises(ContractViolation):
            loss_pre(constant_model(1.0), other, constant_model(1.0), batch, [1.0])

    def test_responsiveness(self):
        """Test that responsiveness is the negative squared norm"""
        assert responsiveness(np.zeros(3)) == 0.0
        assert responsiveness(np.array([3.0, 4.0])) == -25.0

    def test_res_is_nonpositive(self):
        """Test that L_res is never positive"""
        model = init_params(SPEC, RngState(4))
        batch = Split(np.array([[1.0, 2.0], [-1.0, 0.5]]), np.array([0, 1]))
        assert loss_res(model, batch) <= 0.0

    def test_consistency_is_nonnegative(self):
        """Test the layer-weighted squared distance on one layer"""
        trace = [np.array([[1.0, -2.0]])]
        assert consistency(trace, [np.array([[0.0, 0.0]])], [1.0]) == 5.0

    def test_total_arithmetic(self):
        """Test the weighted sum of the three terms"""
        terms = ObjectiveTerms(1.0, 0.25, -25.0)
        assert terms.total(TrmConfig(lambda1=0.1, lambda2=0.01)) == pytest.approx(0.775)

    def test_total_without_regularisers(self):
        """Test that zero lambdas leave only L_align"""
        theta_init, theta_prev, theta_ft, task = two_task_setup(0)
        context = MergeContext.build(theta_prev, theta_ft, task.train)
        total, terms = loss_total(theta_ft.theta, context, TrmConfig(lambda1=0.0, lambda2=0.0))
        assert total == pytest.approx(loss_align(theta_ft, task.train), abs=1e-12)
        assert terms.pre >= 0.0 and terms.res <= 0.0
        assert context.evaluations == 1

    def test_non_finite_objective(self):
        """Test that infinite weights raise NumericFailure naming the term"""
        theta_init, theta_prev, theta_ft, task = two_task_setup(0)
        context = MergeContext.build(theta_prev, theta_ft, task.train)
        poisoned = np.full_like(theta_ft.theta, np.inf)
        with pytest.raises(NumericFailure) as excinfo:
            loss_total(poisoned, context, TrmConfig())
        assert excinfo.value.component in ('L_align', 'L_pre', 'L_res')


class TestTrmSearch:
    """Tests for the coefficient search"""

    def test_defaults(self):
        """Test the default search hyperparameters"""
        cfg = TrmConfig()
        assert (cfg.lambda1, cfg.lambda2, cfg.merge_epochs) == (0.1, 0.01, 5)
        assert (cfg.crossover_ratio, cfg.num_perturbations) == (0.6, 1)
        assert cfg.crossover_mode == 'start'

    def test_invalid_config(self):
        """Test that a negative lambda or an unknown crossover mode is rejected"""
        with pytest.raises(ContractViolation):
            TrmConfig(lambda1=-0.1)
        with pytest.raises(ContractViolation):
            TrmConfig(crossover_mode='replace')

    @pytest.mark.parametrize('seed', range(5))
    def test_default_merge_stays_on_trajectory(self, seed):
        """Test that with no perturbations the default merge lies on the theta_prev to theta_ft line"""
        theta_init, theta_prev, theta_ft, task = two_task_setup(seed)
        cfg = TrmConfig(num_perturbations=0, merge_epochs=1, steps_per_epoch=3, seed=seed)
        outcome = trm_search(theta_init, theta_prev, theta_ft, task, cfg)
        alpha = outcome.coefficients.alpha
        expected = theta_prev.theta + alpha * (theta_ft.theta - theta_prev.theta)
        assert np.allclose(outcome.theta_merged, expected, rtol=0, atol=1e-10)
        assert 0.0 <= alpha <= 1.0

    def test_start_is_drawn_on_the_segment(self):
        """Test that ratio 0 starts the search at alpha 0.5 and records that start"""
        theta_init, theta_prev, theta_ft, task = two_task_setup(6)
        cfg = TrmConfig(crossover_ratio=0.0, merge_epochs=1, steps_per_epoch=1, seed=6)
        outcome = trm_search(theta_init, theta_prev, theta_ft, task, cfg)
        assert outcome.start_point.alpha == pytest.approx(0.5, abs=1e-12)
        assert outcome.to_record()['start']['alpha'] == outcome.start_point.alpha
        assert outcome.shifted_anchor_values == {}

    @pytest.mark.parametrize('seed', range(5))
    def test_shift_mode_keeps_plain_anchors(self, seed):
        """Test that shifting the base by a full crossover never loses to the plain anchors"""
        theta_init, theta_prev, theta_ft, task = two_task_setup(seed)
        cfg = TrmConfig(crossover_mode='shift', crossover_ratio=1.0, merge_epochs=1,
                        steps_per_epoch=3, merge_batch_size=64, seed=seed)
        outcome = trm_search(theta_init, theta_prev, theta_ft, task, cfg)
        assert set(outcome.shifted_anchor_values) == {0.0, 1.0, 0.5}

        batch = merge_batch(task.train, cfg.merge_batch_size, RngState(cfg.seed).spawn('merge-batch'))
        context = MergeContext.build(theta_prev, theta_ft, batch, cfg.layer_pivot)
        total, _ = loss_total(outcome.theta_merged, context, cfg)
        assert total <= min(outcome.anchor_values.values()) + 1e-12
        assert total == pytest.approx(outcome.total, abs=1e-12)

    @pytest.mark.parametrize('seed', range(5))
    def test_trace_never_rises(self, seed):
        """Test that every recorded step is no worse than the one before it"""
        theta_init, theta_prev, theta_ft, task = two_task_setup(seed)
        cfg = TrmConfig(merge_epochs=2, steps_per_epoch=4, coeff_lr=5.0, seed=seed)
        outcome = trm_search(theta_init, theta_prev, theta_ft, task, cfg)
        totals = [outcome.start_point.total] + [p.total for p in outcome.objective_trace]
        assert all(later <= earlier for earlier, later in zip(totals, totals[1:]))

    @pytest.mark.parametrize('seed', range(20))
    def test_never_worse_than_anchors(self, seed):
        """Test that the merge never loses to the 0, 1 and 0.5 anchors"""
        theta_init, theta_prev, theta_ft, task = two_task_setup(seed)
        cfg = TrmConfig(merge_epochs=2, steps_per_epoch=3, merge_batch_size=64, seed=seed)
        outcome = trm_search(theta_init, theta_prev, theta_ft, task, cfg)

        batch = merge_batch(task.train, cfg.merge_batch_size, RngState(cfg.seed).spawn('merge-batch'))
        context = MergeContext.build(theta_prev, theta_ft, batch, cfg.layer_pivot)
        total, _ = loss_total(outcome.theta_merged, context, cfg)
        assert total <= min(outcome.anchor_values.values()) + 1e-12
        assert set(outcome.anchor_values) == {0.0, 1.0, 0.5}
        assert len(outcome.objective_trace) == 6
        assert 0.0 <= outcome.coefficients.alpha <= 1.0

    def test_betas_stay_in_bound(self):
        """Test that every beta stays inside the trajectory bound"""
        theta_init, theta_prev, theta_ft, task = two_task_setup(3)
        cfg = TrmConfig(merge_epochs=2, steps_per_epoch=5, num_perturbations=2, seed=3)
        outcome = trm_search(theta_init, theta_prev, theta_ft, task, cfg)
        bound = cfg.beta_max * np.linalg.norm(theta_ft.theta - theta_prev.theta)
        for point in outcome.objective_trace:
            assert len(point.betas) == 2
            assert all(abs(beta) <= bound + 1e-12 for beta in point.betas)

    def test_degenerate_trajectory(self):
        """Test that equal endpoints merge to that endpoint"""
        theta_init, theta_prev, _, task = two_task_setup(1)
        cfg = TrmConfig(crossover_ratio=0.0, merge_epochs=1, steps_per_epoch=2)
        outcome = trm_search(theta_init, theta_prev, theta_prev, task, cfg)
        assert np.allclose(outcome.theta_merged, theta_prev.theta, rtol=0, atol=1e-12)
        assert len(set(outcome.anchor_values.values())) == 1
        assert outcome.coefficients.betas == ()

    def test_anchor_only(self):
        """Test that anchor_only evaluates the three anchors and nothing else"""
        theta_init, theta_prev, theta_ft, task = two_task_setup(2)
        outcome = trm_search(theta_init, theta_prev, theta_ft, task, TrmConfig(anchor_only=True))
        assert outcome.objective_trace == ()
        assert outcome.selected.startswith('anchor')
        assert outcome.total == min(outcome.anchor_values.values())
        assert outcome.objective_evaluations == 3

    def test_deterministic(self):
        """Test that one seed gives byte-identical merges"""
        theta_init, theta_prev, theta_ft, task = two_task_setup(4)
        cfg = TrmConfig(merge_epochs=1, steps_per_epoch=2, seed=9)
        a = trm_search(theta_init, theta_prev, theta_ft, task, cfg)
        b = trm_search(theta_init, theta_prev, theta_ft, task, cfg)
        assert a.theta_merged.tobytes() == b.theta_merged.tobytes()
        assert a.to_record() == b.to_record()

    def test_spec_mismatch(self):
        """Test that models of different architectures are rejected"""
        theta_init, theta_prev, theta_ft, task = two_task_setup(0)
        other = init_params(MlpSpec((2, 6, 4)), RngState(0))
        with pytest.raises(ContractViolation):
            trm_search(theta_init, theta_prev, other, task, TrmConfig())

    def test_only_three_models_accepted(self):
        """Test that the search takes exactly three models"""
        params = list(inspect.signature(trm_search).parameters)
        assert params == ['theta_init', 'theta_prev', 'theta_cur_ft', 'task_data', 'cfg']
