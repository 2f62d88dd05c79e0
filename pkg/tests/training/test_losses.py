"""
Tests for the multi-task losses and their finite-difference gradient check.
"""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from models.parts import N_PARTS
from training.codec import ProposalLabel
from training.grad_check import grad_check, gating_holds, run_gradient_suite
from training.losses import (
    LossWeights, ProposalTerms, detection_loss, level_loss, part_loss, smooth_l1, softmax_log_loss, template_loss,
    total_loss, visibility_loss,
)
from utils.errors import IndexOutOfRange, ShapeMismatch, ValidationError

POSITIVE = ProposalLabel(C=1, gt_index=0)
BACKGROUND = ProposalLabel(C=0)


@pytest.mark.parametrize("x, value, grad", [(0.0, 0.0, 0.0), (0.5, 0.125, 0.5), (2.0, 1.5, 1.0), (-2.0, 1.5, -1.0)])
def test_smooth_l1_examples(x, value, grad):
    assert smooth_l1(x) == (pytest.approx(value), pytest.approx(grad))


def test_smooth_l1_is_continuous_at_transition():
    below, _ = smooth_l1(1.0 - 1e-9)
    above, _ = smooth_l1(1.0)
    assert below == pytest.approx(above, abs=1e-8)


def test_softmax_log_loss_examples():
    assert softmax_log_loss([0.0, 0.0], 0)[0] == pytest.approx(math.log(2))
    assert softmax_log_loss([1.0, 0.0], 0)[0] == pytest.approx(0.3133, abs=1e-4)
    with pytest.raises(IndexOutOfRange):
        softmax_log_loss([0.0, 0.0], 2)
    with pytest.raises(ShapeMismatch):
        softmax_log_loss([0.0], 0)


@given(st.lists(st.floats(-20, 20), min_size=2, max_size=6), st.floats(-50, 50))
def test_softmax_log_loss_shift_invariant(logits, shift):
    a, _ = softmax_log_loss(logits, 0)
    b, _ = softmax_log_loss(np.asarray(logits) + shift, 0)
    assert a == pytest.approx(b, abs=1e-9)
    assert a >= 0.0


def test_detection_loss_examples():
    w = LossWeights()
    value, grads = detection_loss([0.0, 0.0], [5.0, -3.0, 1.0, 2.0], BACKGROUND, np.zeros(4), w)
    assert value == pytest.approx(math.log(2))
    assert not np.any(grads["deltas"])
    value, _ = detection_loss([0.0, 0.0], [0.1, 0.2, 0.3, 0.4], POSITIVE, [0.1, 0.2, 0.3, 0.4], w)
    assert value == pytest.approx(math.log(2))
    value, _ = detection_loss([0.0, 0.0], np.ones(4), POSITIVE, np.zeros(4), LossWeights(cls=0.0, reg=0.0))
    assert value == 0.0
    with pytest.raises(ShapeMismatch):
        detection_loss([0.0, 0.0], np.ones(3), POSITIVE, np.zeros(4), w)


def test_part_loss_examples():
    target = np.zeros((N_PARTS, 2))
    assert part_loss(target, target, 1, 3.0)[0] == 0.0
    pred = target.copy()
    pred[4, 0] = 0.5
    assert part_loss(pred, target, 1, 3.0)[0] == pytest.approx(0.375)
    value, grads = part_loss(pred, target, 0, 3.0)
    assert value == 0.0 and not np.any(grads["parts"])


def test_visibility_loss_examples():
    target = np.arange(N_PARTS) % 4
    value, _ = visibility_loss(np.zeros((N_PARTS, 4)), target, 1, 1.0)
    assert value == pytest.approx(N_PARTS * math.log(4))
    confident = np.zeros((N_PARTS, 4))
    confident[np.arange(N_PARTS), target] = 10.0
    assert visibility_loss(confident, target, 1, 1.0)[0] < 1e-3 * N_PARTS
    assert visibility_loss(confident, target, 0, 1.0)[0] == 0.0
    with pytest.raises(IndexOutOfRange):
        visibility_loss(np.zeros((1, 4)), [4], 1, 1.0)


def test_template_loss_examples():
    target = np.zeros((4, 3))
    assert template_loss(target, target, 1, 1.0)[0] == 0.0
    pred = target.copy()
    pred[2, 1] = 2.0
    assert template_loss(pred, target, 1, 2.0)[0] == pytest.approx(3.0)
    assert template_loss(pred, target, 0, 2.0)[0] == 0.0


def _term(level, rng):
    terms = ProposalTerms(label=POSITIVE, class_logits=np.array([-20.0, 20.0]),
                          pred_deltas=np.full(4, 0.1), target_deltas=np.full(4, 0.1))
    if level >= 2:
        parts = rng.normal(size=(N_PARTS, 2))
        terms.pred_parts, terms.target_parts = parts, parts.copy()
    if level == 3:
        vis = rng.integers(0, 4, size=N_PARTS)
        logits = np.zeros((N_PARTS, 4))
        logits[np.arange(N_PARTS), vis] = 40.0
        temp = rng.normal(size=(4, 3))
        terms.vis_logits, terms.target_vis = logits, vis
        terms.pred_template, terms.target_template = temp, temp.copy()
    return terms


def test_total_loss_examples(rng):
    w = LossWeights()
    levels = [[_term(lvl, rng) for _ in range(3)] for lvl in (1, 2, 3)]
    assert total_loss(*levels, w) < 1e-6
    assert total_loss(levels[0], [], [], w) == pytest.approx(level_loss(levels[0], 1, w))
    assert total_loss(*levels, LossWeights.zeros()) == 0.0


def test_level_three_requires_visibility_terms(rng):
    with pytest.raises(ShapeMismatch):
        level_loss([_term(2, rng)], 3, LossWeights())
    with pytest.raises(ValidationError):
        level_loss([], 4, LossWeights())


def test_loss_presets():
    assert LossWeights.preset("all_tasks") == LossWeights(1, 1, 3, 1, 1)
    assert LossWeights.preset("detection").parts == 0.0
    assert LossWeights.preset("no_visibility").vis == 0.0
    assert LossWeights.preset("all_tasks_parts1").parts == 1.0
    with pytest.raises(ValidationError):
        LossWeights.preset("everything")
    with pytest.raises(ValidationError):
        LossWeights(cls=-1.0)


def test_grad_check_single_losses(rng):
    def smooth_fn(x):
        value, grad = smooth_l1(x)
        return value, {"x": np.atleast_1d(grad)}

    assert grad_check(smooth_fn, {"x": np.array([0.3])}) < 1e-6

    def softmax_fn(logits):
        value, grad = softmax_log_loss(logits, 1)
        return value, {"logits": grad}

    assert grad_check(softmax_fn, {"logits": rng.normal(size=5)}) < 1e-6
    target = rng.normal(size=(N_PARTS, 2))

    def parts_fn(parts):
        return part_loss(parts, target, 1, 3.0)

    assert grad_check(parts_fn, {"parts": target + rng.uniform(0.01, 0.9, size=(N_PARTS, 2))}) < 1e-5


def test_gating_zeroes_background_gradients(rng):
    assert gating_holds(LossWeights(), 4, rng)


def test_gradient_suite_passes():
    report = run_gradient_suite(seed=3, n_points=5)
    assert report.passed
    assert set(report.errors) == {"smooth_l1", "softmax_log_loss", "detection_loss", "part_loss",
                                  "visibility_loss", "template_loss"}
    assert report.to_dict()["passed"] is True
