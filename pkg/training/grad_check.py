"""
Finite-difference verification of the analytic loss gradients.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Tuple, Union

import numpy as np

from models.parts import N_PARTS
from .codec import N_VISIBILITY_CLASSES, ProposalLabel
from .losses import (
    LossWeights, detection_loss, part_loss, smooth_l1, softmax_log_loss, template_loss, visibility_loss,
)

logger = logging.getLogger(__name__)

FD_STEP = 1e-5
DENOMINATOR_FLOOR = 1e-3
GRAD_TOLERANCE = 1e-5
KINK_MARGIN = 1e-3

LossFn = Callable[..., Tuple[float, Mapping[str, np.ndarray]]]
Inputs = Union[Mapping[str, np.ndarray], Callable[[np.random.Generator], Mapping[str, np.ndarray]]]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor) elementwise."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), DENOMINATOR_FLOOR)
    return np.abs(analytic - numeric) / denom


def grad_check(loss_fn: LossFn, inputs: Inputs, seed: int = 0, step: float = FD_STEP) -> float:
    """
    Compare analytic gradients to central finite differences.

    Args:
        loss_fn: Called as loss_fn(**inputs); returns (value, grads) with
            grads keyed by input name
        inputs: Mapping of differentiable arrays, or a callable drawing
            one from a numpy Generator
        seed: Seed of the generator handed to a callable `inputs`
        step: Finite-difference step

    Returns:
        Max relative error over every input coordinate
    """
    if callable(inputs):
        inputs = inputs(np.random.default_rng(seed))
    point = {name: np.array(value, dtype=float) for name, value in inputs.items()}
    _, grads = loss_fn(**point)
    worst = 0.0
    for name, value in point.items():
        analytic = np.asarray(grads[name], dtype=float).reshape(value.shape)
        numeric = np.zeros_like(value)
        flat, num_flat = value.reshape(-1), numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = loss_fn(**point)[0]
            flat[i] = orig - step
            f_minus = loss_fn(**point)[0]
            flat[i] = orig
            num_flat[i] = (f_plus - f_minus) / (2.0 * step)
        if value.size:
            worst = max(worst, float(relative_error(analytic, numeric).max()))
    return worst


def _away_from_kink(rng: np.random.Generator, shape, scale: float = 2.0) -> np.ndarray:
    """Residuals drawn so no coordinate sits within KINK_MARGIN of |x| = 1."""
    x = rng.uniform(-scale, scale, size=shape)
    near = np.abs(np.abs(x) - 1.0) < KINK_MARGIN
    x[near] += 4 * KINK_MARGIN * np.sign(x[near])
    return x


def _suite(weights: LossWeights, n_bank: int) -> Dict[str, Tuple[LossFn, Callable]]:
    """Loss wrappers with their random-input generators; targets ride inside the closure."""

    def smooth(rng):
        return {"x": _away_from_kink(rng, (8,))}

    def softmax_inputs(rng):
        z = rng.normal(0.0, 3.0, size=int(rng.integers(2, 6)))
        return {"logits": z}

    def make_detection(rng):
        target = rng.normal(0.0, 0.5, size=4)
        pred = target + _away_from_kink(rng, (4,))
        label = ProposalLabel(C=1, gt_index=0)
        fn = lambda logits, deltas: detection_loss(logits, deltas, label, target, weights)
        return fn, {"logits": rng.normal(0.0, 2.0, size=2), "deltas": pred}

    def make_parts(rng):
        target = rng.normal(0.0, 0.5, size=(N_PARTS, 2))
        pred = target + _away_from_kink(rng, (N_PARTS, 2))
        fn = lambda parts: part_loss(parts, target, 1, weights.parts)
        return fn, {"parts": pred}

    def make_visibility(rng):
        target = rng.integers(0, N_VISIBILITY_CLASSES, size=N_PARTS)
        fn = lambda logits: visibility_loss(logits, target, 1, weights.vis)
        return fn, {"logits": rng.normal(0.0, 2.0, size=(N_PARTS, N_VISIBILITY_CLASSES))}

    def make_template(rng):
        target = rng.uniform(-1.0, 1.0, size=(n_bank, 3))
        pred = target + _away_from_kink(rng, (n_bank, 3))
        fn = lambda template: template_loss(template, target, 1, weights.temp)
        return fn, {"template": pred}

    def smooth_fn(x):
        value, grad = smooth_l1(x)
        return value, {"x": grad}

    def softmax_fn(logits):
        value, grad = softmax_log_loss(logits, 0)
        return value, {"logits": grad}

    return {
        "smooth_l1": (smooth_fn, smooth),
        "softmax_log_loss": (softmax_fn, softmax_inputs),
        "detection_loss": (None, make_detection),
        "part_loss": (None, make_parts),
        "visibility_loss": (None, make_visibility),
        "template_loss": (None, make_template),
    }


def gating_holds(weights: LossWeights, n_bank: int, rng: np.random.Generator) -> bool:
    """True when every C = 0 loss term leaves its regression-side gradients exactly zero."""
    background = ProposalLabel(C=0)
    _, det = detection_loss(rng.normal(size=2), rng.normal(size=4), background, rng.normal(size=4), weights)
    _, parts = part_loss(rng.normal(size=(N_PARTS, 2)), rng.normal(size=(N_PARTS, 2)), 0, weights.parts)
    _, vis = visibility_loss(rng.normal(size=(N_PARTS, N_VISIBILITY_CLASSES)),
                             rng.integers(0, N_VISIBILITY_CLASSES, size=N_PARTS), 0, weights.vis)
    _, temp = template_loss(rng.normal(size=(n_bank, 3)), rng.normal(size=(n_bank, 3)), 0, weights.temp)
    return all(not np.any(g) for g in (det["deltas"], parts["parts"], vis["logits"], temp["template"]))


@dataclass
class GradCheckReport:
    seed: int
    n_points: int
    errors: Dict[str, float] = field(default_factory=dict)
    gating_ok: bool = True
    tolerance: float = GRAD_TOLERANCE
    elapsed_s: float = 0.0

    @property
    def passed(self) -> bool:
        return self.gating_ok and all(err < self.tolerance for err in self.errors.values())

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_points": self.n_points,
            "tolerance": self.tolerance,
            "errors": dict(self.errors),
            "gating_ok": self.gating_ok,
            "passed": self.passed,
            "elapsed_s": round(self.elapsed_s, 3),
        }


def run_gradient_suite(seed: int, n_points: int = 100, weights: LossWeights = LossWeights(),
                       n_bank: int = 4) -> GradCheckReport:
    """
    Check every loss at n_points random points.

    Args:
        seed: Root seed; every loss draws from its own child generator
        n_points: Random points per loss
        weights: Loss weights used by the weighted losses
        n_bank: Bank size for the template-similarity loss

    Returns:
        GradCheckReport with the max relative error per loss
    """
    start = time.perf_counter()
    report = GradCheckReport(seed=seed, n_points=n_points)
    suite = _suite(weights, n_bank)
    children = np.random.SeedSequence(seed).spawn(len(suite) + 1)
    for (name, (fn, draw)), child in zip(suite.items(), children):
        rng = np.random.default_rng(child)
        worst = 0.0
        for _ in range(n_points):
            if fn is None:
                bound_fn, point = draw(rng)
                worst = max(worst, grad_check(bound_fn, point))
            else:
                worst = max(worst, grad_check(fn, draw(rng)))
        report.errors[name] = worst
        logger.info(f"Gradient check {name}: max relative error {worst:.3e}")
    report.gating_ok = gating_holds(weights, n_bank, np.random.default_rng(children[-1]))
    report.elapsed_s = time.perf_counter() - start
    if not report.passed:
        logger.warning(f"Gradient check failed: {report.errors}, gating_ok={report.gating_ok}")
    return report
