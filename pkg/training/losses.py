"""
Multi-task loss functions with analytic gradients.

Each loss returns (value, grads) where grads maps the name of every
prediction argument to d(value)/d(prediction). Sums run over coordinates
and parts within a proposal and over proposals; weights apply per term.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp, softmax

from utils.errors import IndexOutOfRange, ShapeMismatch, ValidationError
from .codec import N_VISIBILITY_CLASSES, ProposalLabel

logger = logging.getLogger(__name__)

Grads = Dict[str, np.ndarray]


@dataclass(frozen=True)
class LossWeights:
    cls: float = 1.0
    reg: float = 1.0
    parts: float = 3.0
    vis: float = 1.0
    temp: float = 1.0

    def __post_init__(self):
        for name in ("cls", "reg", "parts", "vis", "temp"):
            if getattr(self, name) < 0:
                raise ValidationError(f"loss weight '{name}' must be >= 0, got {getattr(self, name)}")

    @classmethod
    def preset(cls, name: str) -> "LossWeights":
        """Task combinations: detection, no_visibility, all_tasks_parts1, all_tasks."""
        presets = {
            "detection": cls(parts=0.0, vis=0.0, temp=0.0),
            "no_visibility": cls(parts=3.0, vis=0.0),
            "all_tasks_parts1": cls(parts=1.0),
            "all_tasks": cls(),
        }
        if name not in presets:
            raise ValidationError(f"unknown loss preset '{name}' (choose from {sorted(presets)})")
        return presets[name]

    @classmethod
    def zeros(cls) -> "LossWeights":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)


def smooth_l1(x) -> Tuple:
    """
    Robust L1: 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise, summed over elements.

    Returns:
        (value, gradient) with the gradient shaped like x
    """
    arr = np.asarray(x, dtype=float)
    small = np.abs(arr) < 1.0
    values = np.where(small, 0.5 * arr * arr, np.abs(arr) - 0.5)
    grad = np.where(small, arr, np.sign(arr))
    if arr.ndim == 0:
        return float(values), float(grad)
    return float(values.sum()), grad


def softmax_log_loss(logits, cls: int) -> Tuple[float, np.ndarray]:
    """Negative log softmax probability of `cls`; gradient is softmax - one_hot."""
    z = np.asarray(logits, dtype=float).reshape(-1)
    if z.size < 2:
        raise ShapeMismatch(f"softmax needs at least 2 logits, got {z.size}")
    if not 0 <= int(cls) < z.size:
        raise IndexOutOfRange(f"class {cls} outside [0, {z.size})")
    value = float(logsumexp(z) - z[int(cls)])
    grad = softmax(z)
    grad[int(cls)] -= 1.0
    return value, grad


def _as_vector(values, size: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size != size:
        raise ShapeMismatch(f"{name} has {arr.size} values, expected {size}")
    return arr


def detection_loss(pred_class_logits, pred_deltas, label: ProposalLabel, target_deltas,
                   weights: LossWeights) -> Tuple[float, Grads]:
    """lambda_cls * P(logits, C) + lambda_reg * C * R(deltas - targets)."""
    logits = _as_vector(pred_class_logits, 2, "class logits")
    deltas = _as_vector(pred_deltas, 4, "predicted deltas")
    targets = _as_vector(target_deltas, 4, "target deltas")
    cls_value, cls_grad = softmax_log_loss(logits, label.C)
    value = weights.cls * cls_value
    grad_logits = weights.cls * cls_grad
    grad_deltas = np.zeros(4)
    if label.C == 1:
        reg_value, reg_grad = smooth_l1(deltas - targets)
        value += weights.reg * reg_value
        grad_deltas = weights.reg * reg_grad
    return value, {"logits": grad_logits, "deltas": grad_deltas}


def part_loss(pred_norm_parts, target_norm_parts, C: int, lam_parts: float) -> Tuple[float, Grads]:
    """lambda_parts * C * R over the 2N normalized part coordinates."""
    pred = np.asarray(pred_norm_parts, dtype=float)
    target = np.asarray(target_norm_parts, dtype=float)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"predicted parts {pred.shape} vs targets {target.shape}")
    if C == 0:
        return 0.0, {"parts": np.zeros_like(pred)}
    value, grad = smooth_l1(pred - target)
    return lam_parts * value, {"parts": lam_parts * np.asarray(grad).reshape(pred.shape)}


def visibility_loss(pred_vis_logits, target, C: int, lam_vis: float) -> Tuple[float, Grads]:
    """lambda_vis * C * sum over parts of 4-way softmax log loss."""
    logits = np.asarray(pred_vis_logits, dtype=float)
    labels = np.asarray(target, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or logits.shape != (labels.size, N_VISIBILITY_CLASSES):
        raise ShapeMismatch(f"visibility logits {logits.shape} vs {labels.size} targets")
    if C == 0:
        return 0.0, {"logits": np.zeros_like(logits)}
    if labels.size and (labels.min() < 0 or labels.max() >= N_VISIBILITY_CLASSES):
        raise IndexOutOfRange(f"visibility label outside [0, {N_VISIBILITY_CLASSES})")
    log_norm = logsumexp(logits, axis=1)
    value = float(np.sum(log_norm - logits[np.arange(labels.size), labels]))
    grad = softmax(logits, axis=1)
    grad[np.arange(labels.size), labels] -= 1.0
    return lam_vis * value, {"logits": lam_vis * grad}


def template_loss(pred_T, target_T, C: int, lam_temp: float) -> Tuple[float, Grads]:
    """lambda_temp * C * R over the (M, 3) log template similarity."""
    pred = np.asarray(pred_T, dtype=float)
    target = np.asarray(target_T, dtype=float)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"predicted similarity {pred.shape} vs targets {target.shape}")
    if C == 0:
        return 0.0, {"template": np.zeros_like(pred)}
    value, grad = smooth_l1(pred - target)
    return lam_temp * value, {"template": lam_temp * np.asarray(grad).reshape(pred.shape)}


@dataclass
class ProposalTerms:
    """Predictions and targets of one proposal at one refinement level."""
    label: ProposalLabel
    class_logits: np.ndarray
    pred_deltas: np.ndarray
    target_deltas: np.ndarray
    pred_parts: Optional[np.ndarray] = None
    target_parts: Optional[np.ndarray] = None
    vis_logits: Optional[np.ndarray] = None
    target_vis: Optional[np.ndarray] = None
    pred_template: Optional[np.ndarray] = None
    target_template: Optional[np.ndarray] = None


def _require(term: ProposalTerms, fields: Sequence[str], level: int, index: int):
    missing = [f for f in fields if getattr(term, f) is None]
    if missing:
        raise ShapeMismatch(f"level {level} proposal {index} lacks {', '.join(missing)}")


def level_loss(terms: Sequence[ProposalTerms], level: int, weights: LossWeights) -> float:
    """
    Loss of one refinement level.

    Level 1 is the proposal-network loss (detection loss over anchors), level 2
    adds part localization, level 3 adds visibility and template similarity.
    """
    if level not in (1, 2, 3):
        raise ValidationError(f"refinement level must be 1, 2 or 3, got {level}")
    total = 0.0
    for i, term in enumerate(terms):
        value, _ = detection_loss(term.class_logits, term.pred_deltas, term.label, term.target_deltas, weights)
        total += value
        C = term.label.C
        if level >= 2:
            # background proposals may omit part targets
            if C == 1:
                _require(term, ("pred_parts", "target_parts"), level, i)
                total += part_loss(term.pred_parts, term.target_parts, C, weights.parts)[0]
        if level == 3 and C == 1:
            _require(term, ("vis_logits", "target_vis", "pred_template", "target_template"), level, i)
            total += visibility_loss(term.vis_logits, term.target_vis, C, weights.vis)[0]
            total += template_loss(term.pred_template, term.target_template, C, weights.temp)[0]
    return total


def total_loss(level1: Sequence[ProposalTerms], level2: Sequence[ProposalTerms],
               level3: Sequence[ProposalTerms], weights: LossWeights) -> float:
    """L = L1 + L2 + L3 summed over the proposals of each level."""
    values = [level_loss(terms, lvl, weights) for lvl, terms in ((1, level1), (2, level2), (3, level3))]
    logger.debug(f"Level losses: {values}")
    return float(sum(values))
