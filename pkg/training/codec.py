"""
Training-target encodings: box deltas, normalized parts, visibility classes,
log template similarity.
"""
import logging
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

from geometry.boxes import Box2D, Template3D
from models.shape_bank import ShapeBank
from utils.errors import LengthMismatch, ValidationError

logger = logging.getLogger(__name__)

SIMILARITY_LOG_RANGE = 1.0


class Visibility(IntEnum):
    VISIBLE = 0
    OCCLUDED = 1
    SELF_OCCLUDED = 2
    TRUNCATED = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value) -> "Visibility":
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError as e:
                raise ValidationError(f"unknown visibility class '{value}'") from e
        return cls(int(value))


N_VISIBILITY_CLASSES = len(Visibility)


@dataclass(frozen=True)
class BoxDeltas:
    dx: float
    dy: float
    dw: float
    dh: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.dx, self.dy, self.dw, self.dh)):
            raise ValidationError(f"box deltas must be finite, got {self.as_tuple()}")

    def as_tuple(self):
        return (self.dx, self.dy, self.dw, self.dh)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple())

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "BoxDeltas":
        dx, dy, dw, dh = (float(v) for v in values)
        return cls(dx, dy, dw, dh)

    @classmethod
    def zeros(cls) -> "BoxDeltas":
        return cls(0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class ProposalLabel:
    """C = 1 for a vehicle proposal, 0 for background; gt_index names the matched GT."""
    C: int
    gt_index: Optional[int] = None

    def __post_init__(self):
        if self.C not in (0, 1):
            raise ValidationError(f"class label must be 0 or 1, got {self.C}")


def encode_box_deltas(proposal: Box2D, gt: Box2D) -> BoxDeltas:
    """Regression target of a proposal w.r.t. its ground truth (proposal-minus-gt numerators)."""
    return BoxDeltas(
        dx=(proposal.cx - gt.cx) / gt.w,
        dy=(proposal.cy - gt.cy) / gt.h,
        dw=math.log(proposal.w / gt.w),
        dh=math.log(proposal.h / gt.h),
    )


def decode_box_deltas(proposal: Box2D, deltas: BoxDeltas) -> Box2D:
    """The box gt' with encode_box_deltas(proposal, gt') == deltas."""
    w = proposal.w / math.exp(deltas.dw)
    h = proposal.h / math.exp(deltas.dh)
    return Box2D(cx=proposal.cx - deltas.dx * w, cy=proposal.cy - deltas.dy * h, w=w, h=h)


def encode_parts(parts: np.ndarray, box: Box2D) -> np.ndarray:
    """
    Normalize pixel parts relative to a box: ((u - cx) / w, (v - cy) / h).

    Parts outside the box are kept as-is (|value| > 0.5); hidden and
    truncated parts are regressed too.
    """
    parts = np.asarray(parts, dtype=float).reshape(-1, 2)
    return (parts - np.array([box.cx, box.cy])) / np.array([box.w, box.h])


def decode_parts(norm: np.ndarray, box: Box2D) -> np.ndarray:
    """Inverse of encode_parts."""
    norm = np.asarray(norm, dtype=float).reshape(-1, 2)
    return norm * np.array([box.w, box.h]) + np.array([box.cx, box.cy])


def encode_template_similarity(vehicle_template: Template3D, bank: ShapeBank) -> np.ndarray:
    """
    Log scale factors mapping every bank template onto the vehicle's.

    Returns:
        (M, 3) array; row m is log(w / w_m, h / h_m, l / l_m)
    """
    sim = np.log(vehicle_template.as_array()[None, :] / bank.templates)
    outside = np.abs(sim) > SIMILARITY_LOG_RANGE
    if outside.any():
        logger.warning(f"{int(outside.sum())} log template similarity values outside [-1, 1] for {vehicle_template}")
    return sim


def decode_template_similarity(sim: np.ndarray, bank: ShapeBank) -> np.ndarray:
    """(M, 3) templates t_m obtained by applying exp(sim_m) to each bank template."""
    sim = np.asarray(sim, dtype=float)
    if sim.shape != (len(bank), 3):
        raise LengthMismatch(f"template similarity has shape {sim.shape}, bank expects ({len(bank)}, 3)")
    return bank.templates * np.exp(sim)


def encode_visibility(labels: Sequence) -> np.ndarray:
    """Visibility labels (names, enums or ints) as an int array of class indices."""
    return np.array([int(Visibility.parse(v)) for v in labels], dtype=np.int64)


def one_hot_visibility(labels: np.ndarray) -> np.ndarray:
    """(N, 4) one-hot scores of class indices."""
    labels = np.asarray(labels, dtype=np.int64)
    scores = np.zeros((labels.shape[0], N_VISIBILITY_CLASSES))
    scores[np.arange(labels.shape[0]), labels] = 1.0
    return scores
