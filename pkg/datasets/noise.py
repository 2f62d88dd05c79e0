"""
Seeded perturbation of detection records for robustness runs.
"""
import logging
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from geometry.boxes import Box2D, ScoredBox
from services.inference_service import DetectionRecord
from training.codec import N_VISIBILITY_CLASSES, one_hot_visibility
from utils.errors import ValidationError

logger = logging.getLogger(__name__)

MIN_BOX_SIZE = 1.0


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian sigmas (pixels for parts and boxes, log units for similarity) and a label flip rate."""
    part_sigma: float = 0.0
    box_sigma: float = 0.0
    template_sigma: float = 0.0
    vis_flip_prob: float = 0.0

    def __post_init__(self):
        for name in ("part_sigma", "box_sigma", "template_sigma", "vis_flip_prob"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.vis_flip_prob > 1:
            raise ValidationError(f"vis_flip_prob must lie in [0, 1], got {self.vis_flip_prob}")

    @property
    def is_zero(self) -> bool:
        return not (self.part_sigma or self.box_sigma or self.template_sigma or self.vis_flip_prob)


def perturb_record(record: DetectionRecord, noise: NoiseSpec, rng: np.random.Generator) -> DetectionRecord:
    """
    One perturbed copy of a record.

    Draw order is fixed (box, parts, similarity, flips) so a seed gives the
    same stream whatever the sigmas. Flipped parts get a label resampled
    uniformly over all four classes, which may reproduce the original.
    """
    box = record.box.box
    d_box = rng.normal(0.0, 1.0, 4) * noise.box_sigma
    d_parts = rng.normal(0.0, 1.0, record.parts2d.shape) * noise.part_sigma
    d_sim = rng.normal(0.0, 1.0, record.template_sim.shape) * noise.template_sigma
    flips = rng.random(record.parts2d.shape[0]) < noise.vis_flip_prob
    resampled = rng.integers(N_VISIBILITY_CLASSES, size=record.parts2d.shape[0])

    if noise.box_sigma > 0:
        box = Box2D(cx=box.cx + d_box[0], cy=box.cy + d_box[1],
                    w=max(box.w + d_box[2], MIN_BOX_SIZE), h=max(box.h + d_box[3], MIN_BOX_SIZE))
    vis_scores = record.vis_scores.copy()
    if flips.any():
        vis_scores[flips] = one_hot_visibility(resampled[flips])
    return DetectionRecord(
        box=ScoredBox(box, record.score),
        parts2d=record.parts2d + d_parts,
        vis_scores=vis_scores,
        template_sim=record.template_sim + d_sim,
        image_id=record.image_id,
    )


def perturb_records(records: Sequence[DetectionRecord], noise: NoiseSpec, seed: int) -> List[DetectionRecord]:
    """
    Perturb every record with additive Gaussian noise and visibility flips.

    Args:
        records: Input records (left untouched)
        noise: Noise magnitudes
        seed: RNG seed; the same seed and input give the same output

    Returns:
        New records in input order
    """
    rng = np.random.default_rng(seed)
    out = [perturb_record(r, noise, rng) for r in records]
    if not noise.is_zero:
        logger.info(f"Perturbed {len(out)} records with {noise} (seed {seed})")
    return out
