"""
KITTI difficulty levels.

Thresholds are the benchmark's published constants: a ground truth is
ignored at a level when it is too small, too occluded or too truncated.
"""
import logging
from enum import Enum
from typing import Sequence, Tuple

import numpy as np

from utils.errors import ValidationError

logger = logging.getLogger(__name__)


class Difficulty(str, Enum):
    EASY = "easy"
    MODERATE = "moderate"
    HARD = "hard"
    ALL = "all"


# level: (min 2D box height px, max occlusion level, max truncation)
THRESHOLDS = {
    Difficulty.EASY: (40.0, 0, 0.15),
    Difficulty.MODERATE: (25.0, 1, 0.30),
    Difficulty.HARD: (25.0, 2, 0.50),
}

LEVELS = (Difficulty.EASY, Difficulty.MODERATE, Difficulty.HARD)


def parse_difficulty(value) -> Difficulty:
    if isinstance(value, Difficulty):
        return value
    try:
        return Difficulty(str(value).lower())
    except ValueError as e:
        raise ValidationError(f"unknown difficulty '{value}' (easy, moderate, hard, all)") from e


def difficulty_filter(heights: Sequence[float], occlusions: Sequence[int], truncations: Sequence[float],
                      level) -> Tuple[np.ndarray, np.ndarray]:
    """
    Split ground truths into kept and ignored at a difficulty level.

    A GT is ignored when its box height is <= the minimum, its occlusion
    level exceeds the maximum or its truncation exceeds the maximum. Level
    `all` ignores nothing.

    Returns:
        (indices of kept GTs, boolean ignore mask)
    """
    level = parse_difficulty(level)
    heights = np.asarray(heights, dtype=float).reshape(-1)
    occlusions = np.asarray(occlusions, dtype=float).reshape(-1)
    truncations = np.asarray(truncations, dtype=float).reshape(-1)
    if not heights.shape == occlusions.shape == truncations.shape:
        raise ValidationError("difficulty metadata arrays differ in length")
    if level is Difficulty.ALL:
        ignore = np.zeros(heights.shape[0], dtype=bool)
    else:
        min_height, max_occ, max_trunc = THRESHOLDS[level]
        ignore = (heights <= min_height) | (occlusions > max_occ) | (truncations > max_trunc)
    return np.flatnonzero(~ignore), ignore
