"""Detection, orientation, localization and part-level evaluation."""
from .difficulty import Difficulty, difficulty_filter
from .metrics import (
    EvalConfig, MatchResult, alp, aos, average_precision, match_detections, part_localization_rate,
    template_accuracy, visibility_accuracy,
)
from .report import EvalDetection, EvalObject, EvalReport, ImageGT, evaluate, evaluate_all_levels

__all__ = [
    'Difficulty', 'difficulty_filter',
    'EvalConfig', 'MatchResult', 'match_detections', 'average_precision', 'aos', 'alp',
    'part_localization_rate', 'visibility_accuracy', 'template_accuracy',
    'EvalDetection', 'EvalObject', 'EvalReport', 'ImageGT', 'evaluate', 'evaluate_all_levels',
]
