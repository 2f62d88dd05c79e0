"""
Dataset-level evaluation: per-image matching, metric aggregation, curves and reports.
"""
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from geometry.boxes import Box2D, ScoredBox, Template3D
from utils.errors import ShapeMismatch
from .difficulty import LEVELS, difficulty_filter
from .metrics import (
    EvalConfig, MatchResult, average_precision, alp, aos, localization_weights, match_detections,
    orientation_weights, part_localization_rate, template_accuracy, visibility_accuracy, weighted_pr_curve,
    pool_detections,
)

logger = logging.getLogger(__name__)


@dataclass
class EvalDetection:
    box: ScoredBox
    yaw: float
    center: Tuple[float, float, float]
    parts2d: Optional[np.ndarray] = None
    visibility: Optional[np.ndarray] = None
    template: Optional[Template3D] = None


@dataclass
class EvalObject:
    """One ground-truth vehicle; part-level fields are None for datasets without them (KITTI)."""
    box: Box2D
    yaw: float
    center: Tuple[float, float, float]
    truncation: float = 0.0
    occlusion: int = 0
    parts2d: Optional[np.ndarray] = None
    visibility: Optional[np.ndarray] = None
    template: Optional[Template3D] = None


@dataclass
class ImageGT:
    objects: List[EvalObject] = field(default_factory=list)
    dontcare: List[Box2D] = field(default_factory=list)


def detection_from_result(record, recovered) -> EvalDetection:
    """EvalDetection of an inference output pair (DetectionRecord, Recovered3D)."""
    return EvalDetection(
        box=record.box, yaw=recovered.box3d.yaw, center=recovered.box3d.center,
        parts2d=record.parts2d, visibility=record.visibility, template=recovered.box3d.template,
    )


def object_from_vehicle_gt(gt) -> EvalObject:
    """EvalObject of an annotator VehicleGT."""
    return EvalObject(
        box=gt.B, yaw=gt.B3d.yaw, center=gt.B3d.center, truncation=gt.truncation, occlusion=gt.occlusion,
        parts2d=gt.S, visibility=gt.V, template=gt.template,
    )


@dataclass
class EvalReport:
    ap: float
    aos: float
    alp: Dict[str, float]
    part_loc: float
    vis_acc: float
    template_acc: float
    n_images: int
    n_gt: int
    n_det: int
    part_loc_by_class: Dict[int, float] = field(default_factory=dict)
    curve: List[Dict[str, float]] = field(default_factory=list)

    def to_dict(self, config: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
        """Metrics JSON document; `config` is echoed verbatim."""
        return {
            "config": dict(config or {}),
            "ap": self.ap,
            "aos": self.aos,
            "alp": dict(self.alp),
            "part_loc": self.part_loc,
            "vis_acc": self.vis_acc,
            "template_acc": self.template_acc,
            "n_images": self.n_images,
            "n_gt": self.n_gt,
            "n_det": self.n_det,
        }

    def format_text(self, title: str = "") -> str:
        lines = [title] if title else []
        lines.append(f"images {self.n_images}  gt {self.n_gt}  detections {self.n_det}")
        lines.append(f"AP            {self.ap:.4f}")
        lines.append(f"AOS           {self.aos:.4f}")
        for dist, value in self.alp.items():
            lines.append(f"ALP@{dist}m".ljust(14) + f"{value:.4f}")
        lines.append(f"part loc      {self.part_loc:.4f}")
        lines.append(f"visibility    {self.vis_acc:.4f}")
        lines.append(f"template      {self.template_acc:.4f}")
        return "\n".join(lines)


def _distance_key(d: float) -> str:
    return f"{float(d):.1f}"


def evaluate(detections: Mapping[str, Sequence[EvalDetection]], ground_truth: Mapping[str, ImageGT],
             cfg: EvalConfig = EvalConfig()) -> EvalReport:
    """
    Evaluate detections against ground truth over every image in either mapping.

    Args:
        detections: image id -> detections
        ground_truth: image id -> ImageGT
        cfg: Thresholds, interpolation and difficulty level

    Returns:
        EvalReport with curve metrics pooled over images and part-level
        metrics over matched pairs whose GT carries part annotations
    """
    image_ids = sorted(set(detections) | set(ground_truth))
    matches: List[MatchResult] = []
    det_yaws, gt_yaws, det_centers, gt_centers = [], [], [], []
    pairs: List[Tuple[EvalDetection, EvalObject]] = []
    n_det = 0
    for image_id in image_ids:
        dets = list(detections.get(image_id, ()))
        gt = ground_truth.get(image_id, ImageGT())
        objs = gt.objects
        _, ignore = difficulty_filter([o.box.h for o in objs], [o.occlusion for o in objs],
                                      [o.truncation for o in objs], cfg.level)
        m = match_detections([d.box for d in dets], [o.box for o in objs], cfg.iou_threshold, ignore, gt.dontcare)
        matches.append(m)
        det_yaws.append(np.array([d.yaw for d in dets]))
        gt_yaws.append(np.array([o.yaw for o in objs]))
        det_centers.append(np.array([d.center for d in dets]).reshape(-1, 3))
        gt_centers.append(np.array([o.center for o in objs]).reshape(-1, 3))
        pairs.extend((dets[d], objs[g]) for d, g in m.true_positives)
        n_det += len(dets)
    n_gt = sum(m.n_gt for m in matches)
    interp = cfg.interpolation

    part_pairs = [(d, o) for d, o in pairs if d.parts2d is not None and o.parts2d is not None]
    vis_pairs = [(d, o) for d, o in pairs if d.visibility is not None and o.visibility is not None]
    tpl_pairs = [(d, o) for d, o in pairs if d.template is not None and o.template is not None]
    part_loc, by_class = 0.0, {}
    if part_pairs:
        part_loc, by_class = part_localization_rate(
            [d.parts2d for d, _ in part_pairs], [o.parts2d for _, o in part_pairs], [o.box for _, o in part_pairs],
            cfg, gt_visibility=[o.visibility if o.visibility is not None else np.full(len(o.parts2d), -1)
                                for _, o in part_pairs],
            by_class=True,
        )
    report = EvalReport(
        ap=average_precision(matches, n_gt, interp),
        aos=aos(matches, det_yaws, gt_yaws, n_gt, interp),
        alp={_distance_key(d): alp(matches, det_centers, gt_centers, d, n_gt, interp) for d in cfg.alp_distances},
        part_loc=part_loc,
        vis_acc=visibility_accuracy([d.visibility for d, _ in vis_pairs], [o.visibility for _, o in vis_pairs]),
        template_acc=template_accuracy([d.template for d, _ in tpl_pairs], [o.template for _, o in tpl_pairs],
                                       cfg.template_rel_tol),
        n_images=len(image_ids), n_gt=n_gt, n_det=n_det, part_loc_by_class=by_class,
        curve=pr_curve_rows(matches, n_gt, det_yaws, gt_yaws, det_centers, gt_centers, cfg.alp_distances),
    )
    logger.info(f"Evaluated {n_det} detections against {n_gt} GTs at difficulty {cfg.difficulty}: AP {report.ap:.4f}")
    return report


def pr_curve_rows(matches: Sequence[MatchResult], n_gt: int, det_yaws, gt_yaws, det_centers, gt_centers,
                  distances: Sequence[float]) -> List[Dict[str, float]]:
    """Recall, precision, orientation similarity and localization precision per score threshold."""
    if n_gt == 0:
        return []
    scores, tp, ones = pool_detections(matches)
    base = weighted_pr_curve(scores, tp, ones, n_gt)
    _, _, w_os = pool_detections(matches, orientation_weights(matches, det_yaws, gt_yaws))
    orient = weighted_pr_curve(scores, tp, w_os, n_gt)
    loc = {}
    for d in distances:
        _, _, w_loc = pool_detections(matches, localization_weights(matches, det_centers, gt_centers, d))
        loc[d] = weighted_pr_curve(scores, tp, w_loc, n_gt)
    rows = []
    for i, point in enumerate(base):
        row = {"threshold": point.threshold, "recall": point.recall, "precision": point.precision,
               "orientation_similarity": orient[i].precision}
        for d in distances:
            row[f"localization_precision_{_distance_key(d)}m"] = loc[d][i].precision
        rows.append(row)
    return rows


def write_pr_curve_csv(path: Union[str, Path], rows: Sequence[Dict[str, float]],
                       distances: Sequence[float] = (1.0, 2.0)) -> Path:
    """Write curve rows as CSV with a header line (header only when there are no rows)."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    columns = ["threshold", "recall", "precision", "orientation_similarity"] + \
        [f"localization_precision_{_distance_key(d)}m" for d in distances]
    if rows and set(rows[0]) != set(columns):
        raise ShapeMismatch(f"curve columns {sorted(rows[0])} differ from {columns}")
    data = np.array([[row[c] for c in columns] for row in rows]).reshape(-1, len(columns))
    np.savetxt(out, data, delimiter=",", header=",".join(columns), comments="", fmt="%.10g")
    logger.info(f"Wrote {len(rows)} curve points to {out}")
    return out


def evaluate_all_levels(detections: Mapping[str, Sequence[EvalDetection]], ground_truth: Mapping[str, ImageGT],
                        cfg: EvalConfig = EvalConfig()) -> Dict[str, Any]:
    """
    Evaluate at Easy, Moderate and Hard and average the three.

    Returns:
        {"easy": EvalReport, "moderate": ..., "hard": ..., "mean": {metric: value}}
    """
    reports = {level.value: evaluate(detections, ground_truth, dataclasses.replace(cfg, difficulty=level.value))
               for level in LEVELS}
    mean: Dict[str, Any] = {}
    for name in ("ap", "aos", "part_loc", "vis_acc", "template_acc"):
        mean[name] = float(np.mean([getattr(r, name) for r in reports.values()]))
    mean["alp"] = {key: float(np.mean([r.alp[key] for r in reports.values()]))
                   for key in next(iter(reports.values())).alp}
    return {**reports, "mean": mean}
