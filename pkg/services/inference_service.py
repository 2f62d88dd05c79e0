"""
3D recovery from detection records: template selection, shape rescaling,
2D/3D matching.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from geometry.boxes import Box3D, ScoredBox, Template3D, nms
from geometry.camera import CameraIntrinsics
from models.shape_bank import ShapeBank, scale_shape_to_template
from training.codec import N_VISIBILITY_CLASSES, Visibility
from utils.errors import LengthMismatch, ShapeMismatch, Vehicle3DError
from .pose_solver import PnPOptions, solve_pose

logger = logging.getLogger(__name__)

NMS_THRESHOLD = 0.5
MAX_PROPOSALS = 200


@dataclass
class DetectionRecord:
    """Network-style output for one detection; parts are decoded pixels, similarity is log space."""
    box: ScoredBox
    parts2d: np.ndarray
    vis_scores: np.ndarray
    template_sim: np.ndarray
    image_id: str = "0"

    def __post_init__(self):
        self.parts2d = np.asarray(self.parts2d, dtype=float)
        self.vis_scores = np.asarray(self.vis_scores, dtype=float)
        self.template_sim = np.asarray(self.template_sim, dtype=float)
        n = self.parts2d.shape[0] if self.parts2d.ndim == 2 else -1
        if self.parts2d.shape != (n, 2):
            raise ShapeMismatch(f"parts2d must be (N, 2), got {self.parts2d.shape}")
        if self.vis_scores.shape != (n, N_VISIBILITY_CLASSES):
            raise ShapeMismatch(f"vis_scores must be ({n}, {N_VISIBILITY_CLASSES}), got {self.vis_scores.shape}")
        if self.template_sim.ndim != 2 or self.template_sim.shape[1] != 3:
            raise ShapeMismatch(f"template_sim must be (M, 3), got {self.template_sim.shape}")

    @property
    def score(self) -> float:
        return self.box.score

    @property
    def visibility(self) -> np.ndarray:
        """Argmax visibility class per part."""
        return np.argmax(self.vis_scores, axis=1)

    def check_against(self, bank: ShapeBank):
        if self.parts2d.shape[0] != bank.n_parts:
            raise LengthMismatch(f"record has {self.parts2d.shape[0]} parts, bank has {bank.n_parts}")
        if self.template_sim.shape[0] != len(bank):
            raise LengthMismatch(f"record has {self.template_sim.shape[0]} similarities, bank has {len(bank)} models")


@dataclass
class Recovered3D:
    box3d: Box3D
    parts3d: np.ndarray
    model_id: str
    reproj_rmse: float
    converged: bool = True


def select_template(sim: np.ndarray, bank: ShapeBank) -> Tuple[int, Template3D]:
    """
    Pick the bank model whose predicted scale factors are closest to (1, 1, 1).

    Distance is the Euclidean norm of the log scale factors; ties go to the
    lowest index.

    Returns:
        (model index c, rescaled template t_c)
    """
    sim = np.asarray(sim, dtype=float)
    if sim.shape != (len(bank), 3):
        raise LengthMismatch(f"template similarity has shape {sim.shape}, bank expects ({len(bank)}, 3)")
    c = int(np.argmin(np.linalg.norm(sim, axis=1)))
    w, h, l = bank.templates[c] * np.exp(sim[c])
    return c, Template3D(w=float(w), h=float(h), l=float(l))


def recover_3d(det: DetectionRecord, bank: ShapeBank, K: CameraIntrinsics,
               opts: PnPOptions = PnPOptions()) -> Recovered3D:
    """
    Recover the 3D box and parts of one detection.

    Args:
        det: Detection record
        bank: Shape bank the record's similarity vector refers to
        K: Camera intrinsics
        opts: Pose solver options

    Returns:
        Recovered3D whose box template is the selected rescaled template
    """
    det.check_against(bank)
    c, template = select_template(det.template_sim, bank)
    model = bank[c]
    shape = scale_shape_to_template(model.shape, model.template, template)
    visible = det.visibility == Visibility.VISIBLE
    solution = solve_pose(shape, det.parts2d, K, opts, visible=visible)
    t = solution.pose.translation
    box3d = Box3D(center=tuple(t), yaw=solution.pose.yaw, template=template)
    parts3d = shape @ solution.rotation_matrix.T + t
    return Recovered3D(box3d=box3d, parts3d=parts3d, model_id=model.id,
                       reproj_rmse=solution.reproj_rmse, converged=solution.converged)


def run_inference(records: Sequence[DetectionRecord], bank: ShapeBank, K: CameraIntrinsics,
                  nms_threshold: float = NMS_THRESHOLD, opts: PnPOptions = PnPOptions(),
                  max_proposals: Optional[int] = MAX_PROPOSALS) -> List[Tuple[DetectionRecord, Recovered3D]]:
    """
    NMS over one image's records, then 3D recovery per survivor.

    At most max_proposals records (highest scores) enter NMS. Records whose
    recovery fails are logged and dropped.

    Returns:
        (record, Recovered3D) pairs in descending score order
    """
    if not records:
        return []
    order = sorted(range(len(records)), key=lambda i: (-records[i].score, i))
    if max_proposals is not None and len(order) > max_proposals:
        logger.info(f"Capping {len(order)} records at {max_proposals} proposals")
        order = order[:max_proposals]
    candidates = [records[i] for i in order]
    keep = nms([r.box for r in candidates], nms_threshold)
    results = []
    for idx in keep:
        record = candidates[idx]
        try:
            results.append((record, recover_3d(record, bank, K, opts)))
        except Vehicle3DError as e:
            logger.warning(f"Recovery failed for record {order[idx]} (score {record.score:.3f}): {e}")
    logger.info(f"Recovered {len(results)} vehicles from {len(records)} records ({len(keep)} after NMS)")
    return results


@dataclass
class InferenceStats:
    n_records: int = 0
    n_images: int = 0
    n_recovered: int = 0
    latencies_ms: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, float]:
        lat = np.asarray(self.latencies_ms) if self.latencies_ms else np.zeros(1)
        return {
            "n_records": self.n_records,
            "n_images": self.n_images,
            "n_recovered": self.n_recovered,
            "median_latency_ms": float(np.median(lat)),
        }


class InferenceService:
    """Runs per-image inference over record batches with fixed bank, camera and options."""

    def __init__(self, bank: ShapeBank, camera: CameraIntrinsics, opts: PnPOptions = PnPOptions(),
                 nms_threshold: float = NMS_THRESHOLD, max_proposals: Optional[int] = MAX_PROPOSALS):
        self.bank = bank
        self.camera = camera
        self.opts = opts
        self.nms_threshold = nms_threshold
        self.max_proposals = max_proposals
        self.stats = InferenceStats()

    def run(self, records: Sequence[DetectionRecord]) -> Dict[str, List[Tuple[DetectionRecord, Recovered3D]]]:
        """Group records by image id and run inference on each image, in sorted image order."""
        by_image: Dict[str, List[DetectionRecord]] = {}
        for record in records:
            by_image.setdefault(record.image_id, []).append(record)
        outputs = {}
        for image_id in sorted(by_image):
            batch = by_image[image_id]
            start = time.perf_counter()
            results = run_inference(batch, self.bank, self.camera, self.nms_threshold, self.opts,
                                    self.max_proposals)
            elapsed = (time.perf_counter() - start) * 1000.0
            if results:
                self.stats.latencies_ms.append(elapsed / len(results))
            outputs[image_id] = results
            self.stats.n_records += len(batch)
            self.stats.n_recovered += len(results)
        self.stats.n_images += len(by_image)
        return outputs
