"""
Seeded synthetic street scenes and the ideal detection records they imply.
"""
import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from geometry.boxes import Box2D, Box3D, ScoredBox, iou
from geometry.camera import CameraIntrinsics, Pose, project_camera_points
from models.shape_bank import ShapeBank
from services.annotation_service import Scene, VehicleGT, WeakAnnotation, projected_box
from services.inference_service import NMS_THRESHOLD, DetectionRecord
from training.codec import encode_template_similarity, one_hot_visibility
from utils.errors import DegenerateDepth, ValidationError

logger = logging.getLogger(__name__)

MAX_PLACEMENT_ATTEMPTS = 1000

# KITTI color camera: 1242x375 image, P2 focal and principal point
KITTI_CAMERA = CameraIntrinsics(fx=721.5377, fy=721.5377, cx=609.5593, cy=172.854, img_w=1242, img_h=375)


@dataclass(frozen=True)
class SceneSpec:
    """
    Sampling ranges for one synthetic scene.

    Vehicles stand on a flat ground plane `camera_height` meters below the
    camera; depth, lateral offset and yaw are uniform over their ranges.
    """
    seed: int = 0
    n_vehicles: int = 5
    depth_range: Tuple[float, float] = (5.0, 50.0)
    lateral_range: Tuple[float, float] = (-10.0, 10.0)
    yaw_range: Tuple[float, float] = (-math.pi, math.pi)
    camera_height: float = 1.65

    def __post_init__(self):
        if self.n_vehicles < 0:
            raise ValidationError(f"n_vehicles must be >= 0, got {self.n_vehicles}")
        for name in ("depth_range", "lateral_range", "yaw_range"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValidationError(f"{name} must be a nonempty interval, got ({lo}, {hi})")
        if self.depth_range[0] <= 0:
            raise ValidationError(f"depth range must start in front of the camera, got {self.depth_range}")


def _sample_box(rng: np.random.Generator, spec: SceneSpec, bank: ShapeBank) -> Tuple[int, Box3D]:
    index = int(rng.integers(len(bank)))
    template = bank[index].template
    z = rng.uniform(*spec.depth_range)
    x = rng.uniform(*spec.lateral_range)
    yaw = rng.uniform(*spec.yaw_range)
    center = (x, spec.camera_height - template.h / 2, z)
    return index, Box3D(center=center, yaw=yaw, template=template)


def generate_scene(spec: SceneSpec, bank: ShapeBank, camera: CameraIntrinsics = KITTI_CAMERA) -> Scene:
    """
    Sample a scene of non-interpenetrating vehicles.

    Each vehicle draws a bank model uniformly and takes that model's
    template. Candidates whose centroid projects outside the image, that
    overlap an already placed 3D box, or whose projected mesh box has IoU
    above NMS_THRESHOLD with a placed one are rejected. After
    MAX_PLACEMENT_ATTEMPTS attempts in total the scene keeps the vehicles placed so far.

    Args:
        spec: Sampling ranges and seed
        bank: Shape bank models are drawn from
        camera: Scene camera

    Returns:
        Scene with explicit model assignments
    """
    if len(bank) == 0:
        raise ValidationError("empty bank")
    rng = np.random.default_rng(spec.seed)
    boxes: List[Box3D] = []
    footprints: List[Box2D] = []
    indices: List[int] = []
    attempts = 0
    while len(boxes) < spec.n_vehicles:
        if attempts >= MAX_PLACEMENT_ATTEMPTS:
            logger.warning(f"Placed {len(boxes)} of {spec.n_vehicles} vehicles after {attempts} attempts "
                           f"(seed {spec.seed})")
            break
        attempts += 1
        index, box = _sample_box(rng, spec, bank)
        if not camera.in_image(project_camera_points(camera, np.array([box.center])))[0]:
            continue
        if any(box.overlaps(other) for other in boxes):
            continue
        vertices = Pose(box.yaw, box.center).transform(bank[index].scaled_mesh_vertices(box.template))
        try:
            footprint = projected_box(vertices, camera)
        except DegenerateDepth:
            continue
        if any(iou(footprint, other) > NMS_THRESHOLD for other in footprints):
            continue
        boxes.append(box)
        footprints.append(footprint)
        indices.append(index)
    weaks = [WeakAnnotation(box3d=b) for b in boxes]
    logger.debug(f"Scene seed {spec.seed}: {len(boxes)} vehicles in {attempts} attempts")
    return Scene(camera, weaks, bank, model_indices=indices)


def generate_scenes(spec: SceneSpec, bank: ShapeBank, n_images: int,
                    camera: CameraIntrinsics = KITTI_CAMERA) -> Dict[str, Scene]:
    """
    Independent scenes keyed by zero-padded image id.

    Per-image seeds are spawned from spec.seed, so scene k does not depend
    on n_images.
    """
    children = np.random.SeedSequence(spec.seed).spawn(n_images)
    scenes = {}
    for k, child in enumerate(children):
        child_seed = int(child.generate_state(1)[0])
        scenes[f"{k:06d}"] = generate_scene(dataclasses.replace(spec, seed=child_seed), bank, camera)
    logger.info(f"Generated {n_images} scenes with {sum(len(s) for s in scenes.values())} vehicles")
    return scenes


def gt_to_records(gts: Sequence[VehicleGT], bank: ShapeBank, image_id: str = "0") -> List[DetectionRecord]:
    """
    Ideal network outputs for ground-truth vehicles.

    Score 1, parts equal to the GT parts, one-hot GT visibility and the
    encoded template similarity of the GT template.
    """
    records = []
    for gt in gts:
        records.append(DetectionRecord(
            box=ScoredBox(gt.B, 1.0),
            parts2d=gt.S.copy(),
            vis_scores=one_hot_visibility(gt.V),
            template_sim=encode_template_similarity(gt.template, bank),
            image_id=image_id,
        ))
    return records


def scene_weaks(scene: Scene) -> Tuple[List[WeakAnnotation], List[str]]:
    """Weak boxes of a scene with their assigned model ids."""
    weaks = [v.weak for v in scene.vehicles]
    ids = [scene.bank[v.model_index].id for v in scene.vehicles]
    return weaks, ids


def model_indices_from_ids(bank: ShapeBank, ids: Sequence[Optional[str]]) -> List[Optional[int]]:
    return [bank.index_of(i) if i is not None else None for i in ids]
