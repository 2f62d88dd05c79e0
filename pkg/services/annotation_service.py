"""
Semi-automatic ground-truth generation from weak 3D box annotations.

For every weakly annotated vehicle the closest bank model (by template
dimensions) is rescaled to the box, placed in the camera frame and its parts
projected. Part visibility comes from casting rays against the placed
visibility meshes of every vehicle in the scene.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from geometry.boxes import Box2D, Box3D, Template3D
from geometry.camera import MIN_DEPTH, CameraIntrinsics, Pose, project_camera_points
from geometry.raycast import DepthBuffer, nearest_blocker, rasterize_depth, ray_triangle_distances
from models.shape_bank import ShapeBank, template_distance
from training.codec import Visibility
from utils.errors import DegenerateDepth, IndexOutOfRange, ShapeMismatch, ValidationError

logger = logging.getLogger(__name__)

BLOCKER_EPSILON = 0.01
ZBUFFER_SCALE = 4
ZBUFFER_RADIUS = 1


@dataclass(frozen=True)
class WeakAnnotation:
    """Dataset-provided 3D box with optional KITTI-style metadata."""
    box3d: Box3D
    truncation: Optional[float] = None
    occlusion: Optional[int] = None
    box2d: Optional[Box2D] = None


@dataclass
class VehicleGT:
    """Full 2D/3D vehicle description: box, 3D box, parts, 3D parts, visibility."""
    B: Box2D
    B3d: Box3D
    S: np.ndarray
    S3d: np.ndarray
    V: np.ndarray
    template: Template3D
    model_id: str
    truncation: float = 0.0
    occlusion: int = 0

    def __post_init__(self):
        n = self.S.shape[0]
        if self.S.shape != (n, 2) or self.S3d.shape != (n, 3) or self.V.shape != (n,):
            raise ShapeMismatch(f"inconsistent part arrays S{self.S.shape} S3d{self.S3d.shape} V{self.V.shape}")

    @property
    def n_parts(self) -> int:
        return self.S.shape[0]


@dataclass
class SceneVehicle:
    weak: WeakAnnotation
    model_index: int


class Scene:
    """
    Vehicles placed in one camera's frame with their visibility meshes.

    Placed meshes are cached as one triangle soup; `owner` maps each triangle
    to its vehicle and `labels` to its 1-based part label.
    """

    def __init__(self, camera: CameraIntrinsics, weaks: Sequence[WeakAnnotation], bank: ShapeBank,
                 model_indices: Optional[Sequence[Optional[int]]] = None):
        self.camera = camera
        self.bank = bank
        if model_indices is not None and len(model_indices) != len(weaks):
            raise ShapeMismatch(f"{len(model_indices)} model indices for {len(weaks)} vehicles")
        self.vehicles: List[SceneVehicle] = []
        for i, weak in enumerate(weaks):
            idx = model_indices[i] if model_indices is not None and model_indices[i] is not None \
                else select_model(weak, bank)
            if not 0 <= idx < len(bank):
                raise IndexOutOfRange(f"model index {idx} outside bank of {len(bank)}")
            self.vehicles.append(SceneVehicle(weak=weak, model_index=int(idx)))
        self._place_meshes()
        self._depth_buffer: Optional[DepthBuffer] = None

    def __len__(self) -> int:
        return len(self.vehicles)

    def pose_of(self, index: int) -> Pose:
        box = self.vehicles[index].weak.box3d
        return Pose(box.yaw, box.center)

    def model_of(self, index: int):
        return self.bank[self.vehicles[index].model_index]

    def placed_parts(self, index: int) -> np.ndarray:
        """(N, 3) camera-frame parts of the rescaled, posed model."""
        template = self.vehicles[index].weak.box3d.template
        return self.pose_of(index).transform(self.model_of(index).scaled_shape(template))

    def placed_vertices(self, index: int) -> np.ndarray:
        template = self.vehicles[index].weak.box3d.template
        return self.pose_of(index).transform(self.model_of(index).scaled_mesh_vertices(template))

    def _place_meshes(self):
        tris, owner, labels = [], [], []
        for i in range(len(self.vehicles)):
            mesh = self.model_of(i).mesh
            tris.append(mesh.triangles(self.placed_vertices(i)))
            owner.append(np.full(mesh.faces.shape[0], i, dtype=np.int64))
            labels.append(mesh.labels)
        self.triangles = np.concatenate(tris) if tris else np.zeros((0, 3, 3))
        self.owner = np.concatenate(owner) if owner else np.zeros(0, dtype=np.int64)
        self.labels = np.concatenate(labels) if labels else np.zeros(0, dtype=np.int64)
        if not np.all(np.isfinite(self.triangles)):
            raise ValidationError("placed meshes contain non-finite vertices")

    def depth_buffer(self, scale: int = ZBUFFER_SCALE) -> DepthBuffer:
        """Supersampled z-buffer of every placed mesh (cached for the default scale)."""
        if scale != ZBUFFER_SCALE:
            return rasterize_depth(self.camera.scaled(scale), self.triangles)
        if self._depth_buffer is None:
            self._depth_buffer = rasterize_depth(self.camera.scaled(scale), self.triangles)
        return self._depth_buffer


def select_model(weak: WeakAnnotation, bank: ShapeBank) -> int:
    """Index of the bank model whose template is nearest to the weak box dims (ties: lowest index)."""
    if len(bank) == 0:
        raise ValidationError("empty bank")
    target = weak.box3d.template
    distances = [template_distance(target, m.template) for m in bank]
    return int(np.argmin(distances))


def compute_part_visibility(scene: Scene, vehicle_index: int, parts_cam: np.ndarray, K: CameraIntrinsics,
                            epsilon: float = BLOCKER_EPSILON) -> np.ndarray:
    """
    Classify each part by ray casting against every placed mesh.

    Truncation (projection outside the image) takes precedence. Otherwise the
    nearest triangle hit closer than (part distance - epsilon) decides:
    none -> visible, another vehicle -> occluded, same vehicle -> self-occluded
    unless that face carries the part's own label.

    Returns:
        (N,) int array of Visibility values
    """
    pts = np.asarray(parts_cam, dtype=float).reshape(-1, 3)
    uv = project_camera_points(K, pts)
    inside = K.in_image(uv)
    labels = np.full(pts.shape[0], int(Visibility.TRUNCATED), dtype=np.int64)
    for k in np.flatnonzero(inside):
        idx, _ = nearest_blocker(pts[k], scene.triangles, epsilon)
        if idx < 0:
            labels[k] = Visibility.VISIBLE
        elif scene.owner[idx] != vehicle_index:
            labels[k] = Visibility.OCCLUDED
        elif scene.labels[idx] == k + 1:
            labels[k] = Visibility.VISIBLE
        else:
            labels[k] = Visibility.SELF_OCCLUDED
    return labels


def classify_visibility_zbuffer(scene: Scene, vehicle_index: int, parts_cam: np.ndarray,
                                epsilon: float = BLOCKER_EPSILON, scale: int = ZBUFFER_SCALE,
                                radius: int = ZBUFFER_RADIUS) -> np.ndarray:
    """
    Visibility from a supersampled z-buffer instead of casting against every mesh.

    The buffer names the triangles drawn around the part's projection
    (`radius` buffer pixels each way). Each is intersected with the part's
    viewing ray; the nearest hit closer than (part distance - epsilon)
    decides with the same owner and label rules as ray casting.
    """
    K = scene.camera
    pts = np.asarray(parts_cam, dtype=float).reshape(-1, 3)
    uv = project_camera_points(K, pts)
    inside = K.in_image(uv)
    buffer = scene.depth_buffer(scale)
    labels = np.full(pts.shape[0], int(Visibility.TRUNCATED), dtype=np.int64)
    for k in np.flatnonzero(inside):
        candidates = buffer.candidates(uv[k] * scale, radius)
        distance = float(np.linalg.norm(pts[k]))
        hits = ray_triangle_distances(np.zeros(3), pts[k] / distance, scene.triangles[candidates])
        hits = np.where(hits < distance - epsilon, hits, np.inf)
        if hits.size == 0 or not np.isfinite(hits.min()):
            labels[k] = Visibility.VISIBLE
            continue
        tri = int(candidates[np.argmin(hits)])
        if scene.owner[tri] != vehicle_index:
            labels[k] = Visibility.OCCLUDED
        elif scene.labels[tri] == k + 1:
            labels[k] = Visibility.VISIBLE
        else:
            labels[k] = Visibility.SELF_OCCLUDED
    return labels


def projected_box(vertices_cam: np.ndarray, K: CameraIntrinsics) -> Box2D:
    """Axis-aligned bounds of projected vertices clipped to the image (1 px minimum)."""
    uv = project_camera_points(K, vertices_cam)
    raw = Box2D.from_corners(uv[:, 0].min(), uv[:, 1].min(), max(uv[:, 0].max(), uv[:, 0].min() + 1e-9),
                             max(uv[:, 1].max(), uv[:, 1].min() + 1e-9))
    return raw.clip(K.img_w, K.img_h, min_size=1.0)


def _truncation_fraction(vertices_cam: np.ndarray, K: CameraIntrinsics) -> float:
    uv = project_camera_points(K, vertices_cam)
    w = uv[:, 0].max() - uv[:, 0].min()
    h = uv[:, 1].max() - uv[:, 1].min()
    if w <= 0 or h <= 0:
        return 0.0
    iw = max(0.0, min(uv[:, 0].max(), K.img_w) - max(uv[:, 0].min(), 0.0))
    ih = max(0.0, min(uv[:, 1].max(), K.img_h) - max(uv[:, 1].min(), 0.0))
    return float(1.0 - (iw * ih) / (w * h))


def _occlusion_level(V: np.ndarray) -> int:
    """0 fully visible, 1 partly occluded, 2 largely occluded (occluded share of in-image parts)."""
    in_image = V != Visibility.TRUNCATED
    if not in_image.any():
        return 2
    share = float(np.mean(V[in_image] == Visibility.OCCLUDED))
    if share == 0.0:
        return 0
    return 1 if share < 0.5 else 2


def generate_ground_truth(scene: Scene, bank: ShapeBank, use_dataset_box: bool = False,
                          epsilon: float = BLOCKER_EPSILON) -> List[VehicleGT]:
    """
    Build VehicleGT for every vehicle of a scene.

    Args:
        scene: Placed vehicles and camera
        bank: Shape bank (supplies parts and templates)
        use_dataset_box: Take B from the weak annotation's 2D box when present
            instead of the projected mesh bounds
        epsilon: Blocker margin in meters

    Returns:
        One VehicleGT per vehicle in front of the camera, in scene order
    """
    K = scene.camera
    results: List[VehicleGT] = []
    for i, vehicle in enumerate(scene.vehicles):
        weak = vehicle.weak
        model = bank[vehicle.model_index]
        try:
            parts_cam = scene.placed_parts(i)
            S = project_camera_points(K, parts_cam)
            V = compute_part_visibility(scene, i, parts_cam, K, epsilon)
            vertices = scene.placed_vertices(i)
            if use_dataset_box and weak.box2d is not None:
                B = weak.box2d
            else:
                B = projected_box(vertices, K)
            truncation = weak.truncation if weak.truncation is not None else _truncation_fraction(vertices, K)
        except DegenerateDepth as e:
            logger.warning(f"Skipping vehicle {i} ({model.id}): {e}")
            continue
        occlusion = weak.occlusion if weak.occlusion is not None else _occlusion_level(V)
        results.append(VehicleGT(
            B=B, B3d=weak.box3d, S=S, S3d=parts_cam, V=V, template=weak.box3d.template,
            model_id=model.id, truncation=truncation, occlusion=occlusion,
        ))
    logger.info(f"Generated ground truth for {len(results)} of {len(scene)} vehicles")
    return results


class AnnotationService:
    """Annotates weak 3D boxes with bank models, parts and visibility."""

    def __init__(self, bank: ShapeBank, camera: CameraIntrinsics, use_dataset_box: bool = False,
                 epsilon: float = BLOCKER_EPSILON):
        self.bank = bank
        self.camera = camera
        self.use_dataset_box = use_dataset_box
        self.epsilon = epsilon

    def build_scene(self, weaks: Sequence[WeakAnnotation]) -> Scene:
        in_front = [w for w in weaks if w.box3d.center[2] > MIN_DEPTH]
        if len(in_front) < len(weaks):
            logger.warning(f"Dropping {len(weaks) - len(in_front)} boxes centered behind the camera")
        return Scene(self.camera, in_front, self.bank)

    def annotate(self, weaks: Sequence[WeakAnnotation]) -> List[VehicleGT]:
        return generate_ground_truth(self.build_scene(weaks), self.bank, self.use_dataset_box, self.epsilon)

    def annotate_scene(self, scene: Scene) -> List[VehicleGT]:
        return generate_ground_truth(scene, self.bank, self.use_dataset_box, self.epsilon)

    def agreement_with_zbuffer(self, scene: Scene) -> float:
        """Share of parts on which ray casting and the z-buffer agree."""
        agree = total = 0
        for i in range(len(scene)):
            parts = scene.placed_parts(i)
            if np.any(parts[:, 2] <= MIN_DEPTH):
                continue
            rays = compute_part_visibility(scene, i, parts, scene.camera, self.epsilon)
            zbuf = classify_visibility_zbuffer(scene, i, parts, self.epsilon)
            agree += int(np.sum(rays == zbuf))
            total += rays.size
        return agree / total if total else 1.0
