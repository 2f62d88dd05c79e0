"""
KITTI object-detection label and calibration files.

Label lines carry 15 fields (16 with a detection score):
type, truncation, occlusion, alpha, 2D box corners (x1 y1 x2 y2),
dimensions (h w l), location (x y z) and rotation_y. The label location is
the bottom-face center of the 3D box; it is converted to the centroid at
ingestion (y - h/2, camera y points down) and back on write-out.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from evaluation.report import EvalObject, ImageGT
from geometry.boxes import Box2D, Box3D, Template3D
from geometry.camera import CameraIntrinsics
from services.annotation_service import WeakAnnotation
from utils.errors import MissingCalib, ParseError, ValidationError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

VEHICLE_CLASSES = ("Car", "Van", "Truck")
DONTCARE = "DontCare"
KITTI_IMAGE_SIZE = (1242, 375)
LABEL_FIELDS = 15

_DONTCARE_FORMAT = "DontCare -1 -1 -10 {:.2f} {:.2f} {:.2f} {:.2f} -1 -1 -1 -1000 -1000 -1000 -10"


@dataclass(frozen=True)
class KittiObject:
    """One label line; box3d is None for DontCare regions."""
    type: str
    truncation: float
    occlusion: int
    alpha: float
    box2d: Box2D
    box3d: Optional[Box3D] = None
    score: Optional[float] = None

    @property
    def is_dontcare(self) -> bool:
        return self.type == DONTCARE

    @property
    def location(self) -> np.ndarray:
        """Bottom-center location as written in label files."""
        return self.box3d.bottom_center()

    def to_weak(self) -> WeakAnnotation:
        return WeakAnnotation(box3d=self.box3d, truncation=self.truncation, occlusion=self.occlusion,
                              box2d=self.box2d)

    def to_eval_object(self) -> EvalObject:
        return EvalObject(box=self.box2d, yaw=self.box3d.yaw, center=self.box3d.center,
                          truncation=self.truncation, occlusion=self.occlusion)


@dataclass
class KittiFrame:
    """Parsed label file (every line, in file order) plus the camera from calib."""
    objects: List[KittiObject] = field(default_factory=list)
    camera: Optional[CameraIntrinsics] = None

    def vehicles(self, classes: Sequence[str] = VEHICLE_CLASSES) -> List[KittiObject]:
        return [o for o in self.objects if o.type in classes]

    def dontcare_boxes(self) -> List[Box2D]:
        return [o.box2d for o in self.objects if o.is_dontcare]

    def weak_annotations(self, classes: Sequence[str] = VEHICLE_CLASSES) -> List[WeakAnnotation]:
        return [o.to_weak() for o in self.vehicles(classes)]

    def to_image_gt(self, classes: Sequence[str] = VEHICLE_CLASSES) -> ImageGT:
        return ImageGT(objects=[o.to_eval_object() for o in self.vehicles(classes)],
                       dontcare=self.dontcare_boxes())


def parse_label_line(line: str, lineno: Optional[int] = None, path: Optional[str] = None) -> KittiObject:
    """
    Parse one label line.

    Raises:
        ParseError: wrong field count, non-numeric field or invalid box
    """
    fields = line.split()
    if len(fields) not in (LABEL_FIELDS, LABEL_FIELDS + 1):
        raise ParseError(f"expected {LABEL_FIELDS} or {LABEL_FIELDS + 1} fields, got {len(fields)}",
                         line=lineno, path=path)
    try:
        values = [float(v) for v in fields[1:]]
        occlusion = int(fields[2])
        kind = fields[0]
        trunc, _, alpha, x1, y1, x2, y2, h, w, l, x, y, z, ry = values[:14]
        score = values[14] if len(values) == 15 else None
        box2d = Box2D.from_corners(x1, y1, x2, y2)
        box3d = None
        if kind != DONTCARE:
            template = Template3D(w=w, h=h, l=l)
            box3d = Box3D(center=(x, y - h / 2, z), yaw=ry, template=template)
    except (ValueError, ValidationError) as e:
        raise ParseError(str(e), line=lineno, path=path) from e
    return KittiObject(type=kind, truncation=trunc, occlusion=occlusion, alpha=alpha, box2d=box2d,
                       box3d=box3d, score=score)


def parse_label_text(text: str, keep_all: bool = False, path: Optional[str] = None) -> List[KittiObject]:
    """
    Parse a label file's content.

    Args:
        text: File content
        keep_all: Keep non-vehicle classes (DontCare lines are always kept)
        path: Used in error messages

    Returns:
        Objects in file order
    """
    objects = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        obj = parse_label_line(line, lineno, path)
        if keep_all or obj.is_dontcare or obj.type in VEHICLE_CLASSES:
            objects.append(obj)
    return objects


def parse_calib_text(text: str, img_w: int = KITTI_IMAGE_SIZE[0], img_h: int = KITTI_IMAGE_SIZE[1],
                     path: Optional[str] = None) -> CameraIntrinsics:
    """
    Intrinsics of the left color camera from the P2 row of a calib file.

    Raises:
        MissingCalib: no P2 row, or a P2 row without 12 numbers
    """
    for lineno, line in enumerate(text.splitlines(), start=1):
        key, _, rest = line.partition(":")
        if key.strip() != "P2":
            continue
        try:
            P2 = np.array([float(v) for v in rest.split()])
        except ValueError as e:
            raise MissingCalib(f"P2 row is not numeric: {e}", line=lineno, path=path) from e
        if P2.size != 12:
            raise MissingCalib(f"P2 row needs 12 values, got {P2.size}", line=lineno, path=path)
        P2 = P2.reshape(3, 4)
        return CameraIntrinsics(fx=P2[0, 0], fy=P2[1, 1], cx=P2[0, 2], cy=P2[1, 2], img_w=img_w, img_h=img_h)
    raise MissingCalib("no P2 row", path=path)


def parse_kitti_labels(label_text: str, calib_text: str, img_w: int = KITTI_IMAGE_SIZE[0],
                       img_h: int = KITTI_IMAGE_SIZE[1], keep_all: bool = False) -> KittiFrame:
    return KittiFrame(objects=parse_label_text(label_text, keep_all),
                      camera=parse_calib_text(calib_text, img_w, img_h))


def load_kitti_frame(label_path: PathLike, calib_path: Optional[PathLike] = None, keep_all: bool = False,
                     img_size=KITTI_IMAGE_SIZE) -> KittiFrame:
    """Read a label file and, when given, its calib file."""
    label_path = Path(label_path)
    objects = parse_label_text(label_path.read_text(), keep_all, str(label_path))
    camera = None
    if calib_path is not None:
        camera = parse_calib_text(Path(calib_path).read_text(), img_size[0], img_size[1], str(calib_path))
    logger.info(f"Loaded {len(objects)} objects from {label_path}")
    return KittiFrame(objects=objects, camera=camera)


def load_kitti_ground_truth(label_dir: PathLike, classes: Sequence[str] = VEHICLE_CLASSES) -> Dict[str, ImageGT]:
    """ImageGT per label file of a directory, keyed by file stem."""
    label_dir = Path(label_dir)
    if label_dir.is_file():
        paths = [label_dir]
    else:
        paths = sorted(label_dir.glob("*.txt"))
    gts = {}
    for p in paths:
        gts[p.stem] = KittiFrame(objects=parse_label_text(p.read_text(), path=str(p))).to_image_gt(classes)
    logger.info(f"Loaded KITTI ground truth for {len(gts)} images from {label_dir}")
    return gts


def format_label_line(obj: KittiObject) -> str:
    """Label line of an object, inverse of parse_label_line on two-decimal files."""
    x1, y1, x2, y2 = obj.box2d.to_corners()
    if obj.is_dontcare:
        return _DONTCARE_FORMAT.format(x1, y1, x2, y2)
    t = obj.box3d.template
    x, y, z = obj.location
    line = (f"{obj.type} {obj.truncation:.2f} {obj.occlusion:d} {obj.alpha:.2f} "
            f"{x1:.2f} {y1:.2f} {x2:.2f} {y2:.2f} {t.h:.2f} {t.w:.2f} {t.l:.2f} "
            f"{x:.2f} {y:.2f} {z:.2f} {obj.box3d.yaw:.2f}")
    if obj.score is not None:
        line += f" {obj.score:.2f}"
    return line


def write_kitti_labels(path: PathLike, objects: Sequence[KittiObject]) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("".join(format_label_line(o) + "\n" for o in objects))
    logger.info(f"Wrote {len(objects)} label lines to {out}")
    return out


def observation_angle(box3d: Box3D) -> float:
    """KITTI alpha: rotation_y minus the viewing-ray azimuth of the centroid."""
    x, _, z = box3d.center
    alpha = box3d.yaw - math.atan2(x, z)
    return math.remainder(alpha, 2.0 * math.pi)


def kitti_object_from_result(box2d: Box2D, box3d: Box3D, score: float, kind: str = "Car") -> KittiObject:
    """Detection-format object (truncation and occlusion unknown, written as -1)."""
    return KittiObject(type=kind, truncation=-1.0, occlusion=-1, alpha=observation_angle(box3d),
                       box2d=box2d, box3d=box3d, score=score)
