"""
Line-oriented JSON files for weak boxes, ground truth, detection records and
recovered vehicles.

Every file is one JSON object per line with an optional leading
{"header": {...}} row (seed, camera, bank ids). Rows follow a strict schema:
missing or unknown keys raise ParseError with the offending line number.
"""
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np

from evaluation.report import EvalDetection, ImageGT, object_from_vehicle_gt
from geometry.boxes import Box2D, Box3D, ScoredBox, Template3D
from services.annotation_service import VehicleGT, WeakAnnotation
from services.inference_service import DetectionRecord, Recovered3D
from training.codec import N_VISIBILITY_CLASSES, Visibility, encode_visibility
from utils.errors import ParseError, ValidationError
from utils.utils import iter_jsonl, write_jsonl

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

RECORD_KEYS = {"image_id", "box", "score", "parts2d", "vis_scores", "template_sim"}
GT_KEYS = {"image_id", "model_id", "box", "box3d", "parts2d", "parts3d", "visibility", "truncation", "occlusion"}
WEAK_KEYS = {"image_id", "box3d"}
WEAK_OPTIONAL = {"truncation", "occlusion", "box2d", "model_id"}
RESULT_KEYS = {"image_id", "box", "score", "box3d", "parts2d", "parts3d", "visibility", "model_id",
               "reproj_rmse", "converged"}


def _require(obj: Any, required: Set[str], optional: Set[str] = frozenset()) -> Dict[str, Any]:
    if not isinstance(obj, dict):
        raise ValidationError(f"row must be an object, got {type(obj).__name__}")
    missing = required - set(obj)
    unknown = set(obj) - required - set(optional)
    if missing:
        raise ValidationError(f"missing keys {sorted(missing)}")
    if unknown:
        raise ValidationError(f"unknown keys {sorted(unknown)}")
    return obj


def box_to_dict(box: Box2D) -> Dict[str, float]:
    return {"cx": float(box.cx), "cy": float(box.cy), "w": float(box.w), "h": float(box.h)}


def box_from_dict(obj: Any) -> Box2D:
    _require(obj, {"cx", "cy", "w", "h"})
    return Box2D(cx=float(obj["cx"]), cy=float(obj["cy"]), w=float(obj["w"]), h=float(obj["h"]))


def box3d_to_dict(box: Box3D) -> Dict[str, Any]:
    t = box.template
    return {"center": [float(v) for v in box.center], "yaw": float(box.yaw),
            "template": {"w": float(t.w), "h": float(t.h), "l": float(t.l)}}


def box3d_from_dict(obj: Any) -> Box3D:
    _require(obj, {"center", "yaw", "template"})
    tpl = _require(obj["template"], {"w", "h", "l"})
    center = [float(v) for v in obj["center"]]
    if len(center) != 3:
        raise ValidationError(f"center needs 3 components, got {len(center)}")
    return Box3D(center=tuple(center), yaw=float(obj["yaw"]),
                 template=Template3D(w=float(tpl["w"]), h=float(tpl["h"]), l=float(tpl["l"])))


def _array(value: Any, width: int, name: str) -> np.ndarray:
    """(n, width) float array; an empty list is an empty (0, width) array."""
    arr = np.asarray(value, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, width)
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ValidationError(f"{name} must be (n, {width}), got shape {arr.shape}")
    return arr


def _visibility_names(V: np.ndarray) -> List[str]:
    return [Visibility(int(v)).label for v in V]


# Detection records

def record_to_dict(record: DetectionRecord) -> Dict[str, Any]:
    return {
        "image_id": record.image_id,
        "box": box_to_dict(record.box.box),
        "score": float(record.score),
        "parts2d": record.parts2d.tolist(),
        "vis_scores": record.vis_scores.tolist(),
        "template_sim": record.template_sim.tolist(),
    }


def record_from_dict(obj: Any) -> DetectionRecord:
    _require(obj, RECORD_KEYS)
    return DetectionRecord(
        box=ScoredBox(box_from_dict(obj["box"]), float(obj["score"])),
        parts2d=_array(obj["parts2d"], 2, "parts2d"),
        vis_scores=_array(obj["vis_scores"], N_VISIBILITY_CLASSES, "vis_scores"),
        template_sim=_array(obj["template_sim"], 3, "template_sim"),
        image_id=str(obj["image_id"]),
    )


# Ground truth

def gt_to_dict(gt: VehicleGT, image_id: str) -> Dict[str, Any]:
    return {
        "image_id": image_id,
        "model_id": gt.model_id,
        "box": box_to_dict(gt.B),
        "box3d": box3d_to_dict(gt.B3d),
        "parts2d": gt.S.tolist(),
        "parts3d": gt.S3d.tolist(),
        "visibility": _visibility_names(gt.V),
        "truncation": float(gt.truncation),
        "occlusion": int(gt.occlusion),
    }


def gt_from_dict(obj: Any) -> Tuple[str, VehicleGT]:
    _require(obj, GT_KEYS)
    box3d = box3d_from_dict(obj["box3d"])
    S = _array(obj["parts2d"], 2, "parts2d")
    S3d = _array(obj["parts3d"], 3, "parts3d")
    gt = VehicleGT(
        B=box_from_dict(obj["box"]), B3d=box3d, S=S, S3d=S3d,
        V=encode_visibility(obj["visibility"]), template=box3d.template, model_id=str(obj["model_id"]),
        truncation=float(obj["truncation"]), occlusion=int(obj["occlusion"]),
    )
    return str(obj["image_id"]), gt


# Weak annotations

def weak_to_dict(weak: WeakAnnotation, image_id: str, model_id: Optional[str] = None) -> Dict[str, Any]:
    row: Dict[str, Any] = {"image_id": image_id, "box3d": box3d_to_dict(weak.box3d)}
    if weak.truncation is not None:
        row["truncation"] = float(weak.truncation)
    if weak.occlusion is not None:
        row["occlusion"] = int(weak.occlusion)
    if weak.box2d is not None:
        row["box2d"] = box_to_dict(weak.box2d)
    if model_id is not None:
        row["model_id"] = model_id
    return row


def weak_from_dict(obj: Any) -> Tuple[str, WeakAnnotation, Optional[str]]:
    _require(obj, WEAK_KEYS, WEAK_OPTIONAL)
    weak = WeakAnnotation(
        box3d=box3d_from_dict(obj["box3d"]),
        truncation=float(obj["truncation"]) if "truncation" in obj else None,
        occlusion=int(obj["occlusion"]) if "occlusion" in obj else None,
        box2d=box_from_dict(obj["box2d"]) if "box2d" in obj else None,
    )
    return str(obj["image_id"]), weak, obj.get("model_id")


# Recovered vehicles

def result_to_dict(record: DetectionRecord, recovered: Recovered3D) -> Dict[str, Any]:
    return {
        "image_id": record.image_id,
        "box": box_to_dict(record.box.box),
        "score": float(record.score),
        "box3d": box3d_to_dict(recovered.box3d),
        "parts2d": record.parts2d.tolist(),
        "parts3d": recovered.parts3d.tolist(),
        "visibility": _visibility_names(record.visibility),
        "model_id": recovered.model_id,
        "reproj_rmse": float(recovered.reproj_rmse),
        "converged": bool(recovered.converged),
    }


def detection_from_dict(obj: Any) -> Tuple[str, EvalDetection]:
    """EvalDetection of a result row."""
    _require(obj, RESULT_KEYS)
    box3d = box3d_from_dict(obj["box3d"])
    return str(obj["image_id"]), EvalDetection(
        box=ScoredBox(box_from_dict(obj["box"]), float(obj["score"])),
        yaw=box3d.yaw, center=box3d.center,
        parts2d=_array(obj["parts2d"], 2, "parts2d"),
        visibility=encode_visibility(obj["visibility"]),
        template=box3d.template,
    )


# File level

def _read_rows(path: PathLike, decode) -> Tuple[Optional[Dict[str, Any]], List[Any]]:
    header, rows = None, []
    for lineno, obj in iter_jsonl(path):
        if isinstance(obj, dict) and set(obj) == {"header"}:
            if rows or header is not None:
                raise ParseError("header row must come first", line=lineno, path=str(path))
            header = obj["header"]
            continue
        try:
            rows.append(decode(obj))
        except (ValueError, TypeError) as e:
            raise ParseError(str(e), line=lineno, path=str(path)) from e
    return header, rows


def read_header(path: PathLike) -> Optional[Dict[str, Any]]:
    """The header object of a JSON-lines file, or None."""
    for lineno, obj in iter_jsonl(path):
        if isinstance(obj, dict) and set(obj) == {"header"}:
            return obj["header"]
        return None
    return None


def write_records(path: PathLike, records: Iterable[DetectionRecord], header: Optional[Mapping] = None) -> Path:
    return write_jsonl(path, (record_to_dict(r) for r in records), header=dict(header) if header else None)


def read_records(path: PathLike) -> List[DetectionRecord]:
    _, records = _read_rows(path, record_from_dict)
    logger.info(f"Read {len(records)} detection records from {path}")
    return records


def write_ground_truth(path: PathLike, gts: Mapping[str, Sequence[VehicleGT]],
                       header: Optional[Mapping] = None) -> Path:
    rows = (gt_to_dict(gt, image_id) for image_id in sorted(gts) for gt in gts[image_id])
    return write_jsonl(path, rows, header=dict(header) if header else None)


def read_ground_truth(path: PathLike) -> Dict[str, List[VehicleGT]]:
    _, rows = _read_rows(path, gt_from_dict)
    grouped: Dict[str, List[VehicleGT]] = {}
    for image_id, gt in rows:
        grouped.setdefault(image_id, []).append(gt)
    logger.info(f"Read {len(rows)} ground-truth vehicles over {len(grouped)} images from {path}")
    return grouped


def write_weak_annotations(path: PathLike, weaks: Mapping[str, Sequence[WeakAnnotation]],
                           model_ids: Optional[Mapping[str, Sequence[str]]] = None,
                           header: Optional[Mapping] = None) -> Path:
    rows = []
    for image_id in sorted(weaks):
        ids = model_ids.get(image_id) if model_ids else None
        for k, weak in enumerate(weaks[image_id]):
            rows.append(weak_to_dict(weak, image_id, ids[k] if ids else None))
    return write_jsonl(path, rows, header=dict(header) if header else None)


def read_weak_annotations(path: PathLike) -> Tuple[Optional[Dict[str, Any]], Dict[str, List[Tuple[WeakAnnotation, Optional[str]]]]]:
    """
    Read weak boxes grouped by image.

    Returns:
        (header or None, image id -> [(WeakAnnotation, assigned model id or None)])
    """
    header, rows = _read_rows(path, weak_from_dict)
    grouped: Dict[str, List[Tuple[WeakAnnotation, Optional[str]]]] = {}
    for image_id, weak, model_id in rows:
        grouped.setdefault(image_id, []).append((weak, model_id))
    return header, grouped


def write_results(path: PathLike, outputs: Mapping[str, Sequence[Tuple[DetectionRecord, Recovered3D]]],
                  header: Optional[Mapping] = None) -> Path:
    rows = (result_to_dict(rec, out) for image_id in sorted(outputs) for rec, out in outputs[image_id])
    return write_jsonl(path, rows, header=dict(header) if header else None)


def read_detections(path: PathLike) -> Dict[str, List[EvalDetection]]:
    """Result rows grouped by image as evaluation detections."""
    _, rows = _read_rows(path, detection_from_dict)
    grouped: Dict[str, List[EvalDetection]] = {}
    for image_id, det in rows:
        grouped.setdefault(image_id, []).append(det)
    return grouped


def ground_truth_for_eval(gts: Mapping[str, Sequence[VehicleGT]]) -> Dict[str, ImageGT]:
    """ImageGT per image from annotator ground truth."""
    return {image_id: ImageGT(objects=[object_from_vehicle_gt(gt) for gt in items]) for image_id, items in gts.items()}
