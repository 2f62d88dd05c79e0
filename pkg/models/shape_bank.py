"""
The 3D shape / template / visibility-mesh bank.
"""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from geometry.boxes import Template3D
from utils.errors import ParseError, ValidationError
from utils.utils import dump_json, read_json

logger = logging.getLogger(__name__)

PLAUSIBLE_W = (1.0, 3.0)
PLAUSIBLE_H = (0.5, 4.0)
PLAUSIBLE_L = (2.0, 8.0)
MESH_SLACK = 0.05


@dataclass(frozen=True)
class VisibilityMesh:
    """Low-resolution mesh; every face carries a 1-based part label."""
    vertices: np.ndarray
    faces: np.ndarray
    labels: np.ndarray

    def triangles(self, vertices: Optional[np.ndarray] = None) -> np.ndarray:
        """(F, 3, 3) triangle coordinates, optionally for transformed vertices."""
        verts = self.vertices if vertices is None else vertices
        return verts[self.faces]


@dataclass(frozen=True)
class BankModel:
    id: str
    shape: np.ndarray
    template: Template3D
    mesh: VisibilityMesh

    def scaled_shape(self, dst: Template3D) -> np.ndarray:
        return scale_shape_to_template(self.shape, self.template, dst)

    def scaled_mesh_vertices(self, dst: Template3D) -> np.ndarray:
        return scale_shape_to_template(self.mesh.vertices, self.template, dst)


class ShapeBank:
    """Immutable collection of M vehicle models sharing one N-part ordering."""

    def __init__(self, models: List[BankModel], n_parts: int, source: Optional[str] = None):
        self.models = tuple(models)
        self.n_parts = n_parts
        self.source = source
        self._validate()
        self._templates = np.array([m.template.as_array() for m in self.models])

    def __len__(self) -> int:
        return len(self.models)

    def __getitem__(self, index: int) -> BankModel:
        return self.models[index]

    @property
    def templates(self) -> np.ndarray:
        """(M, 3) array of (w, h, l)."""
        return self._templates.copy()

    @property
    def ids(self) -> List[str]:
        return [m.id for m in self.models]

    def index_of(self, model_id: str) -> int:
        for i, m in enumerate(self.models):
            if m.id == model_id:
                return i
        raise ValidationError(f"unknown model id '{model_id}'")

    def _validate(self):
        if len(self.models) < 1:
            raise ValidationError("bank must contain at least one model")
        seen = set()
        for m in self.models:
            if m.id in seen:
                raise ValidationError("duplicate model id", model_id=m.id, field="id")
            seen.add(m.id)
            _validate_model(m, self.n_parts)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_parts": self.n_parts,
            "models": [
                {
                    "id": m.id,
                    "template": {"w": m.template.w, "h": m.template.h, "l": m.template.l},
                    "parts": m.shape.tolist(),
                    "mesh": {
                        "vertices": m.mesh.vertices.tolist(),
                        "faces": [[int(a), int(b), int(c), int(lab)]
                                  for (a, b, c), lab in zip(m.mesh.faces, m.mesh.labels)],
                    },
                }
                for m in self.models
            ],
        }

    def dumps(self) -> str:
        """Canonical JSON text of the bank."""
        return dump_json(self.to_dict())

    def save(self, path: Union[str, Path]) -> Path:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(self.dumps())
        logger.info(f"Saved shape bank with {len(self)} models to {out}")
        return out

    def get_bank_stats(self) -> Dict[str, Any]:
        """Summary of the bank contents."""
        return {
            "n_models": len(self),
            "n_parts": self.n_parts,
            "ids": self.ids,
            "source": self.source,
            "n_mesh_faces": [int(m.mesh.faces.shape[0]) for m in self.models],
        }

    @classmethod
    def from_dict(cls, data: Any, source: Optional[str] = None) -> "ShapeBank":
        if not isinstance(data, dict) or "models" not in data or "n_parts" not in data:
            raise ParseError("bank document needs 'n_parts' and 'models'", path=source)
        n_parts = data["n_parts"]
        if not isinstance(n_parts, int) or isinstance(n_parts, bool) or n_parts < 1:
            raise ValidationError(f"n_parts must be a positive integer, got {n_parts!r}", field="n_parts")
        if not isinstance(data["models"], list):
            raise ParseError("'models' must be a list", path=source)
        models = [_model_from_dict(entry, n_parts, i) for i, entry in enumerate(data["models"])]
        return cls(models, n_parts, source=source)


def _model_from_dict(entry: Any, n_parts: int, position: int) -> BankModel:
    if not isinstance(entry, dict):
        raise ParseError(f"model #{position} is not an object")
    model_id = entry.get("id")
    if not isinstance(model_id, str) or not model_id:
        raise ValidationError("missing or empty id", model_id=f"#{position}", field="id")
    try:
        tpl = entry["template"]
        template = Template3D(w=float(tpl["w"]), h=float(tpl["h"]), l=float(tpl["l"]))
        parts = np.asarray(entry["parts"], dtype=float)
        mesh = entry["mesh"]
        vertices = np.asarray(mesh["vertices"], dtype=float)
        faces_raw = np.asarray(mesh["faces"])
    except ValidationError as e:
        raise ValidationError(str(e), model_id=model_id, field="template") from e
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"model '{model_id}': {e}") from e
    if parts.ndim != 2 or parts.shape[1] != 3:
        raise ValidationError("parts must be [x, y, z] triples", model_id=model_id, field="parts")
    if parts.shape[0] != n_parts:
        raise ValidationError(f"expected {n_parts} parts, got {parts.shape[0]}", model_id=model_id, field="parts")
    if vertices.ndim != 2 or vertices.shape[1:] != (3,):
        raise ValidationError("vertices must be [x, y, z] triples", model_id=model_id, field="mesh.vertices")
    if faces_raw.ndim != 2 or faces_raw.shape[1:] != (4,):
        raise ValidationError("faces must be [i, j, k, part_label]", model_id=model_id, field="mesh.faces")
    if not np.all(np.equal(np.mod(faces_raw, 1), 0)):
        raise ValidationError("face entries must be integers", model_id=model_id, field="mesh.faces")
    faces_raw = faces_raw.astype(np.int64)
    mesh_obj = VisibilityMesh(vertices=vertices, faces=faces_raw[:, :3], labels=faces_raw[:, 3])
    return BankModel(id=model_id, shape=parts, template=template, mesh=mesh_obj)


def _validate_model(model: BankModel, n_parts: int):
    mid = model.id
    if model.shape.shape != (n_parts, 3):
        raise ValidationError(f"expected ({n_parts}, 3) parts, got {model.shape.shape}", model_id=mid, field="parts")
    if not np.all(np.isfinite(model.shape)):
        raise ValidationError("non-finite part coordinate", model_id=mid, field="parts")
    t = model.template
    for name, value, (lo, hi) in (("w", t.w, PLAUSIBLE_W), ("h", t.h, PLAUSIBLE_H), ("l", t.l, PLAUSIBLE_L)):
        if not lo <= value <= hi:
            logger.warning(f"Model {mid}: template {name}={value} outside plausible range [{lo}, {hi}]")
    mesh = model.mesh
    if mesh.vertices.shape[0] < 3 or mesh.faces.shape[0] < 1:
        raise ValidationError("degenerate mesh (needs >= 3 vertices and >= 1 face)", model_id=mid, field="mesh")
    if not np.all(np.isfinite(mesh.vertices)):
        raise ValidationError("non-finite vertex", model_id=mid, field="mesh.vertices")
    if mesh.faces.min() < 0 or mesh.faces.max() >= mesh.vertices.shape[0]:
        raise ValidationError("face vertex index out of range", model_id=mid, field="mesh.faces")
    if mesh.labels.min() < 1 or mesh.labels.max() > n_parts:
        raise ValidationError(f"part label outside [1, {n_parts}]", model_id=mid, field="mesh.faces")
    limit = t.axis_extents() / 2 * (1.0 + MESH_SLACK)
    if np.any(np.abs(mesh.vertices) > limit):
        raise ValidationError("mesh vertex outside the template box inflated by 5%", model_id=mid, field="mesh.vertices")
    extents = model_extents(mesh)
    declared = t.as_array()
    if np.any(np.abs(extents.as_array() - declared) > MESH_SLACK * declared):
        raise ValidationError(
            f"mesh extents {extents.as_tuple()} differ from template {t.as_tuple()} by more than 5%",
            model_id=mid, field="mesh",
        )


def load_bank(path: Union[str, Path]) -> ShapeBank:
    """
    Load and validate a bank JSON file.

    Args:
        path: Bank file path

    Returns:
        Validated ShapeBank
    """
    src = Path(path)
    if not src.exists():
        raise ParseError("bank file does not exist", path=str(src))
    bank = ShapeBank.from_dict(read_json(src), source=str(src))
    logger.info(f"Loaded shape bank with {len(bank)} models, {bank.n_parts} parts from {src}")
    return bank


def scale_shape_to_template(shape: np.ndarray, src: Template3D, dst: Template3D) -> np.ndarray:
    """Anisotropic rescale: x by l ratio, y by h ratio, z by w ratio."""
    factors = dst.axis_extents() / src.axis_extents()
    return np.asarray(shape, dtype=float) * factors


def model_extents(mesh: VisibilityMesh) -> Template3D:
    """Axis-aligned extents of the mesh vertices as (w, h, l)."""
    span = mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0)
    return Template3D(w=float(span[2]), h=float(span[1]), l=float(span[0]))


def template_distance(a: Template3D, b: Template3D) -> float:
    """Euclidean distance between two (w, h, l) triples."""
    return math.dist(a.as_tuple(), b.as_tuple())
