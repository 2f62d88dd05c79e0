"""
Builder for the bundled synthetic bank (box-bodied vehicles with labeled meshes).

Arithmetic is plain Python floats in a fixed order so the bundled
`data/shape_bank.json` can be regenerated bit for bit by
`scripts/build_shape_bank.py`.
"""
import logging
from typing import List, Sequence, Tuple

import numpy as np

from geometry.boxes import Template3D
from .parts import FRONT_WHEELS, N_PARTS, PART_LAYOUT, REAR_WHEELS, ROOF_PARTS
from .shape_bank import BankModel, ShapeBank, VisibilityMesh

logger = logging.getLogger(__name__)

MESH_GRID = 3

# id, (w, h, l), roof shift (fraction of half length), wheel spread (fraction)
SYNTHETIC_MODELS: List[Tuple[str, Tuple[float, float, float], float, float]] = [
    ("sedan", (1.8, 1.45, 4.5), 0.0, 0.0),
    ("hatchback", (1.7, 1.5, 3.9), 0.1, -0.05),
    ("suv", (1.95, 1.8, 4.8), -0.05, 0.05),
    ("van", (2.0, 2.1, 5.2), 0.05, 0.1),
]


def part_fractions(roof_shift: float, wheel_spread: float) -> List[List[float]]:
    """Per-part (x, y, z) fractions of the half extents for one model."""
    fractions = []
    for k, (_, (fx, fy, fz)) in enumerate(PART_LAYOUT):
        if k in ROOF_PARTS:
            fx = fx + roof_shift
        elif k in FRONT_WHEELS:
            fx = fx + wheel_spread
        elif k in REAR_WHEELS:
            fx = fx - wheel_spread
        fractions.append([fx, fy, fz])
    return fractions


def box_mesh(half: Sequence[float], grid: int) -> Tuple[List[List[float]], List[List[int]]]:
    """
    Triangulated box surface with every face split into grid x grid cells.

    Returns:
        (vertices, faces) as nested lists; faces are vertex-index triples
    """
    vertices: List[List[float]] = []
    faces: List[List[int]] = []
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        for sign in (-1.0, 1.0):
            base = len(vertices)
            for i in range(grid + 1):
                for j in range(grid + 1):
                    frac = [0.0, 0.0, 0.0]
                    frac[axis] = sign
                    frac[others[0]] = -1.0 + 2.0 * i / grid
                    frac[others[1]] = -1.0 + 2.0 * j / grid
                    vertices.append([frac[0] * half[0], frac[1] * half[1], frac[2] * half[2]])
            for i in range(grid):
                for j in range(grid):
                    v00 = base + i * (grid + 1) + j
                    v10 = base + (i + 1) * (grid + 1) + j
                    v11 = base + (i + 1) * (grid + 1) + j + 1
                    v01 = base + i * (grid + 1) + j + 1
                    faces.append([v00, v10, v11])
                    faces.append([v00, v11, v01])
    return vertices, faces


def label_faces(vertices: List[List[float]], faces: List[List[int]], parts: List[List[float]]) -> List[int]:
    """1-based label of the part nearest to each face centroid (ties: lowest part)."""
    labels = []
    for a, b, c in faces:
        centroid = [(vertices[a][k] + vertices[b][k] + vertices[c][k]) / 3.0 for k in range(3)]
        best, best_d = 0, None
        for idx, p in enumerate(parts):
            d = (centroid[0] - p[0]) ** 2 + (centroid[1] - p[1]) ** 2 + (centroid[2] - p[2]) ** 2
            if best_d is None or d < best_d:
                best, best_d = idx, d
        labels.append(best + 1)
    return labels


def build_synthetic_model(model_id: str, dims: Tuple[float, float, float], roof_shift: float,
                          wheel_spread: float, grid: int = MESH_GRID) -> BankModel:
    w, h, l = dims
    half = [l / 2.0, h / 2.0, w / 2.0]
    parts = [[f[0] * half[0], f[1] * half[1], f[2] * half[2]] for f in part_fractions(roof_shift, wheel_spread)]
    vertices, faces = box_mesh(half, grid)
    labels = label_faces(vertices, faces, parts)
    mesh = VisibilityMesh(
        vertices=np.array(vertices, dtype=float),
        faces=np.array(faces, dtype=np.int64),
        labels=np.array(labels, dtype=np.int64),
    )
    return BankModel(id=model_id, shape=np.array(parts, dtype=float), template=Template3D(w=w, h=h, l=l), mesh=mesh)


def build_synthetic_bank(grid: int = MESH_GRID) -> ShapeBank:
    """The bundled 4-model bank."""
    models = [build_synthetic_model(mid, dims, rs, ws, grid) for mid, dims, rs, ws in SYNTHETIC_MODELS]
    logger.info(f"Built synthetic bank with {len(models)} models")
    return ShapeBank(models, N_PARTS, source="synthetic")
