"""Vehicle model bank: 3D shapes, templates and visibility meshes."""
from .parts import N_PARTS, PART_NAMES
from .shape_bank import (
    BankModel,
    ShapeBank,
    VisibilityMesh,
    load_bank,
    model_extents,
    scale_shape_to_template,
    template_distance,
)

__all__ = [
    'BankModel', 'N_PARTS', 'PART_NAMES', 'ShapeBank', 'VisibilityMesh', 'load_bank',
    'model_extents', 'scale_shape_to_template', 'template_distance',
]
