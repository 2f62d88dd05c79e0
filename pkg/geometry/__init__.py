"""
Geometry package: camera model, boxes, NMS, ray casting.
"""
from .boxes import Box2D, Box3D, ScoredBox, Template3D, boxes_to_array, iou, iou_matrix, nms
from .camera import (
    CameraIntrinsics,
    Pose,
    normalize_angle,
    project_camera_points,
    project_point,
    project_shape,
    rotation_y,
    yaw_from_rotation,
)

__all__ = [
    'Box2D', 'Box3D', 'CameraIntrinsics', 'Pose', 'ScoredBox', 'Template3D',
    'boxes_to_array', 'iou', 'iou_matrix', 'nms', 'normalize_angle',
    'project_camera_points', 'project_point', 'project_shape', 'rotation_y',
    'yaw_from_rotation',
]
