"""
Scene data: synthetic scenes, record noise, KITTI labels and record files.
"""
from .kitti import (
    KittiFrame, KittiObject, format_label_line, load_kitti_frame, load_kitti_ground_truth, parse_calib_text,
    parse_kitti_labels, parse_label_text, write_kitti_labels,
)
from .noise import NoiseSpec, perturb_records
from .records import (
    read_detections, read_ground_truth, read_records, read_weak_annotations, write_ground_truth,
    write_records, write_results, write_weak_annotations,
)
from .synthetic import KITTI_CAMERA, SceneSpec, generate_scene, generate_scenes, gt_to_records

__all__ = [
    'KittiFrame', 'KittiObject', 'parse_kitti_labels', 'parse_label_text', 'parse_calib_text',
    'format_label_line', 'load_kitti_frame', 'load_kitti_ground_truth', 'write_kitti_labels',
    'NoiseSpec', 'perturb_records',
    'read_records', 'write_records', 'read_ground_truth', 'write_ground_truth', 'read_weak_annotations',
    'write_weak_annotations', 'write_results', 'read_detections',
    'KITTI_CAMERA', 'SceneSpec', 'generate_scene', 'generate_scenes', 'gt_to_records',
]
