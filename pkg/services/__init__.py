"""Pose recovery, ground-truth annotation and inference services."""
from .pose_solver import (
    PnPMode, PnPOptions, PoseSolution, refine_yaw_pose, reprojection_error, solve_epnp, solve_pose,
    solve_pose_oracle,
)
from .annotation_service import (
    AnnotationService, Scene, VehicleGT, WeakAnnotation, compute_part_visibility, generate_ground_truth,
    select_model,
)
from .inference_service import (
    DetectionRecord, InferenceService, Recovered3D, recover_3d, run_inference, select_template,
)
from .pose_benchmark import PoseBenchmark, run_pose_benchmark

__all__ = [
    'PnPMode', 'PnPOptions', 'PoseSolution', 'solve_epnp', 'refine_yaw_pose', 'solve_pose_oracle',
    'reprojection_error', 'solve_pose',
    'AnnotationService', 'Scene', 'VehicleGT', 'WeakAnnotation', 'select_model', 'compute_part_visibility',
    'generate_ground_truth',
    'DetectionRecord', 'InferenceService', 'Recovered3D', 'select_template', 'recover_3d', 'run_inference',
    'PoseBenchmark', 'run_pose_benchmark',
]
