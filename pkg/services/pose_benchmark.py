"""
Accuracy and latency benchmark of the pose pipeline on seeded synthetic vehicles.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from geometry.boxes import wrap_angle_difference
from geometry.camera import CameraIntrinsics, Pose, project_shape
from models.shape_bank import ShapeBank
from utils.errors import Vehicle3DError
from .pose_solver import PnPOptions, solve_pose, solve_pose_oracle

logger = logging.getLogger(__name__)

DEPTH_RANGE = (5.0, 50.0)
LATERAL_FRACTION = 0.3
CAMERA_HEIGHT = 1.65
YAW_TOLERANCE = math.radians(0.1)
TRANSLATION_TOLERANCE = 0.01
ORACLE_YAW_STEP = math.radians(0.5)
ORACLE_SLACK = 1e-6


@dataclass
class PoseTrial:
    model_id: str
    yaw_error: float
    translation_error: float
    reproj_rmse: float
    latency_ms: float
    converged: bool
    oracle_rmse: Optional[float] = None


@dataclass
class PoseBenchmark:
    trials: List[PoseTrial] = field(default_factory=list)
    failures: int = 0

    @property
    def n_trials(self) -> int:
        return len(self.trials) + self.failures

    def within_tolerance(self, yaw_tol: float = YAW_TOLERANCE, t_tol: float = TRANSLATION_TOLERANCE) -> float:
        """Share of all trials (failures count as misses) within both tolerances."""
        if self.n_trials == 0:
            return 0.0
        hits = sum(1 for t in self.trials if t.yaw_error < yaw_tol and t.translation_error < t_tol)
        return hits / self.n_trials

    def oracle_violations(self) -> int:
        return sum(1 for t in self.trials
                   if t.oracle_rmse is not None and t.reproj_rmse > t.oracle_rmse + ORACLE_SLACK)

    def summary(self) -> Dict[str, Any]:
        if not self.trials:
            return {"n_trials": self.n_trials, "failures": self.failures}
        lat = np.array([t.latency_ms for t in self.trials])
        yaw = np.degrees([t.yaw_error for t in self.trials])
        trans = np.array([t.translation_error for t in self.trials])
        out = {
            "n_trials": self.n_trials,
            "failures": self.failures,
            "within_tolerance": self.within_tolerance(),
            "median_latency_ms": float(np.median(lat)),
            "p95_latency_ms": float(np.percentile(lat, 95)),
            "median_yaw_error_deg": float(np.median(yaw)),
            "max_yaw_error_deg": float(np.max(yaw)),
            "median_translation_error_m": float(np.median(trans)),
            "max_translation_error_m": float(np.max(trans)),
            "median_reproj_rmse_px": float(np.median([t.reproj_rmse for t in self.trials])),
            "non_converged": sum(1 for t in self.trials if not t.converged),
        }
        if any(t.oracle_rmse is not None for t in self.trials):
            out["oracle_violations"] = self.oracle_violations()
        return out


def sample_pose(rng: np.random.Generator, height: float) -> Pose:
    """Random yaw and a ground-plane position in front of the camera."""
    z = rng.uniform(*DEPTH_RANGE)
    x = rng.uniform(-LATERAL_FRACTION, LATERAL_FRACTION) * z
    return Pose(yaw=rng.uniform(-math.pi, math.pi), t=(x, CAMERA_HEIGHT - height / 2, z))


def run_pose_benchmark(bank: ShapeBank, K: CameraIntrinsics, trials: int, seed: int,
                       opts: PnPOptions = PnPOptions(), part_sigma: float = 0.0,
                       with_oracle: bool = False) -> PoseBenchmark:
    """
    Solve `trials` random vehicle poses from projected bank shapes.

    Args:
        bank: Shape bank; every trial draws a model uniformly
        K: Camera intrinsics
        trials: Number of vehicles
        seed: RNG seed
        opts: Solver options
        part_sigma: Gaussian pixel noise added to the projected parts
        with_oracle: Also run the 0.5 degree grid oracle on every trial

    Returns:
        PoseBenchmark with one PoseTrial per solved vehicle
    """
    rng = np.random.default_rng(seed)
    bench = PoseBenchmark()
    for _ in range(trials):
        model = bank[int(rng.integers(len(bank)))]
        truth = sample_pose(rng, model.template.h)
        noise = rng.normal(0.0, 1.0, (bank.n_parts, 2)) * part_sigma
        try:
            observed = project_shape(K, truth, model.shape) + noise
            start = time.perf_counter()
            solution = solve_pose(model.shape, observed, K, opts)
            latency = (time.perf_counter() - start) * 1000.0
            oracle = solve_pose_oracle(model.shape, observed, K, ORACLE_YAW_STEP) if with_oracle else None
        except Vehicle3DError as e:
            logger.warning(f"Pose trial failed for {model.id}: {e}")
            bench.failures += 1
            continue
        bench.trials.append(PoseTrial(
            model_id=model.id,
            yaw_error=abs(wrap_angle_difference(solution.pose.yaw, truth.yaw)),
            translation_error=float(np.linalg.norm(solution.pose.translation - truth.translation)),
            reproj_rmse=solution.reproj_rmse,
            latency_ms=latency,
            converged=solution.converged,
            oracle_rmse=oracle.reproj_rmse if oracle is not None else None,
        ))
    logger.info(f"Pose benchmark: {len(bench.trials)} solved, {bench.failures} failed")
    return bench
