"""
2D/3D part matching: recover a vehicle pose from N image parts and the
rescaled 3D shape.

Pipeline: EPnP closed-form initialization, projection onto the yaw-only
manifold, then Gauss-Newton over (yaw, tx, ty, tz). A brute-force yaw grid
oracle is provided as an independent verifier.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg

from geometry.camera import (
    MIN_DEPTH, CameraIntrinsics, Pose, normalize_angle, rotation_y, rotation_y_derivative, yaw_from_rotation,
)
from utils.errors import (
    BehindCamera, DegenerateConfiguration, DegenerateDepth, GeometryError, NonConvergence, ShapeMismatch,
    ValidationError,
)

logger = logging.getLogger(__name__)

EPNP_MIN_POINTS = 6
YAW_MIN_POINTS = 4
EPNP_GN_ITERS = 5
MAX_DAMPING_TRIES = 30
# (a, b) control-point pairs of the six distance constraints
_PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


class PnPMode(str, Enum):
    YAW = "yaw"
    FULL_6DOF = "6dof"


@dataclass(frozen=True)
class PnPOptions:
    mode: PnPMode = PnPMode.YAW
    max_iters: int = 50
    tol: float = 1e-10
    min_points: Optional[int] = None
    hidden_weight: float = 1.0
    strict: bool = False
    init_yaw_step: float = math.radians(5.0)

    def __post_init__(self):
        object.__setattr__(self, "mode", PnPMode(self.mode))
        if self.max_iters < 1:
            raise ValidationError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tol <= 0:
            raise ValidationError(f"tol must be > 0, got {self.tol}")
        if self.hidden_weight < 0:
            raise ValidationError(f"hidden_weight must be >= 0, got {self.hidden_weight}")
        if self.init_yaw_step <= 0:
            raise ValidationError(f"init_yaw_step must be > 0, got {self.init_yaw_step}")

    @property
    def required_points(self) -> int:
        if self.min_points is not None:
            return self.min_points
        return EPNP_MIN_POINTS if self.mode is PnPMode.FULL_6DOF else YAW_MIN_POINTS


@dataclass
class PoseSolution:
    """
    Solver output. `rotation` holds the full matrix of 6-DoF solutions;
    yaw-constrained solutions leave it None.
    """
    pose: Pose
    reproj_rmse: float
    converged: bool
    iterations: int
    rotation: Optional[np.ndarray] = None

    @property
    def rotation_matrix(self) -> np.ndarray:
        return self.rotation if self.rotation is not None else self.pose.rotation


def _check_correspondences(shape3d, shape2d) -> Tuple[np.ndarray, np.ndarray]:
    pts3 = np.asarray(shape3d, dtype=float).reshape(-1, 3)
    pts2 = np.asarray(shape2d, dtype=float).reshape(-1, 2)
    if pts3.shape[0] != pts2.shape[0]:
        raise ShapeMismatch(f"{pts3.shape[0]} 3D points but {pts2.shape[0]} 2D points")
    if not (np.all(np.isfinite(pts3)) and np.all(np.isfinite(pts2))):
        raise ValidationError("correspondences must be finite")
    return pts3, pts2


def _rmse(K: CameraIntrinsics, R: np.ndarray, t: np.ndarray, pts3: np.ndarray, pts2: np.ndarray) -> float:
    cam = pts3 @ R.T + t
    if np.any(cam[:, 2] <= MIN_DEPTH):
        return math.inf
    uv = np.column_stack((K.fx * cam[:, 0] / cam[:, 2] + K.cx, K.fy * cam[:, 1] / cam[:, 2] + K.cy))
    return float(np.sqrt(np.mean(np.sum((uv - pts2) ** 2, axis=1))))


def reprojection_error(shape3d, shape2d, K: CameraIntrinsics, pose: Pose) -> float:
    """RMSE in pixels of the posed shape against the observed parts."""
    pts3, pts2 = _check_correspondences(shape3d, shape2d)
    rmse = _rmse(K, pose.rotation, pose.translation, pts3, pts2)
    if not math.isfinite(rmse):
        raise DegenerateDepth("posed shape crosses the camera plane")
    return rmse


# ---------------------------------------------------------------- EPnP

def _control_points(pts3: np.ndarray) -> np.ndarray:
    centroid = pts3.mean(axis=0)
    centered = pts3 - centroid
    cov = centered.T @ centered / pts3.shape[0]
    eigvals, eigvecs = linalg.eigh(cov)
    if eigvals[0] <= 1e-12 * max(eigvals[-1], 1e-300):
        raise DegenerateConfiguration("3D points are coplanar or collinear")
    ctrl = [centroid]
    for k in range(3):
        ctrl.append(centroid + math.sqrt(eigvals[k]) * eigvecs[:, k])
    return np.array(ctrl)


def _barycentric(pts3: np.ndarray, ctrl: np.ndarray) -> np.ndarray:
    basis = ctrl[1:] - ctrl[0]
    coeffs = linalg.solve(basis.T, (pts3 - ctrl[0]).T).T
    return np.column_stack((1.0 - coeffs.sum(axis=1), coeffs))


def _measurement_matrix(alphas: np.ndarray, pts2: np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    n = pts2.shape[0]
    M = np.zeros((2 * n, 12))
    du = K.cx - pts2[:, 0]
    dv = K.cy - pts2[:, 1]
    for j in range(4):
        a = alphas[:, j]
        M[0::2, 3 * j] = a * K.fx
        M[0::2, 3 * j + 2] = a * du
        M[1::2, 3 * j + 1] = a * K.fy
        M[1::2, 3 * j + 2] = a * dv
    return M


def _l_6x10(null: np.ndarray) -> np.ndarray:
    """Distance-constraint matrix over betas b11 b12 b22 b13 b23 b33 b14 b24 b34 b44."""
    dv = np.zeros((4, 6, 3))
    for k in range(4):
        pts = null[k].reshape(4, 3)
        for p, (a, b) in enumerate(_PAIRS):
            dv[k, p] = pts[a] - pts[b]
    d = lambda i, j: np.einsum('pi,pi->p', dv[i], dv[j])
    return np.column_stack((
        d(0, 0), 2 * d(0, 1), d(1, 1), 2 * d(0, 2), 2 * d(1, 2),
        d(2, 2), 2 * d(0, 3), 2 * d(1, 3), 2 * d(2, 3), d(3, 3),
    ))


def _rho(ctrl: np.ndarray) -> np.ndarray:
    return np.array([np.sum((ctrl[a] - ctrl[b]) ** 2) for a, b in _PAIRS])


def _betas_n4(L: np.ndarray, rho: np.ndarray) -> np.ndarray:
    B = linalg.lstsq(L[:, [0, 1, 3, 6]], rho)[0]
    betas = np.zeros(4)
    if B[0] < 0:
        betas[0] = math.sqrt(-B[0])
        betas[1:] = -B[1:] / betas[0]
    else:
        betas[0] = math.sqrt(B[0])
        betas[1:] = B[1:] / betas[0] if betas[0] > 0 else 0.0
    return betas


def _betas_n2(L: np.ndarray, rho: np.ndarray) -> np.ndarray:
    B = linalg.lstsq(L[:, [0, 1, 2]], rho)[0]
    betas = np.zeros(4)
    if B[0] < 0:
        betas[0] = math.sqrt(-B[0])
        betas[1] = math.sqrt(-B[2]) if B[2] < 0 else 0.0
    else:
        betas[0] = math.sqrt(B[0])
        betas[1] = math.sqrt(B[2]) if B[2] > 0 else 0.0
    if B[1] < 0:
        betas[0] = -betas[0]
    return betas


def _betas_n3(L: np.ndarray, rho: np.ndarray) -> np.ndarray:
    B = linalg.lstsq(L[:, [0, 1, 2, 3, 4]], rho)[0]
    betas = np.zeros(4)
    if B[0] < 0:
        betas[0] = math.sqrt(-B[0])
        betas[1] = math.sqrt(-B[2]) if B[2] < 0 else 0.0
    else:
        betas[0] = math.sqrt(B[0])
        betas[1] = math.sqrt(B[2]) if B[2] > 0 else 0.0
    if B[1] < 0:
        betas[0] = -betas[0]
    betas[2] = B[3] / betas[0] if betas[0] != 0 else 0.0
    return betas


def _refine_betas(L: np.ndarray, rho: np.ndarray, betas: np.ndarray) -> np.ndarray:
    for _ in range(EPNP_GN_ITERS):
        b1, b2, b3, b4 = betas
        products = np.array([b1 * b1, b1 * b2, b2 * b2, b1 * b3, b2 * b3, b3 * b3, b1 * b4, b2 * b4, b3 * b4, b4 * b4])
        residual = rho - L @ products
        J = np.column_stack((
            2 * L[:, 0] * b1 + L[:, 1] * b2 + L[:, 3] * b3 + L[:, 6] * b4,
            L[:, 1] * b1 + 2 * L[:, 2] * b2 + L[:, 4] * b3 + L[:, 7] * b4,
            L[:, 3] * b1 + L[:, 4] * b2 + 2 * L[:, 5] * b3 + L[:, 8] * b4,
            L[:, 6] * b1 + L[:, 7] * b2 + L[:, 8] * b3 + 2 * L[:, 9] * b4,
        ))
        betas = betas + linalg.lstsq(J, residual)[0]
    return betas


def _kabsch(pts3: np.ndarray, cam: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Rigid (R, t) with cam ~ R pts3 + t."""
    mu_w, mu_c = pts3.mean(axis=0), cam.mean(axis=0)
    H = (pts3 - mu_w).T @ (cam - mu_c)
    U, _, Vt = linalg.svd(H)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0])
    R = Vt.T @ D @ U.T
    return R, mu_c - R @ mu_w


def solve_epnp(shape3d, shape2d, K: CameraIntrinsics) -> PoseSolution:
    """
    Closed-form 6-DoF pose from >= 6 correspondences.

    Args:
        shape3d: (N, 3) canonical-frame points
        shape2d: (N, 2) observed pixels
        K: Camera intrinsics

    Returns:
        Lowest-reprojection-error candidate; `rotation` holds the full matrix
    """
    pts3, pts2 = _check_correspondences(shape3d, shape2d)
    n = pts3.shape[0]
    if n < EPNP_MIN_POINTS:
        raise DegenerateConfiguration(f"EPnP needs at least {EPNP_MIN_POINTS} correspondences, got {n}")
    if np.ptp(pts2, axis=0).max() < 1e-9:
        raise DegenerateConfiguration("all image points coincide")
    ctrl = _control_points(pts3)
    alphas = _barycentric(pts3, ctrl)
    M = _measurement_matrix(alphas, pts2, K)
    _, _, Vt = linalg.svd(M.T @ M)
    null = Vt[::-1][:4]
    L = _l_6x10(null)
    rho = _rho(ctrl)

    best: Optional[Tuple[float, np.ndarray, np.ndarray]] = None
    for approx in (_betas_n4, _betas_n2, _betas_n3):
        betas = _refine_betas(L, rho, approx(L, rho))
        ctrl_cam = (betas @ null).reshape(4, 3)
        cam = alphas @ ctrl_cam
        if cam[:, 2].mean() < 0:
            cam = -cam
        R, t = _kabsch(pts3, cam)
        err = _rmse(K, R, t, pts3, pts2)
        if best is None or err < best[0]:
            best = (err, R, t)
    err, R, t = best
    if not math.isfinite(err):
        raise BehindCamera("every EPnP candidate places points behind the camera")
    logger.debug(f"EPnP solved {n} points with RMSE {err:.3g} px")
    return PoseSolution(pose=Pose(yaw_from_rotation(R), tuple(t)), reproj_rmse=err, converged=True,
                        iterations=EPNP_GN_ITERS, rotation=R)


# ------------------------------------------------------- yaw Gauss-Newton

def yaw_pose_residuals(params: np.ndarray, shape3d: np.ndarray, shape2d: np.ndarray, K: CameraIntrinsics,
                       weights: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Weighted residuals and analytic Jacobian at (yaw, tx, ty, tz).

    Returns:
        (2N,) residuals ordered (u0, v0, u1, v1, ...) and their (2N, 4) Jacobian
    """
    yaw, t = params[0], params[1:4]
    rotated = shape3d @ rotation_y(yaw).T
    cam = rotated + t
    Z = cam[:, 2]
    bad = np.flatnonzero(Z <= MIN_DEPTH)
    if bad.size:
        raise DegenerateDepth("iterate moved a part behind the camera", index=int(bad[0]))
    X, Y = cam[:, 0], cam[:, 1]
    u = K.fx * X / Z + K.cx
    v = K.fy * Y / Z + K.cy
    n = shape3d.shape[0]
    r = np.empty(2 * n)
    r[0::2] = u - shape2d[:, 0]
    r[1::2] = v - shape2d[:, 1]

    dP_dyaw = shape3d @ rotation_y_derivative(yaw).T
    du_dP = np.column_stack((K.fx / Z, np.zeros(n), -K.fx * X / Z ** 2))
    dv_dP = np.column_stack((np.zeros(n), K.fy / Z, -K.fy * Y / Z ** 2))
    J = np.empty((2 * n, 4))
    J[0::2, 0] = np.einsum('ij,ij->i', du_dP, dP_dyaw)
    J[1::2, 0] = np.einsum('ij,ij->i', dv_dP, dP_dyaw)
    J[0::2, 1:] = du_dP
    J[1::2, 1:] = dv_dP
    if weights is not None:
        s = np.repeat(np.sqrt(weights), 2)
        r = r * s
        J = J * s[:, None]
    return r, J


def refine_yaw_pose(shape3d, shape2d, K: CameraIntrinsics, init: Pose, opts: PnPOptions = PnPOptions(),
                    weights: Optional[np.ndarray] = None) -> PoseSolution:
    """
    Gauss-Newton over (yaw, tx, ty, tz) with Levenberg damping.

    Every part enters the residual; `weights` optionally scales the squared
    residual of each part. Steps that raise the cost or move a part behind
    the camera are retried with more damping.

    Args:
        shape3d: (N, 3) rescaled canonical shape
        shape2d: (N, 2) observed pixels
        K: Camera intrinsics
        init: Starting pose (tz > 0)
        opts: Iteration cap and step tolerance
        weights: Optional (N,) per-part weights

    Returns:
        PoseSolution; converged is False when the cap was hit
    """
    pts3, pts2 = _check_correspondences(shape3d, shape2d)
    if init.t[2] <= 0:
        raise BehindCamera(f"initial pose has tz={init.t[2]:.3g}")
    if weights is not None:
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if weights.shape[0] != pts3.shape[0]:
            raise ShapeMismatch(f"{weights.shape[0]} weights for {pts3.shape[0]} parts")
    x = np.array([init.yaw, *init.t])
    r, J = yaw_pose_residuals(x, pts3, pts2, K, weights)
    cost = float(r @ r)
    mu = 0.0
    converged = False
    iterations = 0
    for iterations in range(1, opts.max_iters + 1):
        H = J.T @ J
        g = J.T @ r
        accepted = False
        depth_failures = 0
        for _ in range(MAX_DAMPING_TRIES):
            try:
                step = -linalg.cho_solve(linalg.cho_factor(H + mu * np.diag(np.diag(H) + 1e-12)), g)
            except linalg.LinAlgError:
                mu = max(mu * 10.0, 1e-6)
                continue
            if np.linalg.norm(step) < opts.tol * (1.0 + np.linalg.norm(x)):
                x = x + step
                converged = True
                break
            candidate = x + step
            try:
                r_new, J_new = yaw_pose_residuals(candidate, pts3, pts2, K, weights)
            except DegenerateDepth:
                depth_failures += 1
                mu = max(mu * 10.0, 1e-4)
                continue
            cost_new = float(r_new @ r_new)
            if cost_new <= cost:
                x, r, J, cost = candidate, r_new, J_new, cost_new
                mu = mu / 10.0 if mu > 1e-12 else 0.0
                accepted = True
                break
            mu = max(mu * 10.0, 1e-4)
        if converged:
            break
        if not accepted:
            if depth_failures == MAX_DAMPING_TRIES:
                raise DegenerateDepth("every damped step moves a part behind the camera")
            # no damped step lowers the cost: at a minimum up to round-off
            converged = True
            break

    pose = Pose(normalize_angle(x[0]), tuple(x[1:]))
    rmse = _rmse(K, pose.rotation, pose.translation, pts3, pts2)
    solution = PoseSolution(pose=pose, reproj_rmse=rmse, converged=converged, iterations=iterations)
    if not converged:
        logger.warning(f"Yaw refinement hit {opts.max_iters} iterations (RMSE {rmse:.3g} px)")
        if opts.strict:
            raise NonConvergence(f"no convergence after {opts.max_iters} iterations", solution=solution)
    return solution


# ---------------------------------------------------------------- oracle

def _translation_for_yaw(yaw: float, pts3: np.ndarray, pts2: np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    q = pts3 @ rotation_y(yaw).T
    du = pts2[:, 0] - K.cx
    dv = pts2[:, 1] - K.cy
    n = pts3.shape[0]
    A = np.zeros((2 * n, 3))
    b = np.empty(2 * n)
    A[0::2, 0] = K.fx
    A[0::2, 2] = -du
    b[0::2] = du * q[:, 2] - K.fx * q[:, 0]
    A[1::2, 1] = K.fy
    A[1::2, 2] = -dv
    b[1::2] = dv * q[:, 2] - K.fy * q[:, 1]
    return linalg.lstsq(A, b)[0]


def _oracle_score(yaw: float, pts3, pts2, K) -> Tuple[float, np.ndarray]:
    t = _translation_for_yaw(yaw, pts3, pts2, K)
    return _rmse(K, rotation_y(yaw), t, pts3, pts2), t


def solve_pose_oracle(shape3d, shape2d, K: CameraIntrinsics, yaw_step: float) -> PoseSolution:
    """
    Brute-force yaw grid over (-pi, pi] with linear least-squares translation.

    Each yaw is scored by geometric reprojection RMSE; the grid minimizer is
    refined by one parabolic step through its two neighbours.
    """
    if yaw_step <= 0:
        raise ValidationError(f"yaw_step must be positive, got {yaw_step}")
    pts3, pts2 = _check_correspondences(shape3d, shape2d)
    n_grid = max(int(math.ceil(2.0 * math.pi / yaw_step)), 3)
    spacing = 2.0 * math.pi / n_grid
    yaws = -math.pi + spacing * np.arange(1, n_grid + 1)
    scored: List[Tuple[float, np.ndarray]] = [_oracle_score(y, pts3, pts2, K) for y in yaws]
    scores = np.array([s for s, _ in scored])
    k = int(np.argmin(scores))
    best_yaw, (best_score, best_t) = float(yaws[k]), scored[k]
    s_minus, s_plus = scores[(k - 1) % n_grid], scores[(k + 1) % n_grid]
    denom = s_minus - 2.0 * best_score + s_plus
    if math.isfinite(denom) and denom > 0:
        offset = float(np.clip(0.5 * (s_minus - s_plus) / denom, -0.5, 0.5))
        yaw = best_yaw + offset * spacing
        score, t = _oracle_score(yaw, pts3, pts2, K)
        if score < best_score:
            best_yaw, best_score, best_t = yaw, score, t
    if not math.isfinite(best_score):
        raise BehindCamera("no yaw on the grid places the shape in front of the camera")
    return PoseSolution(pose=Pose(best_yaw, tuple(best_t)), reproj_rmse=best_score, converged=True,
                        iterations=n_grid)


# -------------------------------------------------------------- pipeline

def part_weights(visible: Optional[np.ndarray], hidden_weight: float) -> Optional[np.ndarray]:
    """Per-part residual weights: 1 for visible parts, hidden_weight otherwise."""
    if visible is None or hidden_weight == 1.0:
        return None
    return np.where(np.asarray(visible, dtype=bool), 1.0, hidden_weight)


def solve_pose(shape3d, shape2d, K: CameraIntrinsics, opts: PnPOptions = PnPOptions(),
               visible: Optional[np.ndarray] = None) -> PoseSolution:
    """
    Full pose recovery.

    6-DoF mode returns the EPnP estimate. Yaw mode projects the EPnP
    estimate onto the yaw manifold (grid initialization when EPnP is not
    applicable) and refines it with Gauss-Newton.
    """
    pts3, pts2 = _check_correspondences(shape3d, shape2d)
    n = pts3.shape[0]
    if n < opts.required_points:
        raise DegenerateConfiguration(f"need at least {opts.required_points} correspondences, got {n}")
    if np.ptp(pts2, axis=0).max() < 1e-9:
        raise DegenerateConfiguration("all image points coincide")
    if opts.mode is PnPMode.FULL_6DOF:
        return solve_epnp(pts3, pts2, K)

    init: Optional[Pose] = None
    if n >= EPNP_MIN_POINTS:
        try:
            init = solve_epnp(pts3, pts2, K).pose
        except GeometryError as e:
            logger.debug(f"EPnP initialization failed ({e}); using yaw grid")
    if init is None or init.t[2] <= 0:
        init = solve_pose_oracle(pts3, pts2, K, opts.init_yaw_step).pose
    return refine_yaw_pose(pts3, pts2, K, init, opts, part_weights(visible, opts.hidden_weight))
