"""
Single-Pose Calibration
Camera and projector parameter sets optimised from one view of a planar
chessboard.

Each device is parameterised by its focal length, roll about the principal
axis and centre of projection O in board coordinates. The principal axis is
pinned to the board point where the device principal point lands, so the
device rotation follows from (Q, O, phi) and never enters the optimisation.
"""

import logging
from contextlib import contextmanager
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from config import Config
from procam.distortion import (
    DivisionModel,
    estimate_center_of_distortion,
    estimate_division_coeffs,
    undistort_points,
)
from procam.errors import (
    CalibrationStageError,
    DegenerateAxis,
    DegenerateConfiguration,
    GimbalLock,
    NonPositiveDepth,
    PointAtInfinity,
    ProcamError,
    RankDeficient,
)
from procam.geometry import (
    Homography,
    Intrinsics,
    RigidTransform,
    apply_homography,
    as_point2,
    as_point3,
    as_points2,
    board_to_3d,
    estimate_homography,
    project_points,
    rotation_about_z,
)
from procam.metrics import pose_from_homography, reprojection_stats
from procam.optimizer import LMConfig, LMResult, levenberg_marquardt
from procam.structured_light import CorrespondenceSet

logger = logging.getLogger(__name__)

RESIDUAL_SENTINEL = 1e6
MIN_AXIS_LENGTH = 1e-6
SEED_CONDITION_LIMIT = 1e10
# plausible focal lengths, in image diagonals
FOCAL_RANGE = (0.2, 5.0)
MAX_STANDOFF_WIDTHS = 50.0


# ==================== Parameter sets ====================


class CameraParamSet(BaseModel):
    """theta_c = {f_c, alpha_c, phi_c, O_c}"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    f: float
    alpha: float = 1.0
    phi: float = 0.0
    origin: np.ndarray

    @field_validator("f", "alpha")
    @classmethod
    def _positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("must be positive")
        return v

    @field_validator("origin", mode="before")
    @classmethod
    def _origin_off_board(cls, v) -> np.ndarray:
        arr = as_point3(v)
        if arr[2] == 0:
            raise ValueError("centre of projection cannot lie on the board plane")
        return arr

    def to_vector(self) -> np.ndarray:
        return np.array([self.f, self.alpha, self.phi, *self.origin])

    @classmethod
    def from_vector(cls, x) -> "CameraParamSet":
        return cls(f=x[0], alpha=x[1], phi=x[2], origin=x[3:6])


class ProjectorParamSet(BaseModel):
    """theta_p = {f_p, v0_p, phi_p, O_p}"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    f: float
    v0: float
    phi: float = 0.0
    origin: np.ndarray

    @field_validator("f")
    @classmethod
    def _positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("must be positive")
        return v

    @field_validator("origin", mode="before")
    @classmethod
    def _origin_off_board(cls, v) -> np.ndarray:
        arr = as_point3(v)
        if arr[2] == 0:
            raise ValueError("centre of projection cannot lie on the board plane")
        return arr

    def to_vector(self) -> np.ndarray:
        return np.array([self.f, self.v0, self.phi, *self.origin])

    @classmethod
    def from_vector(cls, x) -> "ProjectorParamSet":
        return cls(f=x[0], v0=x[1], phi=x[2], origin=x[3:6])


class DeviceDiagnostics(BaseModel):
    """Optimizer outcome and warnings for one device path"""

    iterations: int = 0
    converged: bool = True
    reason: str = ""
    initial_cost: float = 0.0
    cost: float = 0.0
    final_lambda: float = 0.0
    reprojection_mean_px: float = 0.0
    reprojection_rms_px: float = 0.0
    warnings: List[str] = []
    extra: Dict[str, object] = {}


class CalibrationResult(BaseModel):
    """Everything recovered from one board pose"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    K_c: Intrinsics
    distortion: DivisionModel
    K_p: Intrinsics
    rt_c: RigidTransform
    rt_p: RigidTransform
    rt_procam: RigidTransform
    camera_params: CameraParamSet
    projector_params: ProjectorParamSet
    camera_diagnostics: DeviceDiagnostics
    projector_diagnostics: DeviceDiagnostics
    residuals: Dict[str, float]

    @property
    def converged(self) -> bool:
        return self.camera_diagnostics.converged and self.projector_diagnostics.converged

    @property
    def warnings(self) -> List[str]:
        return self.camera_diagnostics.warnings + self.projector_diagnostics.warnings

    @property
    def baseline_mm(self) -> float:
        return float(np.linalg.norm(self.rt_procam.translation))


# ==================== Principal-axis geometry ====================


def board_principal_projection(H_device_to_board: Homography, principal_point) -> np.ndarray:
    """
    Board point hit by the device principal axis

    Raises:
        PointAtInfinity: when the principal point maps to infinity
    """
    x, y = apply_homography(H_device_to_board, as_point2(principal_point))
    return np.array([x, y, 0.0])


def principal_axis_frame(Q, O, phi: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Device frame whose z-axis runs from O through Q

    Args:
        Q: board point on the principal axis
        O: centre of projection
        phi: roll about the principal axis, degrees

    Returns:
        (A, A_dev) with A_dev = A @ R_Z(phi)

    Raises:
        DegenerateAxis: when |Q - O| <= 1e-6 mm or the axis is parallel to board x
    """
    Z = as_point3(Q) - as_point3(O)
    z_norm = np.linalg.norm(Z)
    if z_norm <= MIN_AXIS_LENGTH:
        raise DegenerateAxis(f"|Q - O| = {z_norm:.3e} mm")
    Y = np.cross(Z, [1.0, 0.0, 0.0])
    y_norm = np.linalg.norm(Y)
    if y_norm < 1e-9 * z_norm:
        raise DegenerateAxis("principal axis parallel to the board x-axis")
    X = np.cross(Y, Z)
    A = np.column_stack([X / np.linalg.norm(X), Y / y_norm, Z / z_norm])
    return A, A @ rotation_about_z(phi)


def extrinsics_from_frame(A_dev, O) -> RigidTransform:
    """R = A_dev^T, T = -A_dev^T O"""
    A_dev = np.asarray(A_dev, dtype=float)
    return RigidTransform(rotation=A_dev.T, translation=-A_dev.T @ as_point3(O))


def roll_from_extrinsics(rt: RigidTransform, Q) -> float:
    """phi such that principal_axis_frame(Q, rt.center, phi) reproduces rt"""
    A, _ = principal_axis_frame(Q, rt.center, 0.0)
    Rz = A.T @ rt.rotation.T
    return float(np.degrees(np.arctan2(Rz[1, 0], Rz[0, 0])))


def compose_procam_extrinsics(rt_c: RigidTransform, rt_p: RigidTransform) -> RigidTransform:
    """Camera frame -> projector frame: R = R_p R_c^T, T = T_p - R T_c"""
    return rt_p.compose(rt_c.inverse())


# ==================== Residuals ====================


def _project_device(K: Intrinsics, Q, O, phi: float, board) -> Tuple[np.ndarray, RigidTransform]:
    _, A_dev = principal_axis_frame(Q, O, phi)
    rt = extrinsics_from_frame(A_dev, O)
    return project_points(K, rt, board_to_3d(board)), rt


def _sentinel(n: int) -> np.ndarray:
    return np.full(2 * n, RESIDUAL_SENTINEL)


def camera_residuals(theta: CameraParamSet, fixed, board, observed_undistorted, C_oB) -> np.ndarray:
    """
    m_i - projection of board corner i under theta_c, as a (2N,) vector in px

    Args:
        theta: camera parameter set
        fixed: (u0_c, v0_c), the centre of distortion
        board: (N, 2) board points
        observed_undistorted: (N, 2) undistorted camera points
        C_oB: board point under the camera principal point, held constant

    Degenerate geometry yields residuals of 1e6 instead of raising.
    """
    board = as_points2(board)
    observed = as_points2(observed_undistorted)
    u0, v0 = as_point2(fixed)
    try:
        K = Intrinsics(f=theta.f, alpha=theta.alpha, u0=u0, v0=v0)
        projected, _ = _project_device(K, C_oB, theta.origin, theta.phi, board)
    except (DegenerateAxis, NonPositiveDepth, ValueError):
        return _sentinel(len(board))
    return (observed - projected).ravel()


def projector_residuals(theta: ProjectorParamSet, u0_p: float, H_P_to_B: Homography, board, observed) -> np.ndarray:
    """
    Projector counterpart of camera_residuals with alpha_p = 1

    P_oB is recomputed from (u0_p, v0_p) on every call because v0_p is free;
    it therefore slides along a line of the board plane.
    """
    board = as_points2(board)
    observed = as_points2(observed)
    try:
        P_oB = board_principal_projection(H_P_to_B, (u0_p, theta.v0))
        K = Intrinsics(f=theta.f, alpha=1.0, u0=u0_p, v0=theta.v0)
        projected, _ = _project_device(K, P_oB, theta.origin, theta.phi, board)
    except (DegenerateAxis, NonPositiveDepth, PointAtInfinity, ValueError):
        return _sentinel(len(board))
    return (observed - projected).ravel()


# ==================== Initial values ====================


def initial_values(camera_dims, projector_dims, board_width_mm: float) -> Tuple[CameraParamSet, ProjectorParamSet]:
    """
    Starting parameter sets from image sizes and board width

    f from the image diagonal, alpha_c = 1, phi = 0, O = (0, 0, 2 w_b) and
    v0_p at half the projector height.
    """
    cw, ch = camera_dims
    pw, ph = projector_dims
    if min(cw, ch, pw, ph) <= 0 or board_width_mm <= 0:
        raise ValueError("dimensions must be positive")
    origin = np.array([0.0, 0.0, 2.0 * board_width_mm])
    camera = CameraParamSet(f=float(np.hypot(cw, ch)), alpha=1.0, phi=0.0, origin=origin)
    projector = ProjectorParamSet(f=float(np.hypot(pw, ph)), v0=ph / 2.0, phi=0.0, origin=origin)
    return camera, projector


def viewing_side(H_board_to_image: Homography, board) -> float:
    """
    -1 when the device looks at the board from its negative-z side, +1 otherwise

    Seen from -z the board maps to the image without mirroring, so the sign of
    the homography Jacobian at the board centroid gives the side.
    """
    cx, cy = as_points2(board).mean(axis=0)
    M = H_board_to_image.matrix
    w = M[2, 0] * cx + M[2, 1] * cy + M[2, 2]
    jacobian = np.linalg.det(M) / w ** 3
    return -1.0 if jacobian > 0 else 1.0


def _place_origin(origin: np.ndarray, side: float) -> np.ndarray:
    return np.array([origin[0], origin[1], side * abs(origin[2])])


# ==================== Homography seeds ====================


def _normalized_columns(H_board_to_image: Homography, principal_point, scale: float) -> Tuple[np.ndarray, np.ndarray]:
    """First two homography columns with the principal point at the origin, in units of `scale` px"""
    u0, v0 = as_point2(principal_point)
    shift = np.array([[1.0, 0.0, -u0], [0.0, 1.0, -v0], [0.0, 0.0, 1.0]]) / scale
    shift[2, 2] = 1.0
    M = shift @ H_board_to_image.matrix
    M = M / np.linalg.norm(M[:, :2])
    return M[:, 0], M[:, 1]


def _solve_seed_system(A: np.ndarray, rhs: np.ndarray) -> Optional[np.ndarray]:
    if not np.all(np.isfinite(A)) or np.linalg.cond(A) > SEED_CONDITION_LIMIT:
        return None
    return np.linalg.solve(A, rhs)


def camera_focal_seed(H_board_to_image: Homography, principal_point, image_dims) -> Optional[Tuple[float, float]]:
    """
    Closed-form (f, alpha) from one board homography with the principal point known

    The first two columns of K^-1 H must be orthogonal and of equal length,
    which is linear in 1/f_x^2 and 1/f_y^2.

    Returns:
        (f, alpha), or None when the pose leaves the system singular
        (rotation about a single image axis) or the roots are not positive
    """
    scale = float(np.hypot(*image_dims))
    (a1, b1, c1), (a2, b2, c2) = _normalized_columns(H_board_to_image, principal_point, scale)
    A = np.array([[a1 * a2, b1 * b2], [a1 ** 2 - a2 ** 2, b1 ** 2 - b2 ** 2]])
    rhs = -np.array([c1 * c2, c1 ** 2 - c2 ** 2])
    solution = _solve_seed_system(A, rhs)
    if solution is None or np.any(solution <= 0):
        return None
    x, y = solution
    return scale / float(np.sqrt(x)), float(np.sqrt(x / y))


def projector_focal_seed(H_board_to_image: Homography, u0: float, image_dims) -> Optional[Tuple[float, float]]:
    """
    Closed-form (f, v0) from one board homography with u0 known and alpha = 1

    Orthogonality and equal length of the back-projected columns are linear
    in v0 and w = v0^2 + f^2.

    Returns:
        (f, v0), or None when the system is singular (no rotation about the
        vertical axis) or f^2 <= 0
    """
    scale = float(np.hypot(*image_dims))
    (a1, b1, c1), (a2, b2, c2) = _normalized_columns(H_board_to_image, (u0, 0.0), scale)
    A = np.array(
        [
            [-(b1 * c2 + c1 * b2), c1 * c2],
            [-2.0 * (b1 * c1 - b2 * c2), c1 ** 2 - c2 ** 2],
        ]
    )
    rhs = -np.array([a1 * a2 + b1 * b2, a1 ** 2 + b1 ** 2 - a2 ** 2 - b2 ** 2])
    solution = _solve_seed_system(A, rhs)
    if solution is None:
        return None
    v0, w = solution
    f_squared = w - v0 ** 2
    if f_squared <= 0:
        return None
    return scale * float(np.sqrt(f_squared)), scale * float(v0)


def _seed_pose(K: Intrinsics, board, image, H_image_to_board: Homography) -> Optional[Tuple[float, np.ndarray]]:
    """(phi, O) of the pose decomposed from the homography under K"""
    try:
        rt = pose_from_homography(K, as_points2(board), as_points2(image))
        Q = board_principal_projection(H_image_to_board, K.principal_point)
        phi = roll_from_extrinsics(rt, Q)
    except (ProcamError, ValueError, np.linalg.LinAlgError):
        return None
    origin = rt.center
    if not np.all(np.isfinite(origin)) or origin[2] == 0:
        return None
    return phi, origin


def is_plausible_solution(f: float, origin, image_dims, board_width_mm: float) -> bool:
    """
    False when the solve slid towards the orthographic limit

    f must stay within FOCAL_RANGE image diagonals and the centre of projection
    within MAX_STANDOFF_WIDTHS board widths.
    """
    diagonal = float(np.hypot(*image_dims))
    low, high = FOCAL_RANGE
    if not (low * diagonal < f < high * diagonal):
        return False
    return float(np.linalg.norm(as_point3(origin))) < MAX_STANDOFF_WIDTHS * board_width_mm


def solve_from_starts(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    starts: Dict[str, np.ndarray],
    plausible: Callable[[np.ndarray], bool],
    lm_config: LMConfig,
    device: str,
) -> Tuple[LMResult, str]:
    """
    Run LM from every start and keep the lowest-cost plausible result

    Ties go to the earlier start. When no result is plausible the cheapest
    one is returned flagged as not converged with reason "diverged".
    """
    ranked = []
    for order, (label, x0) in enumerate(starts.items()):
        result = levenberg_marquardt(residual_fn, x0, lm_config)
        ok = plausible(result.x)
        logger.debug(
            "%s: start %s -> cost %.3e (%s, plausible=%s)", device, label, result.cost, result.reason, ok
        )
        ranked.append(((not ok, result.cost, order), label, result, ok))
    ranked.sort(key=lambda item: item[0])
    _, label, result, ok = ranked[0]
    if not ok:
        logger.warning("%s: every start diverged (best f = %.4g)", device, result.x[0])
        result = result.model_copy(update={"converged": False, "reason": "diverged"})
    return result, label


# ==================== Pipeline helpers ====================


@contextmanager
def _stage(label: str):
    try:
        yield
    except CalibrationStageError:
        raise
    except (ProcamError, ValueError) as exc:
        raise CalibrationStageError(label, exc) from exc


def _diagnostics(result: LMResult, residual: np.ndarray, warnings: List[str], **extra) -> DeviceDiagnostics:
    errors = np.linalg.norm(residual.reshape(-1, 2), axis=1)
    if not result.converged:
        warnings.append(f"NonConvergence: {result.reason} after {result.iterations} iterations")
    return DeviceDiagnostics(
        iterations=result.iterations,
        converged=result.converged,
        reason=result.reason,
        initial_cost=result.initial_cost,
        cost=result.cost,
        final_lambda=result.final_lambda,
        reprojection_mean_px=float(errors.mean()),
        reprojection_rms_px=float(np.sqrt(np.mean(errors ** 2))),
        warnings=warnings,
        extra=extra,
    )


def _pose_quality(rt: RigidTransform, device: str) -> List[str]:
    try:
        euler = rt.euler
    except GimbalLock:
        return [f"{device}: pose at gimbal lock, angles not reported"]
    if device == "camera":
        tilt = abs(euler.psi) + abs(euler.nu)
        limit = Config.get_threshold("camera_min_tilt")
        if tilt < limit:
            msg = f"camera: near-frontal pose (|psi|+|nu| = {tilt:.1f} deg < {limit:g}); focal length may be inaccurate"
            logger.warning(msg)
            return [msg]
    else:
        limit = Config.get_threshold("projector_min_nu")
        if abs(euler.nu) < limit:
            msg = f"projector: low nu rotation (|nu| = {abs(euler.nu):.1f} deg < {limit:g}); focal length may be inaccurate"
            logger.warning(msg)
            return [msg]
    return []


# ==================== Device paths ====================


def calibrate_camera(
    corr: CorrespondenceSet,
    lm_config: LMConfig = None,
    center_override=None,
) -> Tuple[Intrinsics, DivisionModel, RigidTransform, DeviceDiagnostics]:
    """
    Camera path: distortion centre -> coefficients -> undistort -> homography
    -> principal-axis point -> LM over theta_c -> extrinsics

    Args:
        corr: correspondence set of one pose, N >= 9
        lm_config: optimizer settings (configured defaults when None)
        center_override: fixed centre of distortion / principal point

    Returns:
        (K_c, distortion, rt_c, diagnostics); u0, v0 of K_c equal the centre

    Raises:
        CalibrationStageError: labelled failure of a sub-operation
    """
    lm_config = lm_config or Config.lm_config()
    warnings: List[str] = []
    distorted = corr.camera
    width, height = corr.camera_size
    if len(corr) < 9:
        raise CalibrationStageError(
            "camera/distortion-center",
            DegenerateConfiguration(f"camera calibration needs >= 9 corners, got {len(corr)}"),
        )

    fallback = False
    extra = {}
    if center_override is not None:
        center = as_point2(center_override)
        extra["center_source"] = "override"
    else:
        with _stage("camera/distortion-center"):
            try:
                estimate = estimate_center_of_distortion(distorted, corr.board, lm_config)
                fallback = estimate.near_zero_distortion
                extra["center_conditioning"] = estimate.conditioning
            except RankDeficient:
                fallback = True
        if fallback:
            center = np.array([width / 2.0, height / 2.0])
            warnings.append("NearZeroDistortion: using image centre and k1 = k2 = 0")
            logger.warning("near-zero distortion, falling back to the image centre")
            extra["center_source"] = "image-centre"
        else:
            center = estimate.center
            extra["center_source"] = "estimated"

    if fallback:
        distortion = DivisionModel(center=center)
    else:
        with _stage("camera/distortion-coefficients"):
            k1, k2 = estimate_division_coeffs(distorted, corr.board, center, lm_config, corr.camera_size)
            distortion = DivisionModel(center=center, k1=k1, k2=k2)

    with _stage("camera/homography"):
        undistorted = undistort_points(distortion, distorted)
        H_cb = estimate_homography(undistorted, corr.board)
        C_oB = board_principal_projection(H_cb, center)

    cam0, _ = initial_values(corr.camera_size, corr.projector_size, corr.board_width_mm)
    side = viewing_side(H_cb.inverse(), corr.board)
    theta0 = cam0.to_vector()
    theta0[3:6] = _place_origin(cam0.origin, side)

    starts = {"initial": theta0}
    seed = camera_focal_seed(H_cb.inverse(), center, corr.camera_size)
    if seed is not None:
        f_seed, alpha_seed = seed
        K_seed = Intrinsics(f=f_seed, alpha=alpha_seed, u0=center[0], v0=center[1])
        pose = _seed_pose(K_seed, corr.board, undistorted, H_cb)
        if pose is not None:
            starts["homography"] = np.array([f_seed, alpha_seed, pose[0], *pose[1]])

    def residual_fn(x):
        try:
            theta = CameraParamSet.from_vector(x)
        except ValueError:
            return _sentinel(len(corr))
        return camera_residuals(theta, center, corr.board, undistorted, C_oB)

    def plausible(x):
        return is_plausible_solution(x[0], x[3:6], corr.camera_size, corr.board_width_mm)

    with _stage("camera/lm"):
        result, start = solve_from_starts(residual_fn, starts, plausible, lm_config, "camera")
        extra["start"] = start
        theta = CameraParamSet.from_vector(result.x)
        K_c = Intrinsics(f=theta.f, alpha=theta.alpha, u0=center[0], v0=center[1])
        _, A_dev = principal_axis_frame(C_oB, theta.origin, theta.phi)
        rt_c = extrinsics_from_frame(A_dev, theta.origin)

    warnings.extend(_pose_quality(rt_c, "camera"))
    extra.update({"C_oB": C_oB.tolist(), "params": theta.to_vector().tolist()})
    diagnostics = _diagnostics(result, residual_fn(result.x), warnings, **extra)
    logger.info(
        "camera: f=%.3f alpha=%.5f after %d iterations (rms %.3e px)",
        K_c.f, K_c.alpha, result.iterations, diagnostics.reprojection_rms_px,
    )
    return K_c, distortion, rt_c, diagnostics


def calibrate_projector(
    corr: CorrespondenceSet,
    projector_dims: Tuple[int, int] = None,
    lm_config: LMConfig = None,
) -> Tuple[Intrinsics, RigidTransform, DeviceDiagnostics]:
    """
    Projector path: homography -> LM over theta_p -> extrinsics

    u0_p stays at half the projector width and alpha_p at 1.

    Raises:
        CalibrationStageError: labelled failure of a sub-operation
    """
    lm_config = lm_config or Config.lm_config()
    projector_dims = projector_dims or corr.projector_size
    u0_p = projector_dims[0] / 2.0
    warnings: List[str] = []

    with _stage("projector/homography"):
        H_pb = estimate_homography(corr.projector, corr.board)

    _, pro0 = initial_values(corr.camera_size, projector_dims, corr.board_width_mm)
    side = viewing_side(H_pb.inverse(), corr.board)
    theta0 = pro0.to_vector()
    theta0[3:6] = _place_origin(pro0.origin, side)

    starts = {"initial": theta0}
    seed = projector_focal_seed(H_pb.inverse(), u0_p, projector_dims)
    if seed is not None:
        f_seed, v0_seed = seed
        K_seed = Intrinsics(f=f_seed, alpha=1.0, u0=u0_p, v0=v0_seed)
        pose = _seed_pose(K_seed, corr.board, corr.projector, H_pb)
        if pose is not None:
            starts["homography"] = np.array([f_seed, v0_seed, pose[0], *pose[1]])

    def residual_fn(x):
        try:
            theta = ProjectorParamSet.from_vector(x)
        except ValueError:
            return _sentinel(len(corr))
        return projector_residuals(theta, u0_p, H_pb, corr.board, corr.projector)

    def plausible(x):
        return is_plausible_solution(x[0], x[3:6], projector_dims, corr.board_width_mm)

    with _stage("projector/lm"):
        result, start = solve_from_starts(residual_fn, starts, plausible, lm_config, "projector")
        theta = ProjectorParamSet.from_vector(result.x)
        K_p = Intrinsics(f=theta.f, alpha=1.0, u0=u0_p, v0=theta.v0)
        P_oB = board_principal_projection(H_pb, (u0_p, theta.v0))
        _, A_dev = principal_axis_frame(P_oB, theta.origin, theta.phi)
        rt_p = extrinsics_from_frame(A_dev, theta.origin)

    warnings.extend(_pose_quality(rt_p, "projector"))
    diagnostics = _diagnostics(
        result, residual_fn(result.x), warnings,
        P_oB=P_oB.tolist(), params=theta.to_vector().tolist(), start=start,
    )
    logger.info(
        "projector: f=%.3f v0=%.3f after %d iterations (rms %.3e px)",
        K_p.f, K_p.v0, result.iterations, diagnostics.reprojection_rms_px,
    )
    return K_p, rt_p, diagnostics


def calibrate_procam(
    corr: CorrespondenceSet,
    lm_config: LMConfig = None,
    center_override=None,
) -> CalibrationResult:
    """
    Run the camera and projector paths and compose the procam extrinsics

    Returns:
        CalibrationResult; non-convergence is flagged in diagnostics, not raised
    """
    K_c, distortion, rt_c, cam_diag = calibrate_camera(corr, lm_config, center_override)
    K_p, rt_p, pro_diag = calibrate_projector(corr, corr.projector_size, lm_config)
    rt_procam = compose_procam_extrinsics(rt_c, rt_p)

    stats = reprojection_stats(K_c, distortion, rt_c, K_p, rt_p, corr)
    residuals = {
        "camera_mean_px": stats.camera.mean_px,
        "camera_rms_px": stats.camera.rms_px,
        "camera_max_px": stats.camera.max_px,
        "projector_mean_px": stats.projector.mean_px,
        "projector_rms_px": stats.projector.rms_px,
        "projector_max_px": stats.projector.max_px,
        "stereo_mean_px": stats.stereo_mean_px,
    }
    return CalibrationResult(
        K_c=K_c,
        distortion=distortion,
        K_p=K_p,
        rt_c=rt_c,
        rt_p=rt_p,
        rt_procam=rt_procam,
        camera_params=CameraParamSet.from_vector(cam_diag.extra["params"]),
        projector_params=ProjectorParamSet.from_vector(pro_diag.extra["params"]),
        camera_diagnostics=cam_diag,
        projector_diagnostics=pro_diag,
        residuals=residuals,
    )
