"""
Accuracy and precision metrics
Reprojection statistics, planar PnP and translation stability of the
camera-projector rig across board poses.
"""

import logging
import math
from itertools import combinations
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.spatial.transform import Rotation

from config import Config
from procam.distortion import DivisionModel, undistort_points
from procam.errors import (
    DegenerateConfiguration,
    DimensionMismatch,
    NonPositiveDepth,
    ProcamError,
)
from procam.geometry import (
    Intrinsics,
    RigidTransform,
    as_points2,
    board_to_3d,
    estimate_homography,
    nearest_rotation,
    project_points,
    rotation_angle_deg,
)
from procam.optimizer import LMConfig, levenberg_marquardt
from procam.structured_light import CorrespondenceSet

logger = logging.getLogger(__name__)


class DeviceReprojection(BaseModel):
    """Per-device reprojection error summary, pixels"""

    model_config = ConfigDict(frozen=True)

    mean_px: float
    rms_px: float
    max_px: float
    count: int


class ReprojectionStats(BaseModel):
    """Camera, projector and stereo reprojection errors"""

    model_config = ConfigDict(frozen=True)

    camera: DeviceReprojection
    projector: DeviceReprojection
    stereo_mean_px: float


class PoseEstimate(BaseModel):
    """Planar PnP outcome"""

    model_config = ConfigDict(frozen=True)

    transform: RigidTransform
    converged: bool
    iterations: int
    rms_px: float


class TranslationPrecision(BaseModel):
    """Spread of the procam translation over several board poses, mm"""

    model_config = ConfigDict(frozen=True)

    sigma_X: float
    sigma_Y: float
    sigma_Z: float
    sigma_T: float
    sigma_absT: float
    translations: List[Tuple[float, float, float]]
    abs_translations: List[float]
    pose_ids: List[int]
    skipped: List[int] = []
    rotation_spread_deg: float = 0.0


class PoseSetPrecision(BaseModel):
    """Translation spread of every pose subset with at least min_size members, mm"""

    model_config = ConfigDict(frozen=True)

    min_size: int
    subsets: List[Tuple[int, ...]]
    sigma_T: List[float]
    sigma_absT: List[float]

    @property
    def count(self) -> int:
        return len(self.subsets)

    def summary(self) -> dict:
        return {
            "min_size": self.min_size,
            "count": self.count,
            "sigma_T_mean": float(np.mean(self.sigma_T)),
            "sigma_T_max": float(np.max(self.sigma_T)),
            "sigma_absT_mean": float(np.mean(self.sigma_absT)),
            "sigma_absT_max": float(np.max(self.sigma_absT)),
        }


# ==================== Reprojection ====================


def point_errors(K: Intrinsics, dist: Optional[DivisionModel], rt: RigidTransform, board, observed) -> np.ndarray:
    """Euclidean distance between each observation and its projection"""
    board = as_points2(board)
    observed = as_points2(observed)
    if len(board) != len(observed):
        raise DimensionMismatch(f"{len(board)} board points vs {len(observed)} observations")
    if dist is not None:
        observed = undistort_points(dist, observed)
    projected = project_points(K, rt, board_to_3d(board))
    return np.linalg.norm(observed - projected, axis=1)


def summarize_errors(errors: np.ndarray) -> DeviceReprojection:
    errors = np.asarray(errors, dtype=float)
    return DeviceReprojection(
        mean_px=float(errors.mean()),
        rms_px=float(np.sqrt(np.mean(errors ** 2))),
        max_px=float(errors.max()),
        count=len(errors),
    )


def reprojection_error(K: Intrinsics, dist: Optional[DivisionModel], rt: RigidTransform, board, observed) -> DeviceReprojection:
    """
    Mean, RMS and max reprojection error of one device

    Camera observations are compared in undistorted coordinates when `dist`
    is given.
    """
    return summarize_errors(point_errors(K, dist, rt, board, observed))


def stereo_reprojection(K_c, dist, rt_c, K_p, rt_p, corr: CorrespondenceSet) -> float:
    """Mean of all camera and projector per-point errors"""
    cam = point_errors(K_c, dist, rt_c, corr.board, corr.camera)
    pro = point_errors(K_p, None, rt_p, corr.board, corr.projector)
    return float(np.concatenate([cam, pro]).mean())


def reprojection_stats(K_c, dist, rt_c, K_p, rt_p, corr: CorrespondenceSet) -> ReprojectionStats:
    cam = point_errors(K_c, dist, rt_c, corr.board, corr.camera)
    pro = point_errors(K_p, None, rt_p, corr.board, corr.projector)
    return ReprojectionStats(
        camera=summarize_errors(cam),
        projector=summarize_errors(pro),
        stereo_mean_px=float(np.concatenate([cam, pro]).mean()),
    )


# ==================== Planar PnP ====================


def pose_from_homography(K: Intrinsics, board: np.ndarray, image: np.ndarray) -> RigidTransform:
    """Board pose from the decomposition of the board->image homography under K"""
    H = estimate_homography(board, image).matrix
    M = np.linalg.inv(K.matrix) @ H
    scale = 1.0 / np.linalg.norm(M[:, 0])
    r1, r2, t = scale * M[:, 0], scale * M[:, 1], scale * M[:, 2]
    cx, cy = board.mean(axis=0)
    # keep the board in front of the device
    if (r1 * cx + r2 * cy + t)[2] < 0:
        r1, r2, t = -r1, -r2, -t
    R = nearest_rotation(np.column_stack([r1, r2, np.cross(r1, r2)]))
    return RigidTransform(rotation=R, translation=t)


def solve_planar_pose(K: Intrinsics, board, image, lm_config: LMConfig = None) -> PoseEstimate:
    """
    Pose of a planar board from undistorted image points

    Homography decomposition gives the starting pose, which LM then refines
    over a rotation-vector increment and the translation.

    Raises:
        DegenerateConfiguration: fewer than 4 points or collinear board points
    """
    board = as_points2(board)
    image = as_points2(image)
    if len(board) != len(image):
        raise DimensionMismatch(f"{len(board)} board points vs {len(image)} image points")
    if len(board) < 4:
        raise DegenerateConfiguration(f"planar PnP needs >= 4 points, got {len(board)}")
    lm_config = lm_config or Config.lm_config()

    initial = pose_from_homography(K, board, image)
    points = board_to_3d(board)
    R0 = initial.rotation

    def pose(x) -> RigidTransform:
        R = Rotation.from_rotvec(x[:3]).as_matrix() @ R0
        return RigidTransform(rotation=nearest_rotation(R), translation=x[3:])

    def residual_fn(x):
        try:
            return (project_points(K, pose(x), points) - image).ravel()
        except NonPositiveDepth:
            return np.full(2 * len(board), 1e6)

    result = levenberg_marquardt(residual_fn, np.concatenate([np.zeros(3), initial.translation]), lm_config)
    if not result.converged:
        logger.warning("planar PnP refinement: %s", result.reason)
    return PoseEstimate(
        transform=pose(result.x),
        converged=result.converged,
        iterations=result.iterations,
        rms_px=float(np.sqrt(result.cost / len(board))),
    )


def planar_pnp(K: Intrinsics, board, image, lm_config: LMConfig = None) -> RigidTransform:
    return solve_planar_pose(K, board, image, lm_config).transform


# ==================== Translation precision ====================


def procam_translation(K_c: Intrinsics, dist: Optional[DivisionModel], K_p: Intrinsics, corr: CorrespondenceSet) -> RigidTransform:
    """Camera -> projector transform from one pose via two planar PnP solves"""
    camera = corr.camera if dist is None else undistort_points(dist, corr.camera)
    rt_c = planar_pnp(K_c, corr.board, camera)
    rt_p = planar_pnp(K_p, corr.board, corr.projector)
    return rt_p.compose(rt_c.inverse())


def translation_precision(
    K_c: Intrinsics,
    dist: Optional[DivisionModel],
    K_p: Intrinsics,
    poses: Sequence[CorrespondenceSet],
) -> TranslationPrecision:
    """
    Sample standard deviations of the procam translation over poses

    Failed poses are skipped as long as two or more remain.

    Raises:
        ValueError: fewer than 2 poses supplied
        ProcamError: a PnP failure leaving fewer than 2 usable poses
    """
    if len(poses) < 2:
        raise ValueError(f"translation precision needs >= 2 poses, got {len(poses)}")

    translations, rotations, pose_ids, skipped = [], [], [], []
    last_error = None
    for i, corr in enumerate(poses):
        try:
            rt = procam_translation(K_c, dist, K_p, corr)
            translations.append(rt.translation)
            rotations.append(rt.rotation)
            pose_ids.append(i)
        except ProcamError as exc:
            logger.warning("pose %d skipped: %s", i, exc)
            skipped.append(i)
            last_error = exc
    if len(translations) < 2:
        raise last_error

    T = np.array(translations)
    abs_T = np.linalg.norm(T, axis=1)
    sigma = T.std(axis=0, ddof=1)
    sigma_T, sigma_absT = _translation_spread(T)
    return TranslationPrecision(
        sigma_X=float(sigma[0]),
        sigma_Y=float(sigma[1]),
        sigma_Z=float(sigma[2]),
        sigma_T=sigma_T,
        sigma_absT=sigma_absT,
        translations=[tuple(float(v) for v in t) for t in T],
        abs_translations=[float(v) for v in abs_T],
        pose_ids=pose_ids,
        skipped=skipped,
        rotation_spread_deg=max(rotation_angle_deg(rotations[0], R) for R in rotations),
    )


def _translation_spread(T: np.ndarray) -> Tuple[float, float]:
    """(sigma_T, sigma_|T|) of an (n, 3) stack of translations"""
    sigma = T.std(axis=0, ddof=1)
    return float(np.sqrt(np.sum(sigma ** 2))), float(np.linalg.norm(T, axis=1).std(ddof=1))


def pose_set_precision(precision: TranslationPrecision, min_size: int = 3) -> PoseSetPrecision:
    """
    sigma_T and sigma_|T| over every subset of the usable poses

    Subsets come from enumerate_pose_sets and are reported with the original
    pose ids, so skipped poses never appear.

    Raises:
        ValueError: fewer than min_size usable poses
    """
    T = np.array(precision.translations)
    subsets, sigma_T, sigma_absT = [], [], []
    for subset in enumerate_pose_sets(len(T), min_size):
        s_T, s_abs = _translation_spread(T[list(subset)])
        subsets.append(tuple(precision.pose_ids[i] for i in subset))
        sigma_T.append(s_T)
        sigma_absT.append(s_abs)
    return PoseSetPrecision(min_size=min_size, subsets=subsets, sigma_T=sigma_T, sigma_absT=sigma_absT)


# ==================== Pose sets ====================


def pose_set_count(n_poses: int, min_size: int = 3) -> int:
    """Number of pose subsets with at least min_size members"""
    if n_poses < min_size:
        raise ValueError(f"need n_poses >= min_size, got {n_poses} < {min_size}")
    return sum(math.comb(n_poses, i) for i in range(min_size, n_poses + 1))


def enumerate_pose_sets(n_poses: int, min_size: int = 3) -> List[Tuple[int, ...]]:
    """Pose-index subsets counted by pose_set_count, smallest first"""
    if n_poses < min_size:
        raise ValueError(f"need n_poses >= min_size, got {n_poses} < {min_size}")
    return [
        subset
        for size in range(min_size, n_poses + 1)
        for subset in combinations(range(n_poses), size)
    ]


def focal_error(estimated: float, truth: float) -> float:
    """|f_estimated - f_true| in pixels"""
    return abs(float(estimated) - float(truth))
