"""
Radial distortion with the two-parameter division model

    m = c + (m_hat - c) / (1 + k1 r^2 + k2 r^4),   r = |m_hat - c|

maps a distorted camera point m_hat to its undistorted position m. The module
also inverts the model, recovers the centre of distortion from the radial
fundamental matrix between distorted image points and board points, and
estimates (k1, k2) from a single board view.
"""

import logging
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy.optimize import brentq

from procam.errors import (
    DegenerateConfiguration,
    ModelSingularity,
    NoRealRoot,
    NonConvergence,
    RankDeficient,
)
from procam.geometry import (
    _isotropic_normalization,
    apply_homography,
    as_point2,
    as_points2,
    estimate_homography,
)
from procam.optimizer import LMConfig, levenberg_marquardt

logger = logging.getLogger(__name__)

MIN_DENOMINATOR = 1e-9
SINGULAR_SENTINEL = 1e6


class DivisionModel(BaseModel):
    """Division-model radial distortion about `center`"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    center: np.ndarray
    k1: float = 0.0
    k2: float = 0.0
    image_size: Optional[Tuple[int, int]] = None

    @field_validator("center", mode="before")
    @classmethod
    def _point(cls, v) -> np.ndarray:
        arr = as_point2(v).copy()
        arr.setflags(write=False)
        return arr

    def model_post_init(self, __context) -> None:
        if self.image_size is not None:
            self.validate_for(self.image_size)

    @classmethod
    def identity(cls, center) -> "DivisionModel":
        return cls(center=center)

    @property
    def is_identity(self) -> bool:
        return self.k1 == 0.0 and self.k2 == 0.0

    def denominator(self, r) -> np.ndarray:
        r2 = np.square(r)
        return 1.0 + self.k1 * r2 + self.k2 * r2 * r2

    def validate_for(self, image_size: Tuple[int, int]) -> None:
        """
        Check 1 + k1 r^2 + k2 r^4 > 0 for every r up to the image diagonal

        Raises:
            ModelSingularity: when the denominator reaches zero inside that range
        """
        width, height = image_size
        t_max = float(width) ** 2 + float(height) ** 2
        # the denominator is a quadratic in t = r^2
        candidates = [0.0, t_max]
        if self.k2 > 0 and -self.k1 / (2 * self.k2) < t_max:
            candidates.append(max(0.0, -self.k1 / (2 * self.k2)))
        worst = min(1.0 + self.k1 * t + self.k2 * t * t for t in candidates)
        if worst <= MIN_DENOMINATOR:
            raise ModelSingularity(
                f"k1={self.k1:.3e}, k2={self.k2:.3e} vanish inside the {width}x{height} image"
            )


class CenterEstimate(BaseModel):
    """Centre of distortion with conditioning metadata"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    center: Optional[np.ndarray]
    near_zero_distortion: bool
    conditioning: float
    singular_values: Tuple[float, ...]
    linear_center: Optional[np.ndarray] = None
    refined: bool = False


# ==================== Application and inversion ====================


def undistort_points(model: DivisionModel, points) -> np.ndarray:
    """
    Apply the division model to (N, 2) distorted points

    Raises:
        ModelSingularity: when any denominator <= 1e-9
    """
    pts = as_points2(points)
    offset = pts - model.center
    denom = model.denominator(np.linalg.norm(offset, axis=1))
    bad = np.flatnonzero(denom <= MIN_DENOMINATOR)
    if bad.size:
        raise ModelSingularity(f"division-model denominator vanishes at points {bad.tolist()}")
    return model.center + offset / denom[:, None]


def undistort_point(model: DivisionModel, p_distorted) -> np.ndarray:
    return undistort_points(model, as_point2(p_distorted))[0]


def _max_radius(model: DivisionModel, r_u: float) -> float:
    if model.image_size is not None:
        return 2.0 * float(np.hypot(*model.image_size))
    return 4.0 * r_u + 1.0


def _distorted_radius(model: DivisionModel, r_u: float, r_max: float) -> float:
    """Smallest r in (0, r_max] with r / (1 + k1 r^2 + k2 r^4) = r_u"""

    def g(r):
        return r - r_u * model.denominator(r)

    grid = np.linspace(0.0, r_max, 257)
    values = g(grid)
    crossings = np.flatnonzero(np.sign(values[:-1]) != np.sign(values[1:]))
    if crossings.size == 0:
        raise NoRealRoot(f"no distorted radius for undistorted radius {r_u:.6g} within {r_max:.6g}")
    i = crossings[0]
    if values[i + 1] == 0.0:
        return float(grid[i + 1])
    r = brentq(g, grid[i], grid[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)
    # Newton polish
    for _ in range(3):
        dg = 1.0 - r_u * (2.0 * model.k1 * r + 4.0 * model.k2 * r ** 3)
        if dg == 0.0:
            break
        r -= g(r) / dg
    return float(r)


def distort_points(model: DivisionModel, points) -> np.ndarray:
    """
    Numerical inverse of undistort_points

    Raises:
        NoRealRoot: when no admissible distorted radius exists for a point
    """
    pts = as_points2(points)
    if model.is_identity:
        return pts.copy()
    out = np.empty_like(pts)
    for i, p in enumerate(pts):
        offset = p - model.center
        r_u = float(np.hypot(*offset))
        if r_u == 0.0:
            out[i] = model.center
            continue
        r_d = _distorted_radius(model, r_u, _max_radius(model, r_u))
        out[i] = model.center + offset * (r_d / r_u)
    return out


def distort_point(model: DivisionModel, p_undistorted) -> np.ndarray:
    return distort_points(model, as_point2(p_undistorted))[0]


# ==================== Estimation ====================


def estimate_center_of_distortion(distorted, board, lm_config: LMConfig = None, refine: bool = True) -> CenterEstimate:
    """
    Centre of distortion as the left epipole of the radial fundamental matrix

    Distorted points, the centre and the ideal (homography-mapped) board points
    are collinear, so m_hat^T F m_b = 0 with F = [e]x H; e spans the null space
    of F^T. The linear epipole is noise-sensitive, so unless the view is flagged
    as near-zero distortion it seeds refine_center_of_distortion.

    Args:
        distorted: (N, 2) distorted camera points, N >= 9
        board: (N, 2) board points
        lm_config: optimizer settings for the refinement
        refine: skip the nonlinear refinement when False

    Raises:
        RankDeficient: when the design matrix has numerical rank < 8
    """
    x = as_points2(distorted)
    b = as_points2(board)
    if len(x) != len(b):
        raise DegenerateConfiguration("distorted and board point counts differ")
    if len(x) < 9:
        raise DegenerateConfiguration(f"centre of distortion needs >= 9 pairs, got {len(x)}")

    T_x = _isotropic_normalization(x)
    T_b = _isotropic_normalization(b)
    xh = np.column_stack([x, np.ones(len(x))]) @ T_x.T
    bh = np.column_stack([b, np.ones(len(b))]) @ T_b.T
    A = (xh[:, :, None] * bh[:, None, :]).reshape(len(x), 9)

    _, sv, Vt = np.linalg.svd(A, full_matrices=False)
    if len(sv) < 9:
        sv = np.concatenate([sv, np.zeros(9 - len(sv))])
    conditioning = float(sv[7] / sv[0])
    if conditioning < 1e-10:
        raise RankDeficient(f"radial fundamental design rank < 8 (s8/s1 = {conditioning:.2e})")

    Fn = Vt[-1].reshape(3, 3)
    U, s, V2 = np.linalg.svd(Fn)
    Fn = U @ np.diag([s[0], s[1], 0.0]) @ V2
    F = T_x.T @ Fn @ T_b

    _, _, Vf = np.linalg.svd(F.T)
    e = Vf[-1]
    # distortion signal must stand clear of the noise floor
    near_zero = sv[7] < 4.0 * sv[8] or conditioning < 1e-7
    center = None
    if abs(e[2]) > 1e-12:
        center = e[:2] / e[2]
    else:
        near_zero = True
    if near_zero:
        logger.warning("centre of distortion ill-conditioned (s8/s9 = %.3g)", sv[7] / max(sv[8], 1e-300))

    linear_center = center
    refined = False
    if refine and not near_zero:
        try:
            center = refine_center_of_distortion(x, b, linear_center, lm_config)
            refined = True
        except (NonConvergence, DegenerateConfiguration) as exc:
            logger.warning("keeping the linear centre of distortion: %s", exc)
    return CenterEstimate(
        center=center,
        near_zero_distortion=bool(near_zero),
        conditioning=conditioning,
        singular_values=tuple(float(v) for v in sv),
        linear_center=linear_center,
        refined=refined,
    )


def refine_center_of_distortion(distorted, board, center, lm_config: LMConfig = None) -> np.ndarray:
    """
    Joint LM over (c_x, c_y, k1, k2) on the homography-consistency residuals

    Starts from `center` with k1 = k2 = 0. The coefficients are carried in
    radius-normalised units and discarded; only the centre is returned.

    Raises:
        NonConvergence: when LM stops at its iteration limit or the centre
            leaves the bounding box of the points
    """
    x = as_points2(distorted)
    b = as_points2(board)
    center = as_point2(center)
    radius_scale = float(np.max(np.linalg.norm(x - center, axis=1)))
    if radius_scale <= 0:
        raise DegenerateConfiguration("all points sit on the centre of distortion")

    def model_for(params) -> DivisionModel:
        return DivisionModel(
            center=params[:2], k1=params[2] / radius_scale ** 2, k2=params[3] / radius_scale ** 4
        )

    def residuals(params):
        try:
            model = model_for(params)
            model.validate_for((1.5 * radius_scale, 0.0))
            return homography_consistency_residuals(model, x, b)
        except (ModelSingularity, DegenerateConfiguration):
            return np.full(2 * len(x), SINGULAR_SENTINEL)

    result = levenberg_marquardt(residuals, np.array([center[0], center[1], 0.0, 0.0]), lm_config)
    if not result.converged:
        raise NonConvergence(f"centre refinement: {result.reason} after {result.iterations} iterations")
    refined = result.x[:2]
    low, high = x.min(axis=0), x.max(axis=0)
    if np.any(refined < low) or np.any(refined > high):
        raise NonConvergence(f"centre refinement left the point cloud at ({refined[0]:.1f}, {refined[1]:.1f})")
    logger.info(
        "centre of distortion refined (%.2f, %.2f) -> (%.2f, %.2f)",
        center[0], center[1], refined[0], refined[1],
    )
    return refined.copy()


def homography_consistency_residuals(model: DivisionModel, distorted, board) -> np.ndarray:
    """
    Transfer residuals of the best board->image homography on undistorted points

    Undistorted points are rescaled to the RMS radius of the distorted points so
    that contracting every point towards the centre cannot shrink the score.
    """
    x = as_points2(distorted)
    undist = undistort_points(model, x)
    rms_d = np.sqrt(np.mean(np.sum((x - model.center) ** 2, axis=1)))
    rms_u = np.sqrt(np.mean(np.sum((undist - model.center) ** 2, axis=1)))
    scale = rms_d / rms_u if rms_u > 0 else 1.0
    undist = model.center + (undist - model.center) * scale
    H = estimate_homography(board, undist)
    return (apply_homography(H, as_points2(board)) - undist).ravel()


def estimate_division_coeffs(
    distorted,
    board,
    center,
    lm_config: LMConfig = None,
    image_size: Optional[Tuple[int, int]] = None,
) -> Tuple[float, float]:
    """
    Estimate (k1, k2) by nested DLT inside Levenberg-Marquardt

    For each candidate (k1, k2) all distorted points are undistorted, a
    board->image homography is fitted, and the transfer residuals are scored.
    The two coefficients are optimised in radius-normalised units.

    Raises:
        NonConvergence: when LM stops at its iteration limit
        ModelSingularity: when the solution violates the DivisionModel invariant
    """
    x = as_points2(distorted)
    b = as_points2(board)
    if len(x) != len(b):
        raise DegenerateConfiguration("distorted and board point counts differ")
    if len(x) < 8:
        raise DegenerateConfiguration(f"division coefficients need >= 8 pairs, got {len(x)}")
    center = as_point2(center)

    radius_scale = float(np.max(np.linalg.norm(x - center, axis=1)))
    if radius_scale <= 0:
        raise DegenerateConfiguration("all points sit on the centre of distortion")

    def unscale(kappa):
        return kappa[0] / radius_scale ** 2, kappa[1] / radius_scale ** 4

    def residuals(kappa):
        k1, k2 = unscale(kappa)
        model = DivisionModel(center=center, k1=k1, k2=k2)
        try:
            # admissible over the data radius and a margin around it
            model.validate_for((1.5 * radius_scale, 0.0))
            return homography_consistency_residuals(model, x, b)
        except (ModelSingularity, DegenerateConfiguration):
            return np.full(2 * len(x), SINGULAR_SENTINEL)

    result = levenberg_marquardt(residuals, np.zeros(2), lm_config)
    if not result.converged:
        raise NonConvergence(f"division coefficients: {result.reason} after {result.iterations} iterations")
    k1, k2 = unscale(result.x)
    model = DivisionModel(center=center, k1=k1, k2=k2)
    model.validate_for(image_size or (radius_scale, 0.0))
    logger.info(
        "division coefficients k1=%.4e k2=%.4e (cost %.3e -> %.3e px^2)",
        k1, k2, result.initial_cost, result.cost,
    )
    return k1, k2
