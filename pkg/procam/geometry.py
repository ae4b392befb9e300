"""
Geometry Core
Pinhole projection, rigid transforms, rotations and planar homographies
shared by every other module.

Conventions:
  - Point2 is a float array (2,) in pixels or board millimetres; point lists are (N, 2).
  - Point3 is a float array (3,) in millimetres.
  - A RigidTransform maps board coordinates into a device frame: M_dev = R @ M + T.
  - Angles are stored in degrees; Euler angles are intrinsic X, then Y, then Z,
    so R = R_X(psi) @ R_Y(nu) @ R_Z(phi).
"""

from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, PositiveFloat, field_validator, model_validator
from scipy.spatial.transform import Rotation

from procam.errors import (
    DegenerateConfiguration,
    GimbalLock,
    NonPositiveDepth,
    PointAtInfinity,
)

ROTATION_TOL = 1e-9
MIN_DEPTH = 1e-9
MIN_HOMOGENEOUS_W = 1e-12


def as_point2(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float).reshape(2)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"Point2 must be finite, got {arr}")
    return arr


def as_point3(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float).reshape(3)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"Point3 must be finite, got {arr}")
    return arr


def as_points2(points) -> np.ndarray:
    """Coerce a list of 2D points to an (N, 2) float array"""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1 and arr.size == 2:
        arr = arr.reshape(1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"Expected an (N, 2) point array, got shape {arr.shape}")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def check_rotation(R) -> np.ndarray:
    """
    Validate a rotation matrix

    Raises:
        ValueError: when columns are not orthonormal or det != +1 (tolerance 1e-9)
    """
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError(f"Rotation must be 3x3, got {R.shape}")
    if not np.all(np.isfinite(R)):
        raise ValueError("Rotation has non-finite entries")
    ortho = np.max(np.abs(R.T @ R - np.eye(3)))
    if ortho >= ROTATION_TOL:
        raise ValueError(f"Rotation columns not orthonormal (deviation {ortho:.3e})")
    det = np.linalg.det(R)
    if abs(det - 1.0) > ROTATION_TOL:
        raise ValueError(f"Rotation determinant {det!r} is not +1")
    return R


def nearest_rotation(M) -> np.ndarray:
    """Project a 3x3 matrix onto SO(3) in the Frobenius sense"""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


# ==================== Domain Types ====================


class Intrinsics(BaseModel):
    """Pinhole intrinsics {f, alpha, u0, v0}"""

    model_config = ConfigDict(frozen=True)

    f: PositiveFloat
    alpha: PositiveFloat = 1.0
    u0: float
    v0: float

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.f, 0.0, self.u0],
                [0.0, self.alpha * self.f, self.v0],
                [0.0, 0.0, 1.0],
            ]
        )

    @property
    def principal_point(self) -> np.ndarray:
        return np.array([self.u0, self.v0])

    @classmethod
    def from_matrix(cls, K) -> "Intrinsics":
        K = np.asarray(K, dtype=float)
        return cls(f=K[0, 0], alpha=K[1, 1] / K[0, 0], u0=K[0, 2], v0=K[1, 2])


class EulerAnglesXYZ(BaseModel):
    """Intrinsic XYZ Euler angles in degrees, each in (-180, 180]"""

    model_config = ConfigDict(frozen=True)

    psi: float = 0.0
    nu: float = 0.0
    phi: float = 0.0

    @field_validator("psi", "nu", "phi")
    @classmethod
    def _in_range(cls, v: float) -> float:
        if not (-180.0 < v <= 180.0):
            raise ValueError(f"angle {v} outside (-180, 180]")
        return v

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.psi, self.nu, self.phi)


class RigidTransform(BaseModel):
    """Rotation + translation mapping board coordinates into a device frame"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    rotation: np.ndarray
    translation: np.ndarray

    @field_validator("rotation", mode="before")
    @classmethod
    def _valid_rotation(cls, v) -> np.ndarray:
        return _frozen(check_rotation(v))

    @field_validator("translation", mode="before")
    @classmethod
    def _valid_translation(cls, v) -> np.ndarray:
        return _frozen(as_point3(v))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(rotation=np.eye(3), translation=np.zeros(3))

    @property
    def matrix(self) -> np.ndarray:
        """3x4 [R|T]"""
        return np.hstack([self.rotation, self.translation.reshape(3, 1)])

    @property
    def center(self) -> np.ndarray:
        """Device centre of projection in board coordinates, O = -R^T T"""
        return -self.rotation.T @ self.translation

    @property
    def euler(self) -> EulerAnglesXYZ:
        return matrix_to_euler_xyz(self.rotation)

    def apply(self, points) -> np.ndarray:
        """Map (N, 3) or (3,) points into the device frame"""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        return RigidTransform(rotation=self.rotation.T, translation=self.center)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other"""
        return RigidTransform(
            rotation=nearest_rotation(self.rotation @ other.rotation),
            translation=self.rotation @ other.translation + self.translation,
        )


class Homography(BaseModel):
    """
    Planar projective map in canonical form.

    The canonical form divides by the bottom-right entry; when that entry is
    below 1e-12 in magnitude the matrix is Frobenius-normalised instead and
    `affine_canonical` is False.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    matrix: np.ndarray
    affine_canonical: bool = True

    @model_validator(mode="before")
    @classmethod
    def _canonicalize(cls, data):
        if isinstance(data, dict) and "matrix" in data:
            M = np.asarray(data["matrix"], dtype=float)
            if M.shape != (3, 3) or not np.all(np.isfinite(M)):
                raise ValueError("Homography must be a finite 3x3 matrix")
            if np.linalg.matrix_rank(M) < 3:
                raise ValueError("Homography must have rank 3")
            if abs(M[2, 2]) >= MIN_HOMOGENEOUS_W:
                M = M / M[2, 2]
                canonical = True
            else:
                M = M / np.linalg.norm(M)
                canonical = False
            data = {**data, "matrix": _frozen(M), "affine_canonical": canonical}
        return data

    @classmethod
    def from_matrix(cls, M) -> "Homography":
        return cls(matrix=M)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(matrix=np.eye(3))

    def inverse(self) -> "Homography":
        return Homography(matrix=np.linalg.inv(self.matrix))

    def compose(self, other: "Homography") -> "Homography":
        """self after other"""
        return Homography(matrix=self.matrix @ other.matrix)

    def apply(self, points) -> np.ndarray:
        return apply_homography(self, points)


# ==================== Operations ====================


def project_points(K: Intrinsics, rt: RigidTransform, M) -> np.ndarray:
    """
    Project (N, 3) board-frame points through [R|T] and K

    Raises:
        NonPositiveDepth: when any point has z <= 1e-9 in the device frame
    """
    pts = np.asarray(M, dtype=float).reshape(-1, 3)
    cam = rt.apply(pts)
    z = cam[:, 2]
    bad = np.flatnonzero(z <= MIN_DEPTH)
    if bad.size:
        raise NonPositiveDepth(f"points {bad.tolist()} have non-positive depth")
    x = cam[:, 0] / z
    y = cam[:, 1] / z
    u = K.f * x + K.u0
    v = K.alpha * K.f * y + K.v0
    return np.column_stack([u, v])


def project_pinhole(K: Intrinsics, rt: RigidTransform, M) -> np.ndarray:
    """s*m = K (R M + T), dehomogenised; requires s > 0"""
    return project_points(K, rt, as_point3(M))[0]


def board_to_3d(board) -> np.ndarray:
    """Lift (N, 2) board points onto the z = 0 plane"""
    board = as_points2(board)
    return np.column_stack([board, np.zeros(len(board))])


def apply_homography(H: Homography, points) -> np.ndarray:
    """
    Map a point (2,) or points (N, 2) through H

    Raises:
        PointAtInfinity: when the homogeneous scale |w| < 1e-12
    """
    single = np.ndim(points) == 1
    pts = as_points2(points)
    homog = np.column_stack([pts, np.ones(len(pts))]) @ H.matrix.T
    w = homog[:, 2]
    bad = np.flatnonzero(np.abs(w) < MIN_HOMOGENEOUS_W)
    if bad.size:
        raise PointAtInfinity(f"points {bad.tolist()} map to infinity")
    mapped = homog[:, :2] / w[:, None]
    return mapped[0] if single else mapped


def _isotropic_normalization(pts: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to the origin with mean distance sqrt(2)"""
    centroid = pts.mean(axis=0)
    mean_dist = np.mean(np.linalg.norm(pts - centroid, axis=1))
    if mean_dist < 1e-15:
        raise DegenerateConfiguration("all points coincide")
    s = np.sqrt(2.0) / mean_dist
    return np.array(
        [
            [s, 0.0, -s * centroid[0]],
            [0.0, s, -s * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )


def _collinear(pts: np.ndarray, tol: float = 1e-9) -> bool:
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    return sv[0] == 0 or sv[-1] / sv[0] < tol


def _check_general_position(pts: np.ndarray, label: str):
    if _collinear(pts):
        raise DegenerateConfiguration(f"{label} points are collinear")
    # with few points, n-1 collinear points already leave H undetermined
    if len(pts) <= 8:
        for i in range(len(pts)):
            if _collinear(np.delete(pts, i, axis=0)):
                raise DegenerateConfiguration(
                    f"{label} points: {len(pts) - 1} of {len(pts)} are collinear"
                )


def estimate_homography(src, dst) -> Homography:
    """
    Normalized DLT homography with dst ~ H src

    Args:
        src: (N, 2) source points, N >= 4
        dst: (N, 2) target points

    Returns:
        Canonical Homography minimising the algebraic error after Hartley
        isotropic normalisation of both point sets

    Raises:
        DegenerateConfiguration: too few points, collinear sources or a
        rank-deficient design matrix
    """
    src = as_points2(src)
    dst = as_points2(dst)
    if src.shape != dst.shape:
        raise DegenerateConfiguration(f"point count mismatch {src.shape} vs {dst.shape}")
    n = len(src)
    if n < 4:
        raise DegenerateConfiguration(f"homography needs >= 4 pairs, got {n}")
    _check_general_position(src, "source")

    T_src = _isotropic_normalization(src)
    T_dst = _isotropic_normalization(dst)
    s = src @ T_src[:2, :2].T + T_src[:2, 2]
    d = dst @ T_dst[:2, :2].T + T_dst[:2, 2]

    x, y = s[:, 0], s[:, 1]
    u, v = d[:, 0], d[:, 1]
    zeros = np.zeros(n)
    ones = np.ones(n)
    rows_u = np.column_stack([-x, -y, -ones, zeros, zeros, zeros, u * x, u * y, u])
    rows_v = np.column_stack([zeros, zeros, zeros, -x, -y, -ones, v * x, v * y, v])
    A = np.empty((2 * n, 9))
    A[0::2] = rows_u
    A[1::2] = rows_v

    _, sv, Vt = np.linalg.svd(A)
    if len(sv) < 8 or sv[7] / sv[0] < 1e-10:
        raise DegenerateConfiguration("homography design matrix is rank deficient")
    Hn = Vt[-1].reshape(3, 3)
    H = np.linalg.inv(T_dst) @ Hn @ T_src

    hs = np.linalg.svd(H, compute_uv=False)
    if hs[-1] / hs[0] < 1e-12:
        raise DegenerateConfiguration("estimated homography is singular")
    return Homography(matrix=H)


def euler_xyz_to_matrix(e: EulerAnglesXYZ) -> np.ndarray:
    """R = R_X(psi) R_Y(nu) R_Z(phi)"""
    return Rotation.from_euler("XYZ", [e.psi, e.nu, e.phi], degrees=True).as_matrix()


def _wrap_angle(deg: float) -> float:
    wrapped = (deg + 180.0) % 360.0 - 180.0
    return 180.0 if wrapped <= -180.0 else wrapped


def matrix_to_euler_xyz(R) -> EulerAnglesXYZ:
    """
    Inverse of euler_xyz_to_matrix

    Raises:
        GimbalLock: when |cos nu| < 1e-9
    """
    R = check_rotation(R)
    cos_nu = np.hypot(R[0, 0], R[0, 1])
    if cos_nu < 1e-9:
        raise GimbalLock(f"|cos nu| = {cos_nu:.3e}; decomposition not unique")
    psi, nu, phi = Rotation.from_matrix(R).as_euler("XYZ", degrees=True)
    return EulerAnglesXYZ(psi=_wrap_angle(psi), nu=_wrap_angle(nu), phi=_wrap_angle(phi))


def rotation_about_z(phi: float) -> np.ndarray:
    """Standard right-handed rotation about +z by phi degrees"""
    return Rotation.from_euler("z", phi, degrees=True).as_matrix()


def rotation_angle_deg(Ra, Rb) -> float:
    """Angle of the relative rotation Ra^T Rb, degrees"""
    rel = np.asarray(Ra).T @ np.asarray(Rb)
    return float(np.degrees(Rotation.from_matrix(rel).magnitude()))
