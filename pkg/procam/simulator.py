"""
Synthetic procam scenes
Board generation, noisy observation synthesis, Gray-code stack rendering and
the rotation-sweep experiment harness.
"""

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from config import Config
from procam.calibrate import calibrate_camera, calibrate_projector, compose_procam_extrinsics
from procam.distortion import DivisionModel, distort_points, undistort_points
from procam.errors import NonConvergence, OutOfFrame, ProcamError
from procam.geometry import (
    EulerAnglesXYZ,
    Homography,
    Intrinsics,
    RigidTransform,
    apply_homography,
    board_to_3d,
    euler_xyz_to_matrix,
    project_points,
)
from procam.metrics import focal_error
from procam.optimizer import LMConfig
from procam.structured_light import (
    CorrespondenceSet,
    GrayImage,
    PatternSet,
    generate_patterns,
    render_graycode_stack,
)

logger = logging.getLogger(__name__)

SWEEP_LIMIT_DEG = 60.0
SWEEP_COLUMNS = ["psi_deg", "nu_deg", "delta_f_px", "reproj_mean_px", "converged"]


def generate_board(rows: int, cols: int, spacing_mm: float) -> np.ndarray:
    """Row-major corner grid, origin at the first corner, +x along columns"""
    if rows < 2 or cols < 2:
        raise ValueError(f"board needs >= 2x2 corners, got {rows}x{cols}")
    if spacing_mm <= 0:
        raise ValueError("spacing must be positive")
    ys, xs = np.mgrid[0:rows, 0:cols]
    return np.column_stack([xs.ravel(), ys.ravel()]).astype(float) * spacing_mm


# ==================== Scene description ====================


class DevicePose(BaseModel):
    """Device orientation relative to the board plus standoff to the board centre"""

    model_config = ConfigDict(frozen=True)

    euler: EulerAnglesXYZ = EulerAnglesXYZ()
    standoff_mm: float = Field(500.0, gt=0)


class SceneConfig(BaseModel):
    """Ground truth of a synthetic single-pose scene"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    board_rows: int = Field(6, ge=2)
    board_cols: int = Field(10, ge=2)
    corner_spacing_mm: float = Field(23.0, gt=0)

    camera: Intrinsics = Intrinsics(f=1539.0, alpha=1.004, u0=674.0, v0=512.0)
    camera_size: Tuple[int, int] = (1280, 800)
    camera_k1: float = 0.0
    camera_k2: float = 0.0
    camera_pose: DevicePose = DevicePose(
        euler=EulerAnglesXYZ(psi=-15.0, nu=-15.0, phi=0.0), standoff_mm=450.0
    )

    projector: Intrinsics = Intrinsics(f=2421.0, alpha=1.002, u0=1013.0, v0=1065.0)
    projector_size: Tuple[int, int] = (1920, 1080)
    projector_pose: DevicePose = DevicePose(
        euler=EulerAnglesXYZ(psi=10.0, nu=15.0, phi=0.0), standoff_mm=700.0
    )

    noise_sigma_px: float = Field(0.0, ge=0)
    rng_seed: int = 42
    principal_point_offset_px: float = 5.0

    # explicit board->device transforms replace the poses above when set
    camera_extrinsics: Optional[RigidTransform] = None
    projector_extrinsics: Optional[RigidTransform] = None

    @field_validator("camera_size", "projector_size")
    @classmethod
    def _positive_size(cls, v):
        if min(v) < 2:
            raise ValueError("image sizes must be at least 2x2")
        return v

    @property
    def board(self) -> np.ndarray:
        return generate_board(self.board_rows, self.board_cols, self.corner_spacing_mm)

    @property
    def camera_distortion(self) -> DivisionModel:
        return DivisionModel(
            center=self.camera.principal_point,
            k1=self.camera_k1,
            k2=self.camera_k2,
            image_size=self.camera_size,
        )

    @property
    def calibration_center(self) -> np.ndarray:
        """Principal point shifted right and down by principal_point_offset_px"""
        return self.camera.principal_point + self.principal_point_offset_px

    def with_device_angles(self, device: str, psi: float, nu: float) -> "SceneConfig":
        pose = self.camera_pose if device == "camera" else self.projector_pose
        moved = DevicePose(
            euler=EulerAnglesXYZ(psi=psi, nu=nu, phi=pose.euler.phi), standoff_mm=pose.standoff_mm
        )
        key = "camera_pose" if device == "camera" else "projector_pose"
        return self.model_copy(update={key: moved})


class GroundTruth(BaseModel):
    """Exact scene parameters behind a synthetic CorrespondenceSet"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    K_c: Intrinsics
    distortion: DivisionModel
    K_p: Intrinsics
    rt_c: RigidTransform
    rt_p: RigidTransform
    rt_procam: RigidTransform
    camera_undistorted: np.ndarray
    projector_exact: np.ndarray


class CameraProjectorMap(BaseModel):
    """Distorted camera pixel -> projector coordinate for a planar scene"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    homography: Homography
    distortion: DivisionModel

    def __call__(self, pixels) -> np.ndarray:
        return apply_homography(self.homography, undistort_points(self.distortion, pixels))


# ==================== Synthesis ====================


def device_extrinsics(K: Intrinsics, image_size, pose: DevicePose, board_center) -> RigidTransform:
    """
    Board->device transform for a pose

    The board centre sits at `standoff_mm` along the ray through the image
    centre; rotating the device turns the board about that fixed point.
    """
    R = euler_xyz_to_matrix(pose.euler)
    ray = np.linalg.solve(K.matrix, [image_size[0] / 2.0, image_size[1] / 2.0, 1.0])
    anchor = pose.standoff_mm * ray / np.linalg.norm(ray)
    c = np.array([board_center[0], board_center[1], 0.0])
    return RigidTransform(rotation=R, translation=anchor - R @ c)


def scene_extrinsics(cfg: SceneConfig) -> Tuple[RigidTransform, RigidTransform]:
    center = cfg.board.mean(axis=0)
    rt_c = cfg.camera_extrinsics or device_extrinsics(cfg.camera, cfg.camera_size, cfg.camera_pose, center)
    rt_p = cfg.projector_extrinsics or device_extrinsics(
        cfg.projector, cfg.projector_size, cfg.projector_pose, center
    )
    return rt_c, rt_p


def _outside(points: np.ndarray, size) -> List[int]:
    w, h = size
    bad = (points[:, 0] < 0) | (points[:, 0] > w - 1) | (points[:, 1] < 0) | (points[:, 1] > h - 1)
    return np.flatnonzero(bad).tolist()


def synthesize_observations(cfg: SceneConfig) -> Tuple[CorrespondenceSet, GroundTruth]:
    """
    Noisy single-pose correspondences with their ground truth

    Camera points are projected, distorted, then perturbed; projector points
    are projected and perturbed. Noise draws come from a PCG64 stream seeded by
    cfg.rng_seed, camera first.

    Raises:
        OutOfFrame: when board corners fall outside either image
    """
    board = cfg.board
    points = board_to_3d(board)
    rt_c, rt_p = scene_extrinsics(cfg)
    distortion = cfg.camera_distortion

    cam_pinhole = project_points(cfg.camera, rt_c, points)
    cam_distorted = distort_points(distortion, cam_pinhole)
    pro_exact = project_points(cfg.projector, rt_p, points)

    for device, pts, size in (
        ("camera", cam_distorted, cfg.camera_size),
        ("projector", pro_exact, cfg.projector_size),
    ):
        offenders = _outside(pts, size)
        if offenders:
            raise OutOfFrame(device, offenders)

    rng = np.random.Generator(np.random.PCG64(cfg.rng_seed))
    cam_noise = rng.normal(0.0, 1.0, size=cam_distorted.shape) * cfg.noise_sigma_px
    pro_noise = rng.normal(0.0, 1.0, size=pro_exact.shape) * cfg.noise_sigma_px

    corr = CorrespondenceSet(
        board=board,
        camera=cam_distorted + cam_noise,
        projector=pro_exact + pro_noise,
        rows=cfg.board_rows,
        cols=cfg.board_cols,
        spacing_mm=cfg.corner_spacing_mm,
        camera_size=cfg.camera_size,
        projector_size=cfg.projector_size,
    )
    truth = GroundTruth(
        K_c=cfg.camera,
        distortion=distortion,
        K_p=cfg.projector,
        rt_c=rt_c,
        rt_p=rt_p,
        rt_procam=compose_procam_extrinsics(rt_c, rt_p),
        camera_undistorted=cam_pinhole,
        projector_exact=pro_exact,
    )
    return corr, truth


def _plane_homography(K: Intrinsics, rt: RigidTransform) -> np.ndarray:
    """Board plane -> image homography K [r1 r2 t]"""
    return K.matrix @ np.column_stack([rt.rotation[:, 0], rt.rotation[:, 1], rt.translation])


def camera_to_projector_map(cfg: SceneConfig) -> CameraProjectorMap:
    rt_c, rt_p = scene_extrinsics(cfg)
    H_bc = _plane_homography(cfg.camera, rt_c)
    H_bp = _plane_homography(cfg.projector, rt_p)
    return CameraProjectorMap(
        homography=Homography(matrix=H_bp @ np.linalg.inv(H_bc)),
        distortion=cfg.camera_distortion,
    )


def synthesize_graycode_stack(
    cfg: SceneConfig, white_level: float = 255, black_level: float = 0
) -> Tuple[PatternSet, List[GrayImage], CameraProjectorMap]:
    """
    Camera images of every Gray-code pattern projected onto the board plane

    Returns:
        (patterns, stack, mapping) where mapping is the exact camera->projector map
    """
    mapping = camera_to_projector_map(cfg)
    patterns = generate_patterns(*cfg.projector_size)
    stack = render_graycode_stack(patterns, cfg.camera_size, mapping, white_level, black_level)
    return patterns, stack, mapping


def multi_pose_configs(base: SceneConfig, n_poses: int = 7, tilt_deg: float = 8.0, shift_mm: float = 15.0) -> List[SceneConfig]:
    """
    Board poses seen by one rigid camera-projector rig

    The rig is fixed by base; the board is turned about its centre and shifted
    in its own plane differently for each pose. Each pose gets its own seed.
    """
    rt_c0, rt_p0 = scene_extrinsics(base)
    rig = compose_procam_extrinsics(rt_c0, rt_p0)
    center = np.append(base.board.mean(axis=0), 0.0)
    configs = []
    for k in range(n_poses):
        angle = 2.0 * np.pi * k / n_poses
        tilt = EulerAnglesXYZ(
            psi=tilt_deg * np.cos(angle), nu=tilt_deg * np.sin(angle), phi=2.0 * k - n_poses
        )
        R_b = euler_xyz_to_matrix(tilt)
        shift = shift_mm * np.array([np.sin(angle), np.cos(angle), 0.0]) * (k % 2)
        board_motion = RigidTransform(rotation=R_b, translation=center - R_b @ center + shift)
        rt_c = rt_c0.compose(board_motion)
        configs.append(
            base.model_copy(
                update={
                    "camera_extrinsics": rt_c,
                    "projector_extrinsics": rig.compose(rt_c),
                    "rng_seed": base.rng_seed + k,
                }
            )
        )
    return configs


# ==================== Rotation sweep ====================


class SweepCell(BaseModel):
    """One (psi, nu) grid cell averaged over noise trials"""

    psi_deg: float
    nu_deg: float
    delta_f_px: float
    reproj_mean_px: float
    converged: bool
    trials: int
    failures: int = 0
    warned: int = 0
    error: Optional[str] = None


class SweepResult(BaseModel):
    """Grid of |delta f| over device rotations"""

    device: Literal["camera", "projector"]
    psi_values: List[float]
    nu_values: List[float]
    cells: List[SweepCell]

    def cell(self, psi: float, nu: float) -> SweepCell:
        i = int(np.argmin(np.abs(np.array(self.psi_values) - psi)))
        j = int(np.argmin(np.abs(np.array(self.nu_values) - nu)))
        return self.cells[i * len(self.nu_values) + j]

    def rows(self) -> List[List[str]]:
        return [
            [repr(c.psi_deg), repr(c.nu_deg), repr(c.delta_f_px), repr(c.reproj_mean_px), str(c.converged).lower()]
            for c in self.cells
        ]

    def to_csv(self, path: str):
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(SWEEP_COLUMNS)
            writer.writerows(self.rows())


def sweep_axis(value_range: Tuple[float, float], step_deg: float) -> List[float]:
    lo, hi = value_range
    if step_deg <= 0:
        raise ValueError("sweep step must be positive")
    if lo > hi:
        raise ValueError(f"empty sweep range {lo}:{hi}")
    if lo <= -SWEEP_LIMIT_DEG or hi >= SWEEP_LIMIT_DEG:
        raise ValueError(f"sweep range {lo}:{hi} leaves (-{SWEEP_LIMIT_DEG:g}, {SWEEP_LIMIT_DEG:g})")
    count = int(np.floor((hi - lo) / step_deg + 1e-9)) + 1
    return [float(lo + i * step_deg) for i in range(count)]


def _run_cell(task) -> SweepCell:
    cfg, device, psi, nu, seeds, lm_config, thresholds = task
    cell_cfg = cfg.with_device_angles(device, psi, nu)
    deltas, reproj, converged, failures, warned, error = [], [], True, 0, 0, None
    # workers see only the thresholds carried in the task
    with Config.threshold_overrides(thresholds):
        for seed in seeds:
            trial_cfg = cell_cfg.model_copy(update={"rng_seed": seed})
            try:
                corr, truth = synthesize_observations(trial_cfg)
                if device == "camera":
                    K, _, _, diag = calibrate_camera(corr, lm_config, center_override=trial_cfg.calibration_center)
                    f_true = truth.K_c.f
                else:
                    K, _, diag = calibrate_projector(corr, corr.projector_size, lm_config)
                    f_true = truth.K_p.f
                if diag.reason == "diverged":
                    raise NonConvergence(f"{device} solve diverged to f = {K.f:.4g}")
                deltas.append(focal_error(K.f, f_true))
                reproj.append(diag.reprojection_mean_px)
                converged = converged and diag.converged
                warned += bool(diag.warnings)
            except ProcamError as exc:
                failures += 1
                error = f"{type(exc).__name__}: {exc}"
    if not deltas:
        return SweepCell(
            psi_deg=psi, nu_deg=nu, delta_f_px=float("nan"), reproj_mean_px=float("nan"),
            converged=False, trials=len(seeds), failures=failures, error=error,
        )
    return SweepCell(
        psi_deg=psi,
        nu_deg=nu,
        delta_f_px=float(np.mean(deltas)),
        reproj_mean_px=float(np.mean(reproj)),
        converged=converged,
        trials=len(seeds),
        failures=failures,
        warned=warned,
        error=error,
    )


def rotation_sweep(
    base_cfg: SceneConfig,
    device: str,
    psi_range: Tuple[float, float] = (-45.0, 45.0),
    nu_range: Tuple[float, float] = (-45.0, 45.0),
    step_deg: float = 5.0,
    noise_trials: int = 1,
    noise_sigma_px: float = None,
    workers: int = None,
    lm_config: LMConfig = None,
    thresholds: dict = None,
) -> SweepResult:
    """
    |f_estimated - f_true| over a grid of device Euler angles

    The trial seed of cell c is base seed + 1000 c + trial. Camera sweeps
    calibrate with the principal point shifted by principal_point_offset_px.
    Failed cells are recorded in the grid with NaN values.

    Args:
        base_cfg: scene whose device pose is varied
        device: "camera" or "projector"
        psi_range, nu_range: inclusive (low, high) in degrees, inside (-60, 60)
        step_deg: grid step
        noise_trials: seeded runs averaged per cell
        noise_sigma_px: overrides base_cfg.noise_sigma_px
        workers: process count (Config.worker_count() when None, serial when 1)
        thresholds: pose-quality and decoding thresholds applied in every
            worker (Config.thresholds() when None)
    """
    if device not in ("camera", "projector"):
        raise ValueError(f"device must be 'camera' or 'projector', got {device!r}")
    if noise_trials < 1:
        raise ValueError("noise_trials must be >= 1")
    psi_values = sweep_axis(psi_range, step_deg)
    nu_values = sweep_axis(nu_range, step_deg)
    if noise_sigma_px is not None:
        base_cfg = base_cfg.model_copy(update={"noise_sigma_px": noise_sigma_px})
    lm_config = lm_config or Config.lm_config()
    workers = workers or Config.worker_count()
    thresholds = dict(Config.thresholds() if thresholds is None else thresholds)

    tasks = []
    for i, psi in enumerate(psi_values):
        for j, nu in enumerate(nu_values):
            cell_index = i * len(nu_values) + j
            seeds = [base_cfg.rng_seed + cell_index * 1000 + t for t in range(noise_trials)]
            tasks.append((base_cfg, device, psi, nu, seeds, lm_config, thresholds))

    logger.info("%s sweep: %d cells x %d trials on %d workers", device, len(tasks), noise_trials, workers)
    if workers == 1:
        cells = [_run_cell(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_run_cell, tasks))
    return SweepResult(device=device, psi_values=psi_values, nu_values=nu_values, cells=cells)
