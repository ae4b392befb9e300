"""
Main Procam Calibration Orchestrator
Coordinates loading correspondences, single-pose calibration, multi-pose
precision evaluation and reporting
"""

import logging
from io import BytesIO
from typing import Any, Dict, List, Optional, Sequence

from config import Config
from procam.calibrate import CalibrationResult, calibrate_procam
from procam.distortion import undistort_points
from procam.errors import ProcamError
from procam.metrics import planar_pnp, pose_set_precision, reprojection_stats, translation_precision
from procam.simulator import SceneConfig, synthesize_observations
from procam.structured_light import CorrespondenceSet
from utils.file_formats import (
    SCHEMA_VERSION,
    CalibrationFile,
    CorrespondenceFile,
    GroundTruthBlock,
    MetricsFile,
    PoseMetrics,
    PoseSetSummary,
    calibration_document,
    correspondence_document,
    correspondence_set,
    ground_truth_block,
    load_correspondences,
    parse_document,
)
from utils.pdf_generator import pdf_generator

logger = logging.getLogger(__name__)


class ProcamFramework:
    """
    Main orchestrator for the procam calibration toolkit
    Holds the current pose, its calibration and the latest precision metrics
    """

    def __init__(self, verbose: bool = True):
        """Initialize an empty session"""
        self.verbose = verbose

        # State management
        self.current_correspondences: Optional[CorrespondenceSet] = None
        self.current_ground_truth: Optional[GroundTruthBlock] = None
        self.latest_result: Optional[CalibrationResult] = None
        self.latest_calibration: Optional[CalibrationFile] = None
        self.evaluation_poses: List[CorrespondenceSet] = []
        self.latest_metrics: Optional[MetricsFile] = None

    def _say(self, message: str):
        if self.verbose:
            print(message)

    # ==================== STEP 1: Correspondences ====================

    def load_correspondences(self, path: str = None, document: Dict[str, Any] = None) -> Dict[str, Any]:
        """
        Step 1: Load the correspondence set of one board pose

        Args:
            path: Path to a correspondence JSON file
            document: Already-decoded correspondence JSON

        Returns:
            Summary of the loaded set
        """
        if path:
            self._say(f"📄 Loading correspondences: {path}")
            corr, truth = load_correspondences(path)
        elif document is not None:
            parsed = parse_document(document, CorrespondenceFile)
            corr, truth = correspondence_set(parsed), parsed.ground_truth
        else:
            raise ValueError("Either path or document must be provided")

        self.current_correspondences = corr
        self.current_ground_truth = truth
        self.latest_result = None
        self.latest_calibration = None
        self._say(f"✓ {len(corr)} corners loaded\n")
        return self.get_correspondence_summary()

    def simulate(self, scene: SceneConfig = None) -> CorrespondenceFile:
        """
        Step 1 (synthetic): Generate the correspondence set of a simulated scene

        Args:
            scene: Scene description (default scene when None)

        Returns:
            Correspondence document including the ground-truth block
        """
        scene = scene or SceneConfig()
        self._say("🧪 Synthesizing observations...")
        corr, truth = synthesize_observations(scene)
        self.current_correspondences = corr
        self.current_ground_truth = ground_truth_block(truth)
        self.latest_result = None
        self.latest_calibration = None
        self._say(f"✓ {len(corr)} corners synthesized (noise σ = {scene.noise_sigma_px} px)\n")
        return correspondence_document(corr, truth)

    def get_correspondence_summary(self) -> Dict[str, Any]:
        corr = self.current_correspondences
        if corr is None:
            raise ValueError("No correspondences loaded. Call load_correspondences() or simulate()")
        return {
            "points": len(corr),
            "board": {"rows": corr.rows, "cols": corr.cols, "spacing_mm": corr.spacing_mm},
            "camera": list(corr.camera_size),
            "projector": list(corr.projector_size),
            "has_ground_truth": self.current_ground_truth is not None,
        }

    # ==================== STEP 2: Calibration ====================

    def calibrate(self, lm_max_iters: int = None, center_override=None) -> CalibrationFile:
        """
        Step 2: Calibrate camera and projector from the current pose

        Args:
            lm_max_iters: Override for the LM iteration limit
            center_override: Fixed camera principal point (px)

        Returns:
            Calibration document
        """
        if self.current_correspondences is None:
            raise ValueError("Correspondences must be loaded first. Call load_correspondences()")

        lm_config = Config.lm_config(max_iters=lm_max_iters)
        self._say("📐 Calibrating camera and projector...")
        result = calibrate_procam(self.current_correspondences, lm_config, center_override)
        self.latest_result = result
        self.latest_calibration = calibration_document(result)

        if result.converged:
            self._say("✓ Calibration converged")
        else:
            self._say("⚠️  Optimizer stopped before convergence")
        for warning in result.warnings:
            self._say(f"⚠️  {warning}")
        self._say(
            f"   f_c = {result.K_c.f:.3f} px, f_p = {result.K_p.f:.3f} px, "
            f"|T| = {result.baseline_mm:.3f} mm\n"
        )
        return self.latest_calibration

    def ground_truth_errors(self) -> Dict[str, float]:
        """Relative focal errors and baseline error against the ground-truth block"""
        if self.latest_result is None or self.current_ground_truth is None:
            return {}
        truth = self.current_ground_truth
        baseline_true = sum(v * v for v in truth.rt_procam.translation) ** 0.5
        return {
            "f_c_rel": abs(self.latest_result.K_c.f - truth.K_c.f) / truth.K_c.f,
            "f_p_rel": abs(self.latest_result.K_p.f - truth.K_p.f) / truth.K_p.f,
            "baseline_rel": abs(self.latest_result.baseline_mm - baseline_true) / baseline_true,
        }

    # ==================== STEP 3: Precision ====================

    def evaluate(
        self,
        poses: Sequence[CorrespondenceSet],
        calibration: CalibrationFile = None,
        sources: Sequence[str] = None,
    ) -> MetricsFile:
        """
        Step 3: Translation precision and per-pose reprojection

        Args:
            poses: At least two correspondence sets of a rigid rig
            calibration: Intrinsics to evaluate (latest calibration when None)
            sources: Labels for the poses (file names)

        Returns:
            Metrics document
        """
        calibration = calibration or self.latest_calibration
        if calibration is None:
            raise ValueError("A calibration is required. Call calibrate() or pass one")
        if len(poses) < 2:
            raise ValueError(f"Precision evaluation needs at least 2 poses, got {len(poses)}")
        sources = list(sources or [f"pose-{i}" for i in range(len(poses))])

        K_c = calibration.K_c.to_intrinsics()
        K_p = calibration.K_p.to_intrinsics()
        dist = calibration.distortion.to_model()

        self._say(f"📏 Evaluating translation precision over {len(poses)} poses...")
        precision = translation_precision(K_c, dist, K_p, poses)

        records = []
        by_id = dict(zip(precision.pose_ids, zip(precision.translations, precision.abs_translations)))
        for i, corr in enumerate(poses):
            if i not in by_id:
                records.append(PoseMetrics(pose_id=i, source=sources[i], skipped=True))
                continue
            (x, y, z), abs_t = by_id[i]
            try:
                rt_c = planar_pnp(K_c, corr.board, undistort_points(dist, corr.camera))
                rt_p = planar_pnp(K_p, corr.board, corr.projector)
                stats = reprojection_stats(K_c, dist, rt_c, K_p, rt_p, corr)
                reproj = (stats.camera.mean_px, stats.projector.mean_px, stats.stereo_mean_px)
            except ProcamError as exc:
                logger.warning("pose %d reprojection unavailable: %s", i, exc)
                reproj = (None, None, None)
            records.append(PoseMetrics(
                pose_id=i, source=sources[i], X=x, Y=y, Z=z, absT=abs_t,
                reproj_cam=reproj[0], reproj_pro=reproj[1], reproj_stereo=reproj[2],
            ))

        pose_sets = None
        if len(precision.pose_ids) >= Config.MIN_POSE_SET_SIZE:
            sets = pose_set_precision(precision, Config.MIN_POSE_SET_SIZE)
            pose_sets = PoseSetSummary(**sets.summary())
            self._say(f"🧮 {sets.count} pose sets of >= {sets.min_size} poses evaluated")

        self.evaluation_poses = list(poses)
        self.latest_metrics = MetricsFile(
            schema_version=SCHEMA_VERSION,
            poses=records,
            sigma_X=precision.sigma_X,
            sigma_Y=precision.sigma_Y,
            sigma_Z=precision.sigma_Z,
            sigma_T=precision.sigma_T,
            sigma_absT=precision.sigma_absT,
            rotation_spread_deg=precision.rotation_spread_deg,
            pose_sets=pose_sets,
        )
        if precision.skipped:
            self._say(f"⚠️  Skipped poses: {precision.skipped}")
        self._say(f"✓ σT = {precision.sigma_T:.6f} mm, σ|T| = {precision.sigma_absT:.6f} mm\n")
        return self.latest_metrics

    # ==================== Reporting ====================

    def get_calibration_report(self) -> str:
        """
        Generate a plain-text calibration report

        Returns:
            Formatted report
        """
        if self.latest_calibration is None:
            return "No calibration performed yet."
        cal = self.latest_calibration
        report = "\n" + "=" * 60 + "\n"
        report += "CALIBRATION REPORT\n"
        report += "=" * 60 + "\n\n"
        report += f"Camera:    f = {cal.K_c.f:.3f}  alpha = {cal.K_c.alpha:.5f}  "
        report += f"(u0, v0) = ({cal.K_c.u0:.2f}, {cal.K_c.v0:.2f})\n"
        report += f"Distortion: k1 = {cal.distortion.k1:.4e}  k2 = {cal.distortion.k2:.4e}\n"
        report += f"Projector: f = {cal.K_p.f:.3f}  (u0, v0) = ({cal.K_p.u0:.2f}, {cal.K_p.v0:.2f})\n"
        report += "Procam T:  " + ", ".join(f"{v:.3f}" for v in cal.rt_procam.translation) + " mm\n"
        report += "─" * 60 + "\n"
        for key, value in cal.residuals.items():
            report += f"{key:<20} {value:.4f}\n"
        for warning in cal.diagnostics.get("warnings", []):
            report += f"WARNING: {warning}\n"
        report += "=" * 60 + "\n"
        return report

    def export_pdf(self) -> BytesIO:
        if self.latest_calibration is None:
            raise ValueError("No calibration available. Call calibrate() first")
        return pdf_generator.generate_calibration_report(self.latest_calibration, self.latest_metrics)

    def reset(self):
        """Reset framework state"""
        self.current_correspondences = None
        self.current_ground_truth = None
        self.latest_result = None
        self.latest_calibration = None
        self.evaluation_poses = []
        self.latest_metrics = None
