import numpy as np
import pytest

from procam import calibrate
from procam.calibrate import (
    CameraParamSet,
    ProjectorParamSet,
    board_principal_projection,
    calibrate_camera,
    calibrate_procam,
    calibrate_projector,
    camera_focal_seed,
    camera_residuals,
    compose_procam_extrinsics,
    extrinsics_from_frame,
    initial_values,
    is_plausible_solution,
    principal_axis_frame,
    projector_focal_seed,
    projector_residuals,
    roll_from_extrinsics,
    solve_from_starts,
    viewing_side,
)
from procam.errors import CalibrationStageError, DegenerateAxis
from procam.geometry import (
    Homography,
    Intrinsics,
    board_to_3d,
    estimate_homography,
    project_pinhole,
    rotation_about_z,
)
from procam.optimizer import LMConfig, levenberg_marquardt
from procam.simulator import SceneConfig, synthesize_observations
from procam.structured_light import CorrespondenceSet


def camera_truth(corr, truth):
    """Ground-truth camera parameter set and its principal-axis board point"""
    H_cb = estimate_homography(truth.camera_undistorted, corr.board)
    C_oB = board_principal_projection(H_cb, truth.K_c.principal_point)
    theta = CameraParamSet(
        f=truth.K_c.f,
        alpha=truth.K_c.alpha,
        phi=roll_from_extrinsics(truth.rt_c, C_oB),
        origin=truth.rt_c.center,
    )
    return theta, C_oB


def projector_truth(corr, truth):
    H_pb = estimate_homography(truth.projector_exact, corr.board)
    P_oB = board_principal_projection(H_pb, truth.K_p.principal_point)
    theta = ProjectorParamSet(
        f=truth.K_p.f,
        v0=truth.K_p.v0,
        phi=roll_from_extrinsics(truth.rt_p, P_oB),
        origin=truth.rt_p.center,
    )
    return theta, H_pb


class TestInitialValues:
    def test_diagonal_focal_lengths(self):
        camera, projector = initial_values((1280, 800), (1920, 1080), 210.0)
        assert camera.f == pytest.approx(1509.437, abs=1e-3)
        assert projector.f == pytest.approx(2202.907, abs=1e-3)
        assert projector.v0 == 540.0
        assert camera.alpha == 1.0
        assert camera.phi == projector.phi == 0.0
        np.testing.assert_allclose(camera.origin, [0.0, 0.0, 420.0])

    def test_rejects_non_positive_dims(self):
        with pytest.raises(ValueError):
            initial_values((0, 800), (1920, 1080), 210.0)

    def test_viewing_side(self, noiseless):
        corr, truth = noiseless
        H_bc = estimate_homography(corr.board, truth.camera_undistorted)
        assert viewing_side(H_bc, corr.board) == np.sign(truth.rt_c.center[2])


class TestPrincipalAxis:
    def test_board_projection_identity(self):
        np.testing.assert_allclose(
            board_principal_projection(Homography.identity(), (100.0, 50.0)), [100.0, 50.0, 0.0]
        )

    def test_board_projection_scale(self):
        H = Homography(matrix=np.diag([0.1, 0.1, 1.0]))
        np.testing.assert_allclose(board_principal_projection(H, (674.0, 512.0)), [67.4, 51.2, 0.0])

    def test_board_projection_is_ray_plane_intersection(self, noiseless):
        corr, truth = noiseless
        H_cb = estimate_homography(truth.camera_undistorted, corr.board)
        Q = board_principal_projection(H_cb, truth.K_c.principal_point)
        R, O = truth.rt_c.rotation, truth.rt_c.center
        axis = R.T @ [0.0, 0.0, 1.0]
        hit = O - O[2] / axis[2] * axis
        np.testing.assert_allclose(Q, hit, atol=1e-6)

    def test_frontal_frame(self):
        A, A_dev = principal_axis_frame([0, 0, 0], [0, 0, -500], 0.0)
        np.testing.assert_allclose(A[:, 2], [0, 0, 1])
        np.testing.assert_allclose(A.T @ A, np.eye(3), atol=1e-15)
        assert np.linalg.det(A) == pytest.approx(1.0)
        np.testing.assert_allclose(A_dev, A)

    def test_roll_keeps_axis(self):
        A, A_dev = principal_axis_frame([0, 0, 0], [0, 0, -500], 90.0)
        np.testing.assert_allclose(A_dev[:, 2], A[:, 2])
        np.testing.assert_allclose(A_dev @ rotation_about_z(90.0).T, A, atol=1e-12)

    def test_axis_along_board_x(self):
        with pytest.raises(DegenerateAxis):
            principal_axis_frame([500, 0, 0], [0, 0, 0], 0.0)

    def test_coincident_points(self):
        with pytest.raises(DegenerateAxis):
            principal_axis_frame([1, 2, 0], [1, 2, 0], 0.0)

    def test_frontal_extrinsics(self):
        rt = extrinsics_from_frame(np.eye(3), [0, 0, -500])
        np.testing.assert_allclose(rt.rotation, np.eye(3))
        np.testing.assert_allclose(rt.translation, [0, 0, 500])
        K = Intrinsics(f=1500.0, u0=640.0, v0=400.0)
        np.testing.assert_allclose(project_pinhole(K, rt, [0, 0, 0]), [640.0, 400.0])

    def test_origin_round_trip(self):
        O = np.array([40.0, -80.0, -450.0])
        _, A_dev = principal_axis_frame([100.0, 60.0, 0.0], O, 23.0)
        rt = extrinsics_from_frame(A_dev, O)
        np.testing.assert_allclose(rt.center, O, atol=1e-9)

    def test_roll_recovered(self):
        O = np.array([40.0, -80.0, -450.0])
        Q = np.array([100.0, 60.0, 0.0])
        _, A_dev = principal_axis_frame(Q, O, -17.0)
        assert roll_from_extrinsics(extrinsics_from_frame(A_dev, O), Q) == pytest.approx(-17.0)


class TestComposition:
    def test_coincident_devices(self, noiseless):
        _, truth = noiseless
        rt = compose_procam_extrinsics(truth.rt_c, truth.rt_c)
        np.testing.assert_allclose(rt.rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(rt.translation, np.zeros(3), atol=1e-9)

    def test_frame_consistency(self, noiseless):
        corr, truth = noiseless
        rt = compose_procam_extrinsics(truth.rt_c, truth.rt_p)
        M = board_to_3d(corr.board)
        np.testing.assert_allclose(rt.apply(truth.rt_c.apply(M)), truth.rt_p.apply(M), atol=1e-9)


class TestResiduals:
    def test_camera_truth_is_exact(self, noiseless):
        corr, truth = noiseless
        theta, C_oB = camera_truth(corr, truth)
        r = camera_residuals(theta, truth.K_c.principal_point, corr.board, truth.camera_undistorted, C_oB)
        assert r.shape == (120,)
        assert np.max(np.abs(r)) < 1e-7

    def test_camera_focal_perturbation_increases_cost(self, noiseless):
        corr, truth = noiseless
        theta, C_oB = camera_truth(corr, truth)
        worse = theta.model_copy(update={"f": theta.f * 1.01})
        args = (truth.K_c.principal_point, corr.board, truth.camera_undistorted, C_oB)
        r0 = camera_residuals(theta, *args)
        r1 = camera_residuals(worse, *args)
        assert r1 @ r1 > r0 @ r0

    def test_projector_truth_is_exact(self, consistent):
        corr, truth = consistent
        theta, H_pb = projector_truth(corr, truth)
        r = projector_residuals(theta, 960.0, H_pb, corr.board, corr.projector)
        assert np.max(np.abs(r)) < 1e-7

    def test_projector_axis_point_moves_on_a_line(self, consistent):
        corr, truth = consistent
        _, H_pb = projector_truth(corr, truth)
        points = np.array([board_principal_projection(H_pb, (960.0, v0)) for v0 in np.linspace(300, 1300, 10)])
        centered = points[:, :2] - points[:, :2].mean(axis=0)
        assert np.linalg.svd(centered, compute_uv=False)[1] < 1e-6

    def test_ground_truth_is_a_fixed_point(self, consistent):
        corr, truth = consistent
        theta, H_pb = projector_truth(corr, truth)

        def residual_fn(x):
            return projector_residuals(ProjectorParamSet.from_vector(x), 960.0, H_pb, corr.board, corr.projector)

        result = levenberg_marquardt(residual_fn, theta.to_vector())
        assert result.converged
        assert np.linalg.norm(result.x - theta.to_vector()) < 1e-8

    def test_degenerate_geometry_gives_sentinel(self, noiseless):
        corr, truth = noiseless
        theta = CameraParamSet(f=1500.0, origin=[500.0, 0.0, 1e-7])
        C_oB = np.array([500.0, 0.0, 0.0])
        r = camera_residuals(theta, (640.0, 400.0), corr.board, truth.camera_undistorted, C_oB)
        assert np.all(r == 1e6)


class TestHomographySeeds:
    def test_camera_seed_recovers_intrinsics(self, noiseless):
        corr, truth = noiseless
        H_bc = estimate_homography(corr.board, truth.camera_undistorted)
        f, alpha = camera_focal_seed(H_bc, truth.K_c.principal_point, corr.camera_size)
        assert f == pytest.approx(1539.0, rel=1e-6)
        assert alpha == pytest.approx(1.004, rel=1e-6)

    def test_projector_seed_recovers_intrinsics(self, consistent):
        corr, truth = consistent
        H_bp = estimate_homography(corr.board, truth.projector_exact)
        f, v0 = projector_focal_seed(H_bp, 960.0, corr.projector_size)
        assert f == pytest.approx(2421.0, rel=1e-6)
        assert v0 == pytest.approx(1065.0, rel=1e-6)

    def test_frontal_camera_has_no_seed(self, default_scene):
        corr, truth = synthesize_observations(default_scene.with_device_angles("camera", 0.0, 0.0))
        H_bc = estimate_homography(corr.board, truth.camera_undistorted)
        assert camera_focal_seed(H_bc, truth.K_c.principal_point, corr.camera_size) is None

    def test_plausible_solution(self):
        assert is_plausible_solution(2421.0, [100.0, -50.0, -700.0], (1920, 1080), 207.0)
        assert not is_plausible_solution(1.5e11, [100.0, -50.0, -700.0], (1920, 1080), 207.0)
        assert not is_plausible_solution(2421.0, [0.0, 0.0, -1e6], (1920, 1080), 207.0)


class TestMultiStart:
    @staticmethod
    def quadratic(x):
        return np.array([x[0] - 3.0, x[1] + 1.0])

    def test_lowest_cost_plausible_start_wins(self):
        starts = {"near": np.array([2.5, -0.5]), "far": np.array([40.0, 30.0])}
        result, label = solve_from_starts(self.quadratic, starts, lambda x: x[0] < 10.0, LMConfig(), "toy")
        assert result.converged
        np.testing.assert_allclose(result.x, [3.0, -1.0], atol=1e-8)
        assert label in starts

    def test_implausible_result_is_not_converged(self):
        starts = {"initial": np.array([0.0, 0.0])}
        result, label = solve_from_starts(self.quadratic, starts, lambda x: False, LMConfig(), "toy")
        assert label == "initial"
        assert not result.converged
        assert result.reason == "diverged"


class TestCameraPath:
    def test_focal_length(self, noiseless):
        corr, truth = noiseless
        K_c, dist, rt_c, diag = calibrate_camera(corr, center_override=truth.K_c.principal_point)
        assert diag.converged
        assert K_c.f == pytest.approx(1539.0, rel=0.005)
        np.testing.assert_allclose(K_c.principal_point, truth.K_c.principal_point)
        np.testing.assert_allclose(dist.center, truth.K_c.principal_point)

    def test_zero_distortion_falls_back_to_image_center(self, noiseless):
        corr, _ = noiseless
        K_c, dist, _, diag = calibrate_camera(corr)
        np.testing.assert_allclose(dist.center, [640.0, 400.0])
        assert dist.is_identity
        assert any(w.startswith("NearZeroDistortion") for w in diag.warnings)

    def test_distorted_scene(self):
        corr, truth = synthesize_observations(SceneConfig(camera_k1=-5e-8))
        K_c, dist, _, diag = calibrate_camera(corr)
        assert np.linalg.norm(dist.center - truth.distortion.center) < 2.0
        assert dist.k1 == pytest.approx(-5e-8, rel=0.1)
        assert diag.reprojection_mean_px < 0.5

    def test_too_few_corners(self):
        corr = CorrespondenceSet(
            board=[[0, 0], [20, 0], [0, 20], [20, 20]],
            camera=[[600, 380], [640, 381], [601, 420], [641, 421]],
            projector=[[900, 500], [950, 500], [900, 550], [950, 550]],
            rows=2, cols=2, spacing_mm=20.0, camera_size=(1280, 800), projector_size=(1920, 1080),
        )
        with pytest.raises(CalibrationStageError) as info:
            calibrate_camera(corr)
        assert info.value.stage.startswith("camera")

    def test_frontal_pose_warns(self, default_scene):
        scene = default_scene.with_device_angles("camera", 0.0, 0.0)
        corr, truth = synthesize_observations(scene)
        _, _, _, diag = calibrate_camera(corr, center_override=truth.K_c.principal_point)
        assert any("near-frontal" in w for w in diag.warnings)


class TestProjectorPath:
    def test_focal_length(self, consistent):
        corr, _ = consistent
        K_p, rt_p, diag = calibrate_projector(corr)
        assert diag.converged
        assert K_p.f == pytest.approx(2421.0, rel=0.005)
        assert K_p.u0 == 960.0
        assert K_p.alpha == 1.0

    def test_model_error_of_default_projector(self, noiseless):
        corr, _ = noiseless
        K_p, rt_p, diag = calibrate_projector(corr)
        assert diag.converged
        assert K_p.u0 == 960.0
        assert K_p.f == pytest.approx(2421.0, rel=0.1)
        assert is_plausible_solution(K_p.f, rt_p.center, corr.projector_size, corr.board_width_mm)

    @pytest.mark.parametrize("fixture", ["noiseless", "consistent"])
    def test_initial_values_alone_never_report_a_runaway(self, fixture, request, monkeypatch):
        corr, _ = request.getfixturevalue(fixture)
        monkeypatch.setattr(calibrate, "projector_focal_seed", lambda *args: None)
        K_p, rt_p, diag = calibrate_projector(corr)
        assert diag.extra["start"] == "initial"
        if diag.converged:
            assert K_p.f == pytest.approx(2421.0, rel=0.1)
        else:
            assert diag.reason in ("diverged", "max_iters")
            assert any(w.startswith("NonConvergence") for w in diag.warnings)

    def test_runaway_start_is_outranked(self, consistent):
        corr, _ = consistent
        K_p, _, diag = calibrate_projector(corr)
        assert diag.extra["start"] in ("initial", "homography")
        assert diag.cost < 1e-6


class TestPipeline:
    def test_baseline(self, consistent):
        corr, truth = consistent
        result = calibrate_procam(corr, center_override=truth.K_c.principal_point)
        true_baseline = np.linalg.norm(truth.rt_procam.translation)
        assert result.baseline_mm == pytest.approx(true_baseline, rel=0.005)
        assert result.residuals["stereo_mean_px"] < 1e-3

    def test_procam_recomputable(self, consistent):
        corr, truth = consistent
        result = calibrate_procam(corr, center_override=truth.K_c.principal_point)
        again = compose_procam_extrinsics(result.rt_c, result.rt_p)
        np.testing.assert_allclose(again.rotation, result.rt_procam.rotation, atol=1e-12)
        np.testing.assert_allclose(again.translation, result.rt_procam.translation, atol=1e-9)

    def test_noisy_favourable_pose(self, consistent_scene):
        scene = consistent_scene.model_copy(update={"noise_sigma_px": 0.5})
        corr, truth = synthesize_observations(scene)
        result = calibrate_procam(corr, center_override=truth.K_c.principal_point)
        assert result.residuals["camera_mean_px"] < 1.0
        stats = result.residuals
        assert stats["camera_mean_px"] <= stats["camera_rms_px"] <= stats["camera_max_px"]

    def test_distorted_view_end_to_end(self, consistent_scene):
        corr, truth = synthesize_observations(consistent_scene.model_copy(update={"camera_k1": -5e-8}))
        result = calibrate_procam(corr)
        assert result.converged
        assert result.camera_diagnostics.extra["center_source"] == "estimated"
        assert result.K_c.f == pytest.approx(1539.0, rel=0.005)
        assert result.K_p.f == pytest.approx(2421.0, rel=0.005)
        true_baseline = np.linalg.norm(truth.rt_procam.translation)
        assert result.baseline_mm == pytest.approx(true_baseline, rel=0.005)
        assert result.residuals["camera_rms_px"] < 1e-3

    def test_default_scene_end_to_end(self, distorted_scene):
        corr, truth = synthesize_observations(distorted_scene)
        result = calibrate_procam(corr)
        assert result.converged
        assert result.K_c.f == pytest.approx(1539.0, rel=0.005)
        assert result.residuals["camera_rms_px"] < 1e-3
        # alpha_p = 1.002 and u0_p = 1013 in the scene are outside the projector model
        assert result.K_p.f == pytest.approx(2421.0, rel=0.1)
        true_baseline = np.linalg.norm(truth.rt_procam.translation)
        assert result.baseline_mm == pytest.approx(true_baseline, rel=0.1)
