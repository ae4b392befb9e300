import csv
import math

import numpy as np
import pytest

from config import Config
from procam.calibrate import compose_procam_extrinsics
from procam.errors import OutOfFrame
from procam.geometry import apply_homography, board_to_3d, estimate_homography
from procam.simulator import (
    SWEEP_COLUMNS,
    DevicePose,
    generate_board,
    multi_pose_configs,
    rotation_sweep,
    sweep_axis,
    synthesize_observations,
)


class TestBoard:
    def test_two_by_two(self):
        np.testing.assert_array_equal(
            generate_board(2, 2, 10.0), [[0, 0], [10, 0], [0, 10], [10, 10]]
        )

    def test_default_board(self, default_scene):
        board = default_scene.board
        assert board.shape == (60, 2)
        gaps = np.diff(board.reshape(6, 10, 2)[:, :, 0], axis=1)
        np.testing.assert_allclose(gaps, 23.0)

    def test_invalid(self):
        with pytest.raises(ValueError):
            generate_board(1, 5, 10.0)


class TestSynthesis:
    def test_frontal_noiseless_is_pinhole(self, default_scene):
        scene = default_scene.with_device_angles("camera", 0.0, 0.0)
        corr, truth = synthesize_observations(scene)
        np.testing.assert_allclose(corr.camera, truth.camera_undistorted, rtol=0, atol=1e-12)
        np.testing.assert_allclose(corr.projector, truth.projector_exact, rtol=0, atol=1e-12)

    def test_seeded_runs_are_identical(self, default_scene):
        scene = default_scene.model_copy(update={"noise_sigma_px": 0.5})
        a, _ = synthesize_observations(scene)
        b, _ = synthesize_observations(scene)
        np.testing.assert_array_equal(a.camera, b.camera)
        np.testing.assert_array_equal(a.projector, b.projector)

    def test_different_seeds_differ(self, default_scene):
        a, _ = synthesize_observations(default_scene.model_copy(update={"noise_sigma_px": 0.5}))
        b, _ = synthesize_observations(default_scene.model_copy(update={"noise_sigma_px": 0.5, "rng_seed": 7}))
        assert not np.array_equal(a.camera, b.camera)

    def test_radial_displacement_grows_with_radius(self, distorted_scene):
        corr, truth = synthesize_observations(distorted_scene)
        center = truth.distortion.center
        radius = np.linalg.norm(truth.camera_undistorted - center, axis=1)
        shift = np.linalg.norm(corr.camera - truth.camera_undistorted, axis=1)
        assert shift[np.argmax(radius)] > shift[np.argmin(radius)]

    def test_out_of_frame(self, default_scene):
        close = DevicePose(euler=default_scene.camera_pose.euler, standoff_mm=100.0)
        with pytest.raises(OutOfFrame) as info:
            synthesize_observations(default_scene.model_copy(update={"camera_pose": close}))
        assert info.value.device == "camera"
        assert info.value.indices

    def test_homography_consistency(self, noiseless):
        corr, _ = noiseless
        for observed in (corr.camera, corr.projector):
            H = estimate_homography(corr.board, observed)
            assert np.max(np.abs(apply_homography(H, corr.board) - observed)) < 1e-8

    def test_ground_truth_composition(self, noiseless):
        corr, truth = noiseless
        again = compose_procam_extrinsics(truth.rt_c, truth.rt_p)
        np.testing.assert_allclose(again.rotation, truth.rt_procam.rotation, atol=1e-9)
        M = board_to_3d(corr.board)
        np.testing.assert_allclose(
            truth.rt_procam.apply(truth.rt_c.apply(M)), truth.rt_p.apply(M), atol=1e-9
        )

    def test_calibration_center_offset(self, default_scene):
        np.testing.assert_allclose(default_scene.calibration_center, [679.0, 517.0])

    def test_noise_raises_ground_truth_error(self, default_scene):
        def mean_error(sigma):
            corr, truth = synthesize_observations(default_scene.model_copy(update={"noise_sigma_px": sigma}))
            return np.mean(np.linalg.norm(corr.projector - truth.projector_exact, axis=1))

        assert mean_error(0.0) < mean_error(0.2) < mean_error(1.0)


class TestMultiPose:
    def test_rig_is_rigid(self, default_scene):
        configs = multi_pose_configs(default_scene, n_poses=5)
        assert len(configs) == 5
        baselines = []
        for cfg in configs:
            _, truth = synthesize_observations(cfg)
            baselines.append(truth.rt_procam.translation)
        np.testing.assert_allclose(np.ptp(baselines, axis=0), 0.0, atol=1e-9)

    def test_poses_differ(self, default_scene):
        a, b = multi_pose_configs(default_scene, n_poses=2)
        assert not np.allclose(a.camera_extrinsics.translation, b.camera_extrinsics.translation)


class TestSweep:
    def test_axis(self):
        assert sweep_axis((-45.0, 45.0), 5.0) == [float(v) for v in range(-45, 50, 5)]
        assert sweep_axis((10.0, 10.0), 5.0) == [10.0]

    @pytest.mark.parametrize("bounds", [(-60.0, 0.0), (0.0, 61.0), (10.0, 0.0)])
    def test_axis_rejects(self, bounds):
        with pytest.raises(ValueError):
            sweep_axis(bounds, 5.0)

    def test_camera_cell(self, default_scene, tmp_path):
        result = rotation_sweep(default_scene, "camera", (10.0, 10.0), (10.0, 10.0), 5.0, workers=1)
        cell = result.cell(10.0, 10.0)
        assert cell.failures == 0
        assert cell.delta_f_px < 0.01 * 1539.0

        path = tmp_path / "sweep.csv"
        result.to_csv(str(path))
        with open(path) as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == SWEEP_COLUMNS
        assert len(rows) == 2

    def test_grid_shape_and_determinism(self, default_scene):
        kwargs = dict(psi_range=(5.0, 15.0), nu_range=(10.0, 15.0), step_deg=5.0, noise_trials=2,
                      noise_sigma_px=0.3, workers=1)
        a = rotation_sweep(default_scene, "projector", **kwargs)
        b = rotation_sweep(default_scene, "projector", **kwargs)
        assert len(a.cells) == 3 * 2
        assert a.rows() == b.rows()

    def test_failures_stay_in_grid(self, default_scene):
        close = default_scene.model_copy(
            update={"camera_pose": DevicePose(euler=default_scene.camera_pose.euler, standoff_mm=100.0)}
        )
        result = rotation_sweep(close, "camera", (0.0, 0.0), (0.0, 0.0), 5.0, workers=1)
        cell = result.cells[0]
        assert cell.failures == 1
        assert not cell.converged
        assert math.isnan(cell.delta_f_px)
        assert "OutOfFrame" in cell.error

    def test_runtime_thresholds_reach_workers(self, default_scene, restore_thresholds):
        Config.set_threshold("camera_min_tilt", 90.0)
        result = rotation_sweep(default_scene, "camera", (10.0, 10.0), (5.0, 10.0), 5.0, workers=2)
        assert [cell.warned for cell in result.cells] == [1, 1]
        assert Config.get_threshold("camera_min_tilt") == 90.0

    def test_explicit_thresholds_leave_config_untouched(self, default_scene):
        before = Config.thresholds()
        result = rotation_sweep(
            default_scene, "camera", (10.0, 10.0), (10.0, 10.0), 5.0, workers=1,
            thresholds={**before, "camera_min_tilt": 90.0},
        )
        assert result.cells[0].warned == 1
        assert Config.thresholds() == before

    def test_unknown_device(self, default_scene):
        with pytest.raises(ValueError):
            rotation_sweep(default_scene, "lidar", workers=1)


def group_mean_delta(result, keep):
    """Mean |delta f| over the selected cells; a group where every trial failed counts as infinite"""
    values = np.array([cell.delta_f_px for cell in result.cells if keep(cell)])
    assert values.size
    finite = values[np.isfinite(values)]
    return float(finite.mean()) if finite.size else math.inf


@pytest.mark.slow
class TestSweepTrends:
    def test_camera_error_shrinks_with_tilt(self, default_scene):
        result = rotation_sweep(
            default_scene, "camera", (-45.0, 45.0), (-45.0, 45.0), 5.0,
            noise_trials=10, noise_sigma_px=0.5,
        )

        def tilt(cell):
            return abs(cell.psi_deg) + abs(cell.nu_deg)

        steep = group_mean_delta(result, lambda cell: tilt(cell) > 25.0)
        frontal = group_mean_delta(result, lambda cell: tilt(cell) < 10.0)
        assert 2.0 * steep <= frontal

    def test_projector_error_shrinks_with_nu(self, default_scene):
        result = rotation_sweep(
            default_scene, "projector", (10.0, 10.0), (-45.0, 45.0), 5.0,
            noise_trials=10, noise_sigma_px=0.5,
        )
        turned = group_mean_delta(result, lambda cell: abs(cell.nu_deg) > 13.0)
        square = group_mean_delta(result, lambda cell: abs(cell.nu_deg) < 5.0)
        assert 2.0 * turned <= square
