import math
from itertools import combinations

import numpy as np
import pytest

from procam.errors import DegenerateConfiguration, DimensionMismatch
from procam.geometry import Intrinsics, RigidTransform, board_to_3d, project_points, rotation_angle_deg
from procam.metrics import (
    enumerate_pose_sets,
    focal_error,
    planar_pnp,
    pose_set_count,
    pose_set_precision,
    reprojection_error,
    reprojection_stats,
    solve_planar_pose,
    stereo_reprojection,
    translation_precision,
)
from procam.simulator import generate_board, multi_pose_configs, synthesize_observations
from procam.structured_light import CorrespondenceSet


def shifted(corr, camera_offset, projector_offset):
    return CorrespondenceSet(
        board=corr.board,
        camera=corr.camera + camera_offset,
        projector=corr.projector + projector_offset,
        rows=corr.rows,
        cols=corr.cols,
        spacing_mm=corr.spacing_mm,
        camera_size=corr.camera_size,
        projector_size=corr.projector_size,
    )


class TestReprojection:
    def test_exact_projections(self, noiseless):
        corr, truth = noiseless
        stats = reprojection_error(truth.K_c, truth.distortion, truth.rt_c, corr.board, corr.camera)
        assert stats.max_px < 1e-9
        assert stats.count == 60

    def test_single_outlier(self, noiseless):
        corr, truth = noiseless
        observed = truth.projector_exact.copy()
        observed[10] += [3.0, 4.0]
        stats = reprojection_error(truth.K_p, None, truth.rt_p, corr.board, observed)
        assert stats.max_px == pytest.approx(5.0)
        assert stats.mean_px == pytest.approx(5.0 / 60)
        assert stats.mean_px <= stats.rms_px <= stats.max_px

    def test_length_mismatch(self, noiseless):
        corr, truth = noiseless
        with pytest.raises(DimensionMismatch):
            reprojection_error(truth.K_p, None, truth.rt_p, corr.board, corr.projector[:-1])

    def test_stereo_is_mean_of_both_devices(self, noiseless):
        corr, truth = noiseless
        offset = shifted(corr, [0.4, 0.0], [0.0, 1.0])
        value = stereo_reprojection(truth.K_c, truth.distortion, truth.rt_c, truth.K_p, truth.rt_p, offset)
        assert value == pytest.approx(0.7)

    def test_stats_bundle(self, noiseless):
        corr, truth = noiseless
        stats = reprojection_stats(truth.K_c, truth.distortion, truth.rt_c, truth.K_p, truth.rt_p, corr)
        assert stats.stereo_mean_px < 1e-6

    @pytest.mark.slow
    def test_rayleigh_mean(self, default_scene):
        means = []
        for seed in range(100):
            corr, truth = synthesize_observations(
                default_scene.model_copy(update={"noise_sigma_px": 0.5, "rng_seed": seed})
            )
            means.append(reprojection_error(truth.K_p, None, truth.rt_p, corr.board, corr.projector).mean_px)
        assert np.mean(means) == pytest.approx(0.5 * math.sqrt(math.pi / 2), rel=0.15)


class TestPlanarPnP:
    def test_recovers_pose(self, noiseless):
        corr, truth = noiseless
        estimate = solve_planar_pose(truth.K_c, corr.board, truth.camera_undistorted)
        assert estimate.converged
        assert rotation_angle_deg(estimate.transform.rotation, truth.rt_c.rotation) < 1e-6
        assert np.linalg.norm(estimate.transform.translation - truth.rt_c.translation) < 1e-6

    def test_frontal_board(self):
        K = Intrinsics(f=1500.0, u0=640.0, v0=400.0)
        board = generate_board(6, 10, 23.0)
        board = board - board.mean(axis=0)
        rt = RigidTransform(rotation=np.eye(3), translation=[0.0, 0.0, 500.0])
        image = project_points(K, rt, board_to_3d(board))
        pose = planar_pnp(K, board, image)
        np.testing.assert_allclose(pose.translation, [0.0, 0.0, 500.0], atol=1e-6)
        np.testing.assert_allclose(pose.rotation, np.eye(3), atol=1e-9)

    def test_too_few_points(self):
        K = Intrinsics(f=1500.0, u0=640.0, v0=400.0)
        with pytest.raises(DegenerateConfiguration):
            planar_pnp(K, [[0, 0], [1, 0], [0, 1]], [[0, 0], [1, 0], [0, 1]])

    @pytest.mark.slow
    def test_noisy_translation(self, default_scene):
        errors = []
        for seed in range(100):
            corr, truth = synthesize_observations(
                default_scene.model_copy(update={"noise_sigma_px": 0.5, "rng_seed": seed})
            )
            pose = planar_pnp(truth.K_c, corr.board, corr.camera)
            errors.append(np.linalg.norm(pose.translation - truth.rt_c.translation))
        assert np.median(errors) < 5.0


class TestTranslationPrecision:
    def test_identical_poses(self, noiseless):
        corr, truth = noiseless
        precision = translation_precision(truth.K_c, truth.distortion, truth.K_p, [corr] * 7)
        assert precision.sigma_T == pytest.approx(0.0, abs=1e-12)
        assert precision.sigma_absT == pytest.approx(0.0, abs=1e-12)
        assert len(precision.translations) == 7

    def test_rigid_rig(self, default_scene):
        poses = [synthesize_observations(cfg)[0] for cfg in multi_pose_configs(default_scene)]
        _, truth = synthesize_observations(default_scene)
        precision = translation_precision(truth.K_c, truth.distortion, truth.K_p, poses)
        assert precision.sigma_T < 1e-6
        assert precision.sigma_absT < 1e-6
        np.testing.assert_allclose(
            precision.abs_translations[0], np.linalg.norm(truth.rt_procam.translation), rtol=1e-7
        )

    def test_wrong_focal_length_spreads_translation(self, default_scene):
        poses = [synthesize_observations(cfg)[0] for cfg in multi_pose_configs(default_scene)]
        _, truth = synthesize_observations(default_scene)
        exact = translation_precision(truth.K_c, truth.distortion, truth.K_p, poses)
        K_c = truth.K_c.model_copy(update={"f": truth.K_c.f * 1.05})
        K_p = truth.K_p.model_copy(update={"f": truth.K_p.f * 1.05})
        perturbed = translation_precision(K_c, truth.distortion, K_p, poses)
        assert perturbed.sigma_T > exact.sigma_T

    def test_sigma_identity(self, default_scene):
        poses = [
            synthesize_observations(cfg.model_copy(update={"noise_sigma_px": 0.3}))[0]
            for cfg in multi_pose_configs(default_scene)
        ]
        _, truth = synthesize_observations(default_scene)
        p = translation_precision(truth.K_c, truth.distortion, truth.K_p, poses)
        assert p.sigma_T ** 2 == pytest.approx(p.sigma_X ** 2 + p.sigma_Y ** 2 + p.sigma_Z ** 2, rel=1e-9)
        assert p.sigma_X == pytest.approx(np.std([t[0] for t in p.translations], ddof=1))

    def test_needs_two_poses(self, noiseless):
        corr, truth = noiseless
        with pytest.raises(ValueError):
            translation_precision(truth.K_c, truth.distortion, truth.K_p, [corr])


class TestPoseSets:
    @pytest.mark.parametrize("n, expected", [(7, 99), (3, 1), (5, 16)])
    def test_counts(self, n, expected):
        assert pose_set_count(n) == expected

    def test_matches_enumeration(self):
        for n in range(3, 11):
            brute = sum(1 for k in range(3, n + 1) for _ in combinations(range(n), k))
            assert pose_set_count(n) == brute == len(enumerate_pose_sets(n))

    def test_too_few_poses(self):
        with pytest.raises(ValueError):
            pose_set_count(2)

    def test_focal_error(self):
        assert focal_error(1545.5, 1539.0) == pytest.approx(6.5)

    def test_pose_set_precision(self, default_scene):
        poses = [synthesize_observations(cfg)[0] for cfg in multi_pose_configs(default_scene, n_poses=5)]
        _, truth = synthesize_observations(default_scene)
        precision = translation_precision(truth.K_c, truth.distortion, truth.K_p, poses)
        sets = pose_set_precision(precision)
        assert sets.count == pose_set_count(5) == 16
        assert sets.subsets[-1] == (0, 1, 2, 3, 4)
        assert sets.sigma_T[-1] == pytest.approx(precision.sigma_T, rel=1e-12, abs=1e-15)
        assert max(sets.sigma_T) < 1e-6
        assert sets.summary()["count"] == 16

    def test_pose_sets_keep_original_ids(self, noiseless):
        corr, truth = noiseless
        precision = translation_precision(truth.K_c, truth.distortion, truth.K_p, [corr] * 4)
        trimmed = precision.model_copy(update={"pose_ids": [0, 2, 5, 6]})
        sets = pose_set_precision(trimmed)
        assert (0, 2, 5) in sets.subsets
        assert all(set(s) <= {0, 2, 5, 6} for s in sets.subsets)

    def test_pose_sets_need_enough_poses(self, noiseless):
        corr, truth = noiseless
        precision = translation_precision(truth.K_c, truth.distortion, truth.K_p, [corr] * 2)
        with pytest.raises(ValueError):
            pose_set_precision(precision)


class TestRotationSpread:
    def test_rigid_rig_has_no_rotation_spread(self, default_scene):
        poses = [synthesize_observations(cfg)[0] for cfg in multi_pose_configs(default_scene, n_poses=4)]
        _, truth = synthesize_observations(default_scene)
        precision = translation_precision(truth.K_c, truth.distortion, truth.K_p, poses)
        assert precision.rotation_spread_deg < 1e-6

    def test_wrong_focal_length_rotates_the_rig(self, default_scene):
        poses = [synthesize_observations(cfg)[0] for cfg in multi_pose_configs(default_scene, n_poses=4)]
        _, truth = synthesize_observations(default_scene)
        K_p = truth.K_p.model_copy(update={"f": truth.K_p.f * 1.05})
        precision = translation_precision(truth.K_c, truth.distortion, K_p, poses)
        assert precision.rotation_spread_deg > 1e-4
