import numpy as np
import pytest

from procam import structured_light
from procam.errors import DimensionMismatch, InsufficientSupport
from procam.geometry import Homography
from procam.structured_light import (
    UNDECODABLE,
    CorrespondenceSet,
    GrayImage,
    bit_count,
    decode,
    generate_patterns,
    gray_code,
    gray_to_binary,
    lift_corner,
    lift_corners,
    render_graycode_stack,
)


def identity_map(pixels):
    return pixels


class TestPatterns:
    def test_full_hd_count(self):
        patterns = generate_patterns(1920, 1080)
        assert len(patterns) == 46
        assert len(patterns.patterns) == patterns.expected_count == 46

    def test_small_count(self):
        assert len(generate_patterns(4, 4)) == 10

    def test_bit_count(self):
        assert bit_count(1920) == 11
        assert bit_count(1080) == 11
        assert bit_count(1024) == 10
        assert bit_count(2) == 1

    def test_frame_order(self):
        labels = [f.label for f in generate_patterns(40, 8).layout]
        assert labels[:4] == ["column-bit5", "column-bit5-inv", "column-bit4", "column-bit4-inv"]
        assert labels[12:14] == ["row-bit2", "row-bit2-inv"]
        assert labels[-2:] == ["white", "black"]

    def test_column_bits_follow_gray_code(self):
        patterns = generate_patterns(40, 8)
        for frame, image in zip(patterns.layout, patterns.patterns):
            if frame.kind != "bit" or frame.axis != "column":
                continue
            for c in range(40):
                lit = ((c ^ (c >> 1)) >> frame.bit) & 1
                if frame.inverse:
                    lit = 1 - lit
                assert image.data[3, c] == (255 if lit else 0)

    def test_adjacent_codes_differ_in_one_bit(self):
        codes = gray_code(np.arange(4096))
        flips = np.bitwise_xor(codes[1:], codes[:-1])
        assert np.all(flips > 0)
        assert np.all(flips & (flips - 1) == 0)

    def test_gray_round_trip(self):
        values = np.arange(5000)
        np.testing.assert_array_equal(gray_to_binary(gray_code(values)), values)

    def test_too_small(self):
        with pytest.raises(ValueError):
            generate_patterns(1, 5)


class TestDecode:
    def test_identity_mapping(self):
        patterns = generate_patterns(40, 24)
        stack = render_graycode_stack(patterns, (40, 24), identity_map)
        cmap = decode(stack, patterns)
        ys, xs = np.mgrid[0:24, 0:40]
        assert cmap.valid.all()
        np.testing.assert_array_equal(cmap.columns, xs)
        np.testing.assert_array_equal(cmap.rows, ys)
        assert cmap.lookup(7, 3) == (7, 3)

    def test_all_black(self):
        patterns = generate_patterns(40, 24)
        black = GrayImage.from_array(np.zeros((24, 40)))
        cmap = decode([black] * len(patterns), patterns)
        assert not cmap.valid.any()
        assert (cmap.columns == UNDECODABLE).all()
        assert cmap.lookup(0, 0) is None

    def test_low_contrast_rejected(self):
        patterns = generate_patterns(40, 24)
        stack = render_graycode_stack(patterns, (40, 24), identity_map, white_level=3, black_level=0)
        assert not decode(stack, patterns).valid.any()

    def test_thresholds_are_parameters(self):
        patterns = generate_patterns(40, 24)
        stack = render_graycode_stack(patterns, (40, 24), identity_map, white_level=3, black_level=0)
        assert decode(stack, patterns, contrast_threshold=2, span_threshold=2).valid.all()

    def test_uniform_rescaling_does_not_change_decode(self):
        patterns = generate_patterns(40, 24)
        stack = render_graycode_stack(patterns, (40, 24), identity_map)
        dimmed = [GrayImage.from_array(0.5 * img.data.astype(float) + 30) for img in stack]
        a, b = decode(stack, patterns), decode(dimmed, patterns)
        np.testing.assert_array_equal(a.columns, b.columns)
        np.testing.assert_array_equal(a.rows, b.rows)

    def test_wrong_frame_count(self):
        patterns = generate_patterns(40, 24)
        stack = render_graycode_stack(patterns, (40, 24), identity_map)
        with pytest.raises(DimensionMismatch):
            decode(stack[:-1], patterns)

    def test_simulated_homography(self, graycode):
        _, _, mapping, cmap = graycode
        height, width = cmap.valid.shape
        ys, xs = np.mgrid[0:height, 0:width]
        truth = mapping(np.column_stack([xs.ravel(), ys.ravel()]).astype(float))
        inside = (
            (truth[:, 0] >= 0.5) & (truth[:, 0] < cmap.projector_width - 0.5)
            & (truth[:, 1] >= 0.5) & (truth[:, 1] < cmap.projector_height - 0.5)
        )
        valid = cmap.valid.ravel()
        assert valid[inside].mean() >= 0.99
        decoded = np.column_stack([cmap.columns.ravel(), cmap.rows.ravel()])[valid]
        error = np.linalg.norm(decoded - truth[valid], axis=1)
        assert np.mean(error <= 1.0) >= 0.99


class TestLiftCorners:
    def test_identity_map(self):
        patterns = generate_patterns(40, 24)
        cmap = decode(render_graycode_stack(patterns, (40, 24), identity_map), patterns)
        corner = np.array([20.3, 11.7])
        np.testing.assert_allclose(lift_corner(cmap, corner, window_radius=5), corner, atol=1e-6)

    def test_simulated_corners(self, graycode, noiseless):
        _, _, mapping, cmap = graycode
        corr, _ = noiseless
        lifted = lift_corners(cmap, corr.camera)
        error = np.linalg.norm(lifted - mapping(corr.camera), axis=1)
        assert error.max() < 0.3

    def test_window_radius_stability(self, graycode, noiseless):
        _, _, _, cmap = graycode
        corr, _ = noiseless
        base = lift_corners(cmap, corr.camera, window_radius=15)
        for radius in (12, 18):
            other = lift_corners(cmap, corr.camera, window_radius=radius)
            assert np.linalg.norm(other - base, axis=1).max() < 0.1

    def test_undecodable_region(self):
        patterns = generate_patterns(40, 24)
        black = GrayImage.from_array(np.zeros((24, 40)))
        cmap = decode([black] * len(patterns), patterns)
        with pytest.raises(InsufficientSupport) as info:
            lift_corner(cmap, (20.0, 12.0), index=7)
        assert info.value.corner_index == 7
        assert info.value.support == 0

    def test_corner_mapped_to_infinity(self, monkeypatch):
        patterns = generate_patterns(40, 24)
        cmap = decode(render_graycode_stack(patterns, (40, 24), identity_map), patterns)
        # vanishing line through the corner (20, 12)
        horizon = Homography(matrix=[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, -20.0]])
        monkeypatch.setattr(structured_light, "estimate_homography", lambda src, dst: horizon)
        with pytest.raises(InsufficientSupport) as info:
            lift_corner(cmap, (20.0, 12.0), window_radius=5, index=3)
        assert info.value.corner_index == 3
        assert info.value.support > 0


class TestCorrespondenceSet:
    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            CorrespondenceSet(
                board=np.zeros((4, 2)), camera=np.zeros((3, 2)), projector=np.zeros((4, 2)),
                rows=2, cols=2, spacing_mm=10.0, camera_size=(640, 480), projector_size=(800, 600),
            )

    def test_grid_count(self):
        with pytest.raises(DimensionMismatch):
            CorrespondenceSet(
                board=np.zeros((5, 2)), camera=np.zeros((5, 2)), projector=np.zeros((5, 2)),
                rows=2, cols=2, spacing_mm=10.0, camera_size=(640, 480), projector_size=(800, 600),
            )

    def test_partial_grid_with_ids(self):
        corr = CorrespondenceSet(
            board=[[0, 0], [10, 0], [0, 10]], camera=np.zeros((3, 2)), projector=np.zeros((3, 2)),
            rows=2, cols=2, spacing_mm=10.0, camera_size=(640, 480), projector_size=(800, 600),
            corner_ids=[0, 1, 2],
        )
        assert corr.ids == (0, 1, 2)
        assert corr.board_width_mm == 10.0

    def test_gray_image_size_mismatch(self):
        with pytest.raises(DimensionMismatch):
            GrayImage(width=4, height=4, data=np.zeros(15))
