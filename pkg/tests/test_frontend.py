"""Visual front-ends: preprocessing, DCT features against an O(N^4) oracle,
CNN shape arithmetic, the zero ablation, and file round-trips."""

import os

import numpy as np
import pytest

from lipseq.errors import DataError
from lipseq.frontend import (FrameSequence, FeatureSequence, preprocess,
                             resize_bilinear, dct_features, zero_features,
                             dct_matrix, zigzag_indices, frame_dct_coefficients,
                             regression_deltas, init_cnn_params, cnn2d_features,
                             cnn3d_features, cnn2d_apply, flatten_width,
                             save_clip, load_clip, save_pnm, load_pnm,
                             load_frames_dir, save_features, load_features)


def bilinear_oracle(img, out_h, out_w):
    """Per-pixel direct bilinear formula with half-pixel centers."""
    h, w = img.shape
    out = np.zeros((out_h, out_w))
    for i in range(out_h):
        for j in range(out_w):
            sy = (i + 0.5) * h / out_h - 0.5
            sx = (j + 0.5) * w / out_w - 0.5
            y0 = min(max(int(np.floor(sy)), 0), h - 1)
            x0 = min(max(int(np.floor(sx)), 0), w - 1)
            y1 = min(y0 + 1, h - 1)
            x1 = min(x0 + 1, w - 1)
            fy = min(max(sy - y0, 0.0), 1.0)
            fx = min(max(sx - x0, 0.0), 1.0)
            out[i, j] = (img[y0, x0] * (1 - fy) * (1 - fx)
                         + img[y0, x1] * (1 - fy) * fx
                         + img[y1, x0] * fy * (1 - fx)
                         + img[y1, x1] * fy * fx)
    return out


def dct2_oracle(frame):
    """O(N^4) orthonormal DCT-II double sum."""
    n = frame.shape[0]
    out = np.zeros((n, n))
    for u in range(n):
        for v in range(n):
            s = 0.0
            for x in range(n):
                for y in range(n):
                    s += frame[x, y] * np.cos(np.pi * (2 * x + 1) * u / (2 * n)) \
                         * np.cos(np.pi * (2 * y + 1) * v / (2 * n))
            cu = np.sqrt(1.0 / n) if u == 0 else np.sqrt(2.0 / n)
            cv = np.sqrt(1.0 / n) if v == 0 else np.sqrt(2.0 / n)
            out[u, v] = cu * cv * s
    return out


class TestPreprocess:
    def test_identity_on_prepared_input(self, rng):
        frames = rng.random((3, 36, 36, 1)).astype(np.float64)
        clip = FrameSequence(frames, clip_id="x")
        out = preprocess(clip, crop_box=(0, 0, 36, 36), target_size=(36, 36),
                         to_gray=True)
        np.testing.assert_allclose(out.frames, frames)

    def test_luma_of_constant_rgb(self):
        frames = np.full((2, 10, 10, 3), 0.5)
        out = preprocess(FrameSequence(frames), target_size=(10, 10), to_gray=True)
        np.testing.assert_allclose(out.frames, 0.5, atol=1e-12)
        assert out.frames.shape[3] == 1

    def test_checkerboard_downsample_matches_oracle(self, rng):
        yy, xx = np.mgrid[0:72, 0:72]
        board = (((yy // 9) + (xx // 9)) % 2).astype(np.float64)
        board += 0.1 * rng.random((72, 72))
        board = np.clip(board, 0, 1)
        clip = FrameSequence(board[None, :, :, None])
        out = preprocess(clip, target_size=(36, 36), to_gray=True)
        expected = bilinear_oracle(board, 36, 36)
        np.testing.assert_allclose(out.frames[0, :, :, 0], expected, atol=1e-6)

    def test_crop_outside_bounds(self):
        clip = FrameSequence(np.zeros((1, 20, 20, 1)))
        with pytest.raises(ValueError):
            preprocess(clip, crop_box=(10, 10, 15, 5))
        with pytest.raises(ValueError):
            preprocess(clip, crop_box=(-1, 0, 5, 5))

    def test_crop_then_resize(self, rng):
        frames = rng.random((2, 50, 60, 1))
        out = preprocess(FrameSequence(frames), crop_box=(5, 10, 40, 40),
                         target_size=(36, 36))
        assert out.frames.shape == (2, 36, 36, 1)


class TestDCTFeatures:
    def test_constant_frame_dc_only(self):
        c = 0.42
        coeffs = frame_dct_coefficients(np.full((36, 36), c))
        np.testing.assert_allclose(coeffs[0], 36 * c, rtol=1e-12)
        np.testing.assert_allclose(coeffs[1:], 0.0, atol=1e-12)

    def test_static_clip_has_zero_deltas(self, rng):
        frame = rng.random((36, 36, 1))
        clip = FrameSequence(np.repeat(frame[None], 6, axis=0))
        feats = dct_features(clip)
        assert feats.dim == 132
        np.testing.assert_allclose(feats.features[:, 44:], 0.0, atol=1e-12)

    def test_against_brute_force_dct(self, rng):
        frame = rng.random((36, 36))
        got = frame_dct_coefficients(frame)
        full = dct2_oracle(frame)
        us, vs = zigzag_indices(36, 44)
        np.testing.assert_allclose(got, full[us, vs], atol=1e-8)

    def test_zigzag_order_is_fixed_prefix(self):
        us, vs = zigzag_indices(36, 44)
        assert len(us) == 44
        # (u+v) ascending, ties by u ascending; starts at the DC term
        keys = list(zip((us + vs).tolist(), us.tolist()))
        assert keys == sorted(keys)
        assert (us[0], vs[0]) == (0, 0)
        us2, vs2 = zigzag_indices(36, 44)
        np.testing.assert_array_equal(us, us2)

    def test_linearity_including_deltas(self, rng):
        frames = rng.random((5, 36, 36, 1))
        f1 = dct_features(FrameSequence(frames)).features
        f2 = dct_features(FrameSequence(np.clip(0.5 * frames, 0, 1))).features
        np.testing.assert_allclose(f2, 0.5 * f1, atol=1e-10)

    def test_delta_window_denominator(self):
        # linear ramp: delta = (1*(2) + 2*(4)) / 10 = 1 everywhere inside
        x = np.arange(10.0)[:, None]
        d = regression_deltas(x)
        np.testing.assert_allclose(d[2:-2], 1.0)

    def test_frame_count_preserved(self, rng):
        for t in (1, 3, 9):
            clip = FrameSequence(rng.random((t, 36, 36, 1)))
            assert dct_features(clip).n_frames == t

    def test_requires_gray(self, rng):
        with pytest.raises(ValueError):
            dct_features(FrameSequence(rng.random((2, 36, 36, 3))))


class TestCNNFeatures:
    def test_output_shape_any_t(self, rng):
        p = init_cnn_params(np.random.default_rng(0), 1, 36, dtype=np.float64)
        for t in (1, 4):
            clip = FrameSequence(rng.random((t, 36, 36, 1)))
            feats = cnn2d_features(clip, p)
            assert feats.features.shape == (t, 128)

    def test_flatten_widths(self):
        assert flatten_width(36) == 5 * 5 * 128 == 3200
        assert flatten_width(64) == 8 * 8 * 128 == 8192

    def test_zero_weights_zero_features(self, rng):
        p = init_cnn_params(np.random.default_rng(0), 1, 36, dtype=np.float64)
        for kern in p.kernels:
            kern.data[:] = 0.0
        p.w_out.data[:] = 0.0
        clip = FrameSequence(rng.random((3, 36, 36, 1)))
        np.testing.assert_array_equal(cnn2d_features(clip, p).features, 0.0)

    def test_unsupported_size_rejected(self, rng):
        p = init_cnn_params(np.random.default_rng(0), 1, 36)
        with pytest.raises(ValueError):
            cnn2d_apply(p, rng.random((1, 48, 48, 1)).astype(np.float32))

    def test_rgb_channels(self, rng):
        p = init_cnn_params(np.random.default_rng(0), 3, 36, dtype=np.float64)
        clip = FrameSequence(rng.random((2, 36, 36, 3)))
        assert cnn2d_features(clip, p).features.shape == (2, 128)

    def test_eval_determinism_bitwise(self, rng):
        p = init_cnn_params(np.random.default_rng(1), 1, 36, dtype=np.float64)
        clip = FrameSequence(rng.random((3, 36, 36, 1)))
        a = cnn2d_features(clip, p).features
        b = cnn2d_features(clip, p).features
        assert np.array_equal(a, b)

    def test_cnn3d_shape_and_tconst(self, rng):
        p = init_cnn_params(np.random.default_rng(2), 1, 36, temporal=True,
                            dtype=np.float64)
        frame = rng.random((36, 36, 1))
        clip = FrameSequence(np.repeat(frame[None], 11, axis=0))
        feats = cnn3d_features(clip, p)
        assert feats.features.shape == (11, 128)
        # with four temporal-3 layers the receptive field is +/-4 frames, so
        # frames at least 4 from either edge of a constant clip are identical;
        # edge frames see zero temporal padding and may differ
        for t in (5, 6):
            np.testing.assert_allclose(feats.features[t], feats.features[4],
                                       atol=1e-9)

    def test_cnn3d_single_frame_equals_center_slice_2d(self, rng):
        # T=1 with zero temporal padding: only each kernel's center temporal
        # slice ever touches data, at every layer
        p3 = init_cnn_params(np.random.default_rng(3), 1, 36, temporal=True,
                             dtype=np.float64)
        p2 = init_cnn_params(np.random.default_rng(3), 1, 36, temporal=False,
                             dtype=np.float64)
        for k2, k3 in zip(p2.kernels, p3.kernels):
            k2.data = k3.data[1].copy()
        for b2, b3 in zip(p2.biases, p3.biases):
            b2.data = b3.data.copy()
        p2.w_out.data = p3.w_out.data.copy()
        p2.b_out.data = p3.b_out.data.copy()
        clip = FrameSequence(rng.random((1, 36, 36, 1)))
        got = cnn3d_features(clip, p3).features
        ref = cnn2d_features(clip, p2).features
        np.testing.assert_allclose(got, ref, atol=1e-9)


class TestZeroFeatures:
    def test_shape_and_content(self):
        f = zero_features(3, 132)
        assert f.features.shape == (3, 132)
        assert f.features.sum() == 0.0
        assert f.source == "zeros"

    def test_input_independence(self, rng):
        a = zero_features(5, 132, clip_id="a").features
        b = zero_features(5, 132, clip_id="b").features
        np.testing.assert_array_equal(a, b)

    def test_bad_args(self):
        with pytest.raises(ValueError):
            zero_features(0, 132)


class TestFileFormats:
    def test_clip_roundtrip(self, rng, tmp_path):
        frames = np.round(rng.random((4, 36, 36, 1)) * 255) / 255.0
        clip = FrameSequence(frames.astype(np.float32), clip_id="c1")
        path = tmp_path / "c1.vclip"
        save_clip(path, clip)
        back = load_clip(path)
        np.testing.assert_allclose(back.frames, clip.frames, atol=1e-7)
        assert back.clip_id == "c1"

    def test_clip_bad_magic(self, tmp_path):
        path = tmp_path / "bad.vclip"
        path.write_bytes(b"NOTACLIPxxxx")
        with pytest.raises(DataError):
            load_clip(path)

    def test_pnm_roundtrip_and_dir(self, rng, tmp_path):
        img = np.round(rng.random((20, 30)) * 255) / 255.0
        save_pnm(tmp_path / "f_000.pgm", img)
        back = load_pnm(tmp_path / "f_000.pgm")
        np.testing.assert_allclose(back[:, :, 0], img, atol=1e-7)
        rgb = np.round(rng.random((20, 30, 3)) * 255) / 255.0
        save_pnm(tmp_path / "f_001.ppm", rgb)
        np.testing.assert_allclose(load_pnm(tmp_path / "f_001.ppm"), rgb, atol=1e-7)

    def test_frames_dir(self, rng, tmp_path):
        d = tmp_path / "clipdir"
        d.mkdir()
        for i in range(3):
            save_pnm(d / f"{i:03d}.pgm", rng.random((8, 8)))
        clip = load_frames_dir(str(d))
        assert clip.frames.shape == (3, 8, 8, 1)

    def test_feature_cache_roundtrip(self, rng, tmp_path):
        feats = FeatureSequence(rng.random((7, 132)).astype(np.float32),
                                source="dct", clip_id="clip9")
        path = tmp_path / "clip9.vsf"
        save_features(path, feats)
        back = load_features(path)
        assert back.clip_id == "clip9" and back.source == "dct"
        np.testing.assert_array_equal(back.features,
                                      feats.features.astype(np.float32))

    def test_frame_value_range_enforced(self):
        with pytest.raises(ValueError):
            FrameSequence(np.full((1, 4, 4, 1), 1.5))
        with pytest.raises(ValueError):
            FrameSequence(np.zeros((1, 4, 4, 2)))
