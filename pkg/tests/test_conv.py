"""Convolutions against direct-summation oracles, shape arithmetic, linearity,
and finite-difference gradients."""

import numpy as np
import pytest

from conftest import finite_difference_check
from lipseq.gradcore import Tensor, ops


def conv2d_oracle(x, k, stride):
    """Direct 4-loop same-padded convolution (independent of im2col path)."""
    n, h, w, cin = x.shape
    kk = k.shape[0]
    cout = k.shape[3]
    ho, wo = -(-h // stride), -(-w // stride)
    pt = max((ho - 1) * stride + kk - h, 0) // 2
    pl = max((wo - 1) * stride + kk - w, 0) // 2
    out = np.zeros((n, ho, wo, cout))
    for b in range(n):
        for i in range(ho):
            for j in range(wo):
                for di in range(kk):
                    for dj in range(kk):
                        si = i * stride + di - pt
                        sj = j * stride + dj - pl
                        if 0 <= si < h and 0 <= sj < w:
                            out[b, i, j] += x[b, si, sj] @ k[di, dj]
    return out


def conv3d_oracle(x, k, stride):
    """Direct 6-loop same-padded 3-D convolution."""
    t, h, w, cin = x.shape
    kt, kk = k.shape[0], k.shape[1]
    cout = k.shape[4]
    ho, wo = -(-h // stride), -(-w // stride)
    ptt = max((t - 1) + kt - t, 0) // 2
    pt = max((ho - 1) * stride + kk - h, 0) // 2
    pl = max((wo - 1) * stride + kk - w, 0) // 2
    out = np.zeros((t, ho, wo, cout))
    for f in range(t):
        for i in range(ho):
            for j in range(wo):
                for dt in range(kt):
                    for di in range(kk):
                        for dj in range(kk):
                            sf = f + dt - ptt
                            si = i * stride + di - pt
                            sj = j * stride + dj - pl
                            if 0 <= sf < t and 0 <= si < h and 0 <= sj < w:
                                out[f, i, j] += x[sf, si, sj] @ k[dt, di, dj]
    return out


class TestConv2d:
    def test_identity_center_kernel(self, rng):
        x = rng.random((1, 4, 4, 1))
        k = np.zeros((3, 3, 1, 1))
        k[1, 1, 0, 0] = 1.0
        out = ops.conv2d(Tensor(x), Tensor(k), 1)
        np.testing.assert_allclose(out.data, x)

    def test_stride2_spatial_chain(self, rng):
        x = Tensor(rng.random((1, 36, 36, 1)))
        sizes = [36]
        cin = 1
        for cout in (16, 32, 64):
            x = ops.conv2d(x, Tensor(rng.random((3, 3, cin, cout))), 2)
            sizes.append(x.shape[1])
            cin = cout
        assert sizes == [36, 18, 9, 5]
        # shape oracle: ceil division at every stage
        chain = [36]
        for _ in range(3):
            chain.append(-(-chain[-1] // 2))
        assert sizes == chain

    def test_ones_kernel_same_padding(self):
        x = np.ones((1, 2, 2, 1))
        k = np.ones((3, 3, 1, 1))
        out = ops.conv2d(Tensor(x), Tensor(k), 1)
        np.testing.assert_allclose(out.data, 4.0)

    @pytest.mark.parametrize("stride,shape", [(1, (2, 5, 7, 3)), (2, (1, 6, 6, 2)),
                                              (2, (1, 7, 5, 1))])
    def test_against_direct_summation(self, rng, stride, shape):
        x = rng.normal(0, 1, shape)
        k = rng.normal(0, 1, (3, 3, shape[3], 4))
        out = ops.conv2d(Tensor(x), Tensor(k), stride)
        np.testing.assert_allclose(out.data, conv2d_oracle(x, k, stride), atol=1e-10)

    def test_linearity(self, rng):
        k = Tensor(rng.normal(0, 1, (3, 3, 2, 3)))
        x = rng.normal(0, 1, (1, 5, 5, 2))
        y = rng.normal(0, 1, (1, 5, 5, 2))
        lhs = ops.conv2d(Tensor(2.0 * x + 3.0 * y), k, 1).data
        rhs = 2.0 * ops.conv2d(Tensor(x), k, 1).data + 3.0 * ops.conv2d(Tensor(y), k, 1).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_channel_mismatch(self, rng):
        with pytest.raises(ValueError):
            ops.conv2d(Tensor(rng.random((1, 4, 4, 2))),
                       Tensor(rng.random((3, 3, 3, 1))), 1)

    @pytest.mark.parametrize("stride", [1, 2])
    def test_gradients(self, rng, stride):
        x = Tensor(rng.normal(0, 1, (2, 5, 5, 2)), requires_grad=True)
        k = Tensor(rng.normal(0, 0.5, (3, 3, 2, 3)), requires_grad=True)
        w = rng.normal(0, 1, ops.conv2d(x, k, stride).shape)

        def loss(tape):
            return ops.sum_(ops.mul(ops.conv2d(x, k, stride, tape), Tensor(w), tape),
                            tape=tape)

        finite_difference_check(loss, [x, k])


class TestConv3d:
    def test_temporal_identity_matches_conv2d(self, rng):
        x = rng.normal(0, 1, (5, 6, 6, 1))
        k2 = rng.normal(0, 1, (3, 3, 1, 2))
        k3 = np.zeros((3, 3, 3, 1, 2))
        k3[1] = k2                      # only the center temporal slice
        out3 = ops.conv3d(Tensor(x), Tensor(k3), 1)
        out2 = ops.conv2d(Tensor(x), Tensor(k2), 1)
        np.testing.assert_allclose(out3.data, out2.data, atol=1e-12)

    def test_interior_voxel_of_constant_input(self):
        c = 0.7
        x = np.full((5, 7, 7, 1), c)
        k = np.ones((3, 3, 3, 1, 1))
        out = ops.conv3d(Tensor(x), Tensor(k), 1)
        np.testing.assert_allclose(out.data[2, 3, 3, 0], 27 * c, rtol=1e-12)

    @pytest.mark.parametrize("stride", [1, 2])
    def test_against_direct_summation(self, rng, stride):
        x = rng.normal(0, 1, (5, 6, 6, 1))
        k = rng.normal(0, 1, (3, 3, 3, 1, 2))
        out = ops.conv3d(Tensor(x), Tensor(k), stride)
        np.testing.assert_allclose(out.data, conv3d_oracle(x, k, stride), atol=1e-10)

    def test_batched_matches_per_clip(self, rng):
        xs = rng.normal(0, 1, (3, 4, 6, 6, 1))
        k = Tensor(rng.normal(0, 1, (3, 3, 3, 1, 2)))
        batched = ops.conv3d(Tensor(xs), k, 2).data
        for b in range(3):
            single = ops.conv3d(Tensor(xs[b]), k, 2).data
            np.testing.assert_allclose(batched[b], single, atol=1e-12)

    def test_frame_count_preserved(self, rng):
        for t in (1, 2, 7):
            out = ops.conv3d(Tensor(rng.random((t, 6, 6, 1))),
                             Tensor(rng.random((3, 3, 3, 1, 2))), 2)
            assert out.shape[0] == t

    def test_empty_time_rejected(self, rng):
        with pytest.raises(ValueError):
            ops.conv3d(Tensor(np.zeros((0, 6, 6, 1))),
                       Tensor(rng.random((3, 3, 3, 1, 1))), 1)

    def test_gradients(self, rng):
        x = Tensor(rng.normal(0, 1, (4, 5, 5, 1)), requires_grad=True)
        k = Tensor(rng.normal(0, 0.5, (3, 3, 3, 1, 2)), requires_grad=True)
        w = rng.normal(0, 1, ops.conv3d(x, k, 2).shape)

        def loss(tape):
            return ops.sum_(ops.mul(ops.conv3d(x, k, 2, tape), Tensor(w), tape),
                            tape=tape)

        finite_difference_check(loss, [x, k])
