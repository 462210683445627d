"""Tensor core: forward semantics against brute-force references, and
backward passes against central finite differences."""

import numpy as np
import pytest

from teamemb.gradcheck import grad_check
from teamemb.tensor import (Tensor, avgpool2d, channel_slice, conv2d, gather_pixels,
                            maxpool2d, upsample)


def reference_conv(x, k, stride, pad):
    """Quadruple-nested-loop convolution, the oracle for conv2d."""
    cin, h, w = x.shape
    cout, _, kh, kw = k.shape
    xp = np.zeros((cin, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    xp[:, pad:pad + h, pad:pad + w] = x
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((cout, oh, ow))
    for co in range(cout):
        for i in range(oh):
            for j in range(ow):
                acc = 0.0
                for ci in range(cin):
                    for di in range(kh):
                        for dj in range(kw):
                            acc += xp[ci, i * stride + di, j * stride + dj] * k[co, ci, di, dj]
                out[co, i, j] = acc
    return out


class TestConv2d:
    def test_identity_kernel(self):
        x = Tensor(np.random.default_rng(0).random((2, 5, 5), dtype=np.float32))
        k = np.zeros((2, 2, 1, 1), np.float32)
        k[0, 0, 0, 0] = 1.0
        k[1, 1, 0, 0] = 1.0
        out = conv2d(x, Tensor(k), stride=1, pad=0)
        np.testing.assert_array_equal(out.data, x.data)

    def test_constant_field_all_ones_kernel(self):
        c = 0.37
        x = Tensor(np.full((1, 6, 6), c, np.float32))
        k = Tensor(np.ones((1, 1, 3, 3), np.float32))
        out = conv2d(x, k, stride=1, pad=0)
        np.testing.assert_allclose(out.data, 9 * c, rtol=1e-6)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((1, 5, 5)).astype(np.float32)
        k = rng.standard_normal((1, 1, 3, 3)).astype(np.float32)
        got = conv2d(Tensor(x), Tensor(k), stride=1, pad=0).data
        want = reference_conv(x, k, 1, 0)
        np.testing.assert_allclose(got, want, rtol=1e-6, atol=1e-6)

    @pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 0), (2, 1), (3, 2)])
    def test_matches_loop_oracle_strided(self, stride, pad):
        rng = np.random.default_rng(stride * 10 + pad)
        x = rng.standard_normal((3, 9, 7)).astype(np.float32)
        k = rng.standard_normal((2, 3, 3, 3)).astype(np.float32)
        got = conv2d(Tensor(x), Tensor(k), stride=stride, pad=pad).data
        np.testing.assert_allclose(got, reference_conv(x, k, stride, pad),
                                   rtol=1e-5, atol=1e-5)

    def test_channel_mismatch_rejected(self):
        x = Tensor(np.zeros((2, 4, 4), np.float32))
        k = Tensor(np.zeros((1, 3, 3, 3), np.float32))
        with pytest.raises(ValueError, match="channels"):
            conv2d(x, k)

    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError):
            conv2d(Tensor(np.zeros((1, 4, 4), np.float32)),
                   Tensor(np.zeros((1, 1, 2, 2), np.float32)))

    def test_linearity(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((2, 6, 6)).astype(np.float32)
        y = rng.standard_normal((2, 6, 6)).astype(np.float32)
        k = Tensor(rng.standard_normal((3, 2, 3, 3)).astype(np.float32))
        a, b = 1.7, -0.4
        lhs = conv2d(Tensor(a * x + b * y), k, 1, 1).data
        rhs = a * conv2d(Tensor(x), k, 1, 1).data + b * conv2d(Tensor(y), k, 1, 1).data
        np.testing.assert_allclose(lhs, rhs, rtol=1e-5, atol=1e-5)


class TestUpsample:
    @pytest.mark.parametrize("mode", ["bilinear", "nearest"])
    @pytest.mark.parametrize("factor", [1, 2, 3])
    def test_constant_map(self, mode, factor):
        x = Tensor(np.full((2, 3, 4), 0.7, np.float32))
        out = upsample(x, factor, mode)
        assert out.shape == (2, 3 * factor, 4 * factor)
        np.testing.assert_allclose(out.data, 0.7, rtol=1e-6)

    @pytest.mark.parametrize("mode", ["bilinear", "nearest"])
    def test_factor_one_identity(self, mode):
        x = Tensor(np.random.default_rng(1).random((1, 3, 3), dtype=np.float32))
        np.testing.assert_array_equal(upsample(x, 1, mode).data, x.data)

    def test_bilinear_hand_formula(self):
        # sample centers at (i+0.5)/f - 0.5, clipped, then linear interp
        x = np.array([[[0.0, 1.0], [2.0, 3.0]]], dtype=np.float32)
        out = upsample(Tensor(x), 2, "bilinear").data[0]
        expected = np.empty((4, 4))
        s = np.clip((np.arange(4) + 0.5) / 2 - 0.5, 0, 1)
        for i in range(4):
            for j in range(4):
                i0, j0 = int(np.floor(s[i])), int(np.floor(s[j]))
                i1, j1 = min(i0 + 1, 1), min(j0 + 1, 1)
                fi, fj = s[i] - i0, s[j] - j0
                top = x[0, i0, j0] * (1 - fj) + x[0, i0, j1] * fj
                bot = x[0, i1, j0] * (1 - fj) + x[0, i1, j1] * fj
                expected[i, j] = top * (1 - fi) + bot * fi
        np.testing.assert_allclose(out, expected, rtol=1e-6, atol=1e-7)

    def test_nearest_blocks(self):
        rng = np.random.default_rng(2)
        x = rng.random((3, 4, 4), dtype=np.float32)
        out = upsample(Tensor(x), 4, "nearest").data
        for i in range(4):
            for j in range(4):
                block = out[:, 4 * i:4 * i + 4, 4 * j:4 * j + 4]
                assert np.all(block == x[:, i:i + 1, j:j + 1])

    def test_bad_factor_rejected(self):
        with pytest.raises(ValueError):
            upsample(Tensor(np.zeros((1, 2, 2), np.float32)), 0, "bilinear")

    def test_bad_mode_rejected(self):
        with pytest.raises(ValueError):
            upsample(Tensor(np.zeros((1, 2, 2), np.float32)), 2, "cubic")


class TestBackward:
    """Analytic gradients vs central differences (eps=1e-3, rel err < 1e-4)."""

    def setup_method(self):
        self.rng = np.random.default_rng(11)

    def check(self, loss_fn, params, tol=1e-4):
        assert grad_check(loss_fn, params, eps=1e-3) < tol

    def test_conv_backward(self):
        x = Tensor(self.rng.standard_normal((2, 6, 6)).astype(np.float32), requires_grad=True)
        k = Tensor(self.rng.standard_normal((3, 2, 3, 3)).astype(np.float32) * 0.4,
                   requires_grad=True)
        self.check(lambda: (conv2d(x, k, 2, 1) ** 2).sum(), [x, k])

    def test_pointwise_and_reductions(self):
        x = Tensor(self.rng.standard_normal((3, 4, 4)).astype(np.float32), requires_grad=True)
        self.check(lambda: ((x.relu() + 0.3) * x.sigmoid()).mean(), [x])
        self.check(lambda: ((x - x.mean(axis=(1, 2), keepdims=True)) ** 2).sum(), [x])

    def test_pool_backward(self):
        x = Tensor(self.rng.standard_normal((2, 4, 4)).astype(np.float32), requires_grad=True)
        self.check(lambda: (maxpool2d(x) ** 2).sum(), [x])
        self.check(lambda: (avgpool2d(x, 2) ** 3).sum(), [x])

    def test_upsample_backward(self):
        x = Tensor(self.rng.standard_normal((2, 3, 3)).astype(np.float32), requires_grad=True)
        self.check(lambda: (upsample(x, 2, "bilinear") * upsample(x, 2, "nearest")).sum(), [x])

    def test_gather_and_slice_backward(self):
        x = Tensor(self.rng.standard_normal((4, 5, 5)).astype(np.float32), requires_grad=True)
        coords = np.array([[0, 0], [2, 3], [4, 4], [1, 1]])
        self.check(lambda: (gather_pixels(x, coords) ** 2).sum(), [x])
        self.check(lambda: (channel_slice(x, 1, 3) ** 2).mean(), [x])

    def test_broadcast_add_backward(self):
        x = Tensor(self.rng.standard_normal((3, 4, 4)).astype(np.float32), requires_grad=True)
        b = Tensor(self.rng.standard_normal((3, 1, 1)).astype(np.float32), requires_grad=True)
        self.check(lambda: ((x + b).sigmoid() ** 2).sum(), [x, b])


class TestTensorBasics:
    def test_finite_after_forward_backward(self):
        rng = np.random.default_rng(7)
        x = Tensor(rng.standard_normal((2, 8, 8)).astype(np.float32) * 50, requires_grad=True)
        loss = ((x.sigmoid() - 0.5) ** 2).sum()
        loss.backward()
        assert np.isfinite(loss.data).all()
        assert np.isfinite(x.grad).all()

    def test_determinism(self):
        def run():
            rng = np.random.default_rng(42)
            x = Tensor(rng.standard_normal((2, 6, 6)).astype(np.float32), requires_grad=True)
            k = Tensor(rng.standard_normal((2, 2, 3, 3)).astype(np.float32), requires_grad=True)
            loss = (conv2d(x, k, 1, 1).sigmoid() ** 2).sum()
            loss.backward()
            return loss.data.copy(), x.grad.copy()
        l1, g1 = run()
        l2, g2 = run()
        assert np.array_equal(l1, l2) and np.array_equal(g1, g2)

    def test_shape_invariant(self):
        x = Tensor(np.zeros((3, 4, 5), np.float32))
        assert x.size == 60 and x.shape == (3, 4, 5)

    def test_backward_requires_scalar(self):
        with pytest.raises(ValueError):
            Tensor(np.zeros((2, 2), np.float32), requires_grad=True).backward()

    def test_grad_accumulates_across_backwards(self):
        x = Tensor(np.ones((2,), np.float32), requires_grad=True)
        (x * 2.0).sum().backward()
        (x * 3.0).sum().backward()
        np.testing.assert_allclose(x.grad, [5.0, 5.0])
