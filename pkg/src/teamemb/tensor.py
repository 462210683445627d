"""Reverse-mode automatic differentiation over dense numpy arrays.

Deliberately small: only the operations the team-discrimination network
needs (2-D convolution, pooling, interpolation, pointwise maps, reductions
and pixel gathers). Everything runs in float32 by default; float64 tensors
are supported so the finite-difference harness can verify gradients well
below float32 rounding noise.

No broadcasting beyond what the network uses (bias terms shaped (C,1,1)
against feature maps shaped (C,H,W), and scalars against anything).
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "conv2d",
    "maxpool2d",
    "avgpool2d",
    "upsample",
    "gather_pixels",
    "channel_slice",
]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A dense n-dimensional array with an optional gradient buffer.

    `data` is row-major float32 (float64 only inside gradient checks).
    `grad` is lazily allocated during backward() and matches `data` in
    shape and dtype. Operations build a graph of parent links; calling
    backward() on a scalar runs reverse-mode accumulation over it.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bwd")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float32):
        self.data = np.asarray(data, dtype=dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._bwd = None

    # -- construction helpers -------------------------------------------

    @classmethod
    def zeros(cls, shape, requires_grad=False, dtype=np.float32):
        return cls(np.zeros(shape, dtype=dtype), requires_grad=requires_grad, dtype=dtype)

    @classmethod
    def _op(cls, data: np.ndarray, parents: Sequence["Tensor"], bwd) -> "Tensor":
        """Internal: wrap an op result, keeping the graph only if needed."""
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = False
        if any(p.requires_grad or p._bwd is not None for p in parents):
            out._parents = tuple(parents)
            out._bwd = bwd
        else:
            out._parents = ()
            out._bwd = None
        return out

    # -- basic protocol ---------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- autodiff engine --------------------------------------------------

    def _accumulate(self, g: np.ndarray) -> None:
        if not (self.requires_grad or self._bwd is not None):
            return
        if self.grad is None:
            self.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
        else:
            self.grad = self.grad + g

    def backward(self) -> None:
        """Reverse-mode pass from a scalar; accumulates into `.grad`."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._bwd is not None and node.grad is not None:
                node._bwd(node.grad)

    # -- pointwise arithmetic ---------------------------------------------

    def _coerce(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype), dtype=self.data.dtype)

    def __add__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def bwd(g):
            a._accumulate(_unbroadcast(g, a.shape))
            b._accumulate(_unbroadcast(g, b.shape))

        return Tensor._op(a.data + b.data, (a, b), bwd)

    __radd__ = __add__

    def __neg__(self):
        a = self

        def bwd(g):
            a._accumulate(-g)

        return Tensor._op(-a.data, (a,), bwd)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __mul__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def bwd(g):
            a._accumulate(_unbroadcast(g * b.data, a.shape))
            b._accumulate(_unbroadcast(g * a.data, b.shape))

        return Tensor._op(a.data * b.data, (a, b), bwd)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not supported; multiply by a reciprocal")
        return self * (1.0 / float(other))

    def __pow__(self, exponent: float):
        if not isinstance(exponent, (int, float)):
            raise TypeError("exponent must be a python scalar")
        a, p = self, float(exponent)

        def bwd(g):
            a._accumulate(g * p * a.data ** (p - 1.0))

        return Tensor._op(a.data ** p, (a,), bwd)

    # -- pointwise nonlinearities ------------------------------------------

    def relu(self) -> "Tensor":
        a = self
        mask = a.data > 0

        def bwd(g):
            a._accumulate(g * mask)

        return Tensor._op(a.data * mask, (a,), bwd)

    def sigmoid(self) -> "Tensor":
        a = self
        x = a.data
        # split by sign so exp never overflows
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)

        def bwd(g):
            a._accumulate(g * out * (1.0 - out))

        return Tensor._op(out, (a,), bwd)

    # -- reductions ---------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self
        out = a.data.sum(axis=axis, keepdims=keepdims)

        def bwd(g):
            gg = g
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            a._accumulate(np.broadcast_to(gg, a.shape).astype(a.data.dtype))

        return Tensor._op(np.asarray(out, dtype=a.data.dtype), (a,), bwd)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            n = self.data.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            n = 1
            for ax in axes:
                n *= self.data.shape[ax]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)


# -- structured operations ---------------------------------------------------


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D convolution (cross-correlation) of a (C_in,H,W) map with a
    (C_out,C_in,kH,kW) kernel. Output spatial size follows the usual
    floor((H + 2*pad - kH)/stride) + 1 rule.
    """
    cin, h, w = x.shape
    cout, cin_k, kh, kw = kernel.shape
    if cin != cin_k:
        raise ValueError(f"conv2d: input has {cin} channels but kernel expects {cin_k}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("conv2d: kernel dims must be odd")
    if stride < 1 or pad < 0:
        raise ValueError("conv2d: stride must be >= 1 and pad >= 0")
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise ValueError("conv2d: kernel larger than padded input")

    if pad:
        xp = np.zeros((cin, h + 2 * pad, w + 2 * pad), dtype=x.data.dtype)
        xp[:, pad : pad + h, pad : pad + w] = x.data
    else:
        xp = x.data

    cols = np.empty((cin, kh, kw, oh, ow), dtype=x.data.dtype)
    for di in range(kh):
        for dj in range(kw):
            cols[:, di, dj] = xp[:, di : di + stride * oh : stride, dj : dj + stride * ow : stride]
    cols2 = cols.reshape(cin * kh * kw, oh * ow)
    w2 = kernel.data.reshape(cout, cin * kh * kw)
    out = (w2 @ cols2).reshape(cout, oh, ow)

    def bwd(g):
        g2 = g.reshape(cout, oh * ow)
        kernel._accumulate((g2 @ cols2.T).reshape(kernel.shape))
        dcols = (w2.T @ g2).reshape(cin, kh, kw, oh, ow)
        dxp = np.zeros_like(xp)
        for di in range(kh):
            for dj in range(kw):
                dxp[:, di : di + stride * oh : stride, dj : dj + stride * ow : stride] += dcols[:, di, dj]
        if pad:
            x._accumulate(dxp[:, pad : pad + h, pad : pad + w])
        else:
            x._accumulate(dxp)

    return Tensor._op(out, (x, kernel), bwd)


def maxpool2d(x: Tensor, window: int = 2) -> Tensor:
    """Non-overlapping max pooling; spatial dims must divide by `window`."""
    c, h, w = x.shape
    if h % window or w % window:
        raise ValueError("maxpool2d: spatial dims must be divisible by window")
    oh, ow = h // window, w // window
    win = x.data.reshape(c, oh, window, ow, window).transpose(0, 1, 3, 2, 4).reshape(c, oh, ow, window * window)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def bwd(g):
        gw = np.zeros_like(win)
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        gx = gw.reshape(c, oh, ow, window, window).transpose(0, 1, 3, 2, 4).reshape(c, h, w)
        x._accumulate(gx)

    return Tensor._op(out, (x,), bwd)


def avgpool2d(x: Tensor, factor: int) -> Tensor:
    """Non-overlapping box-average pooling by an integer factor."""
    c, h, w = x.shape
    if factor < 1:
        raise ValueError("avgpool2d: factor must be >= 1")
    if h % factor or w % factor:
        raise ValueError("avgpool2d: spatial dims must be divisible by factor")
    if factor == 1:
        return x * 1.0
    oh, ow = h // factor, w // factor
    out = x.data.reshape(c, oh, factor, ow, factor).mean(axis=(2, 4))
    inv = 1.0 / (factor * factor)

    def bwd(g):
        gx = np.repeat(np.repeat(g * inv, factor, axis=1), factor, axis=2)
        x._accumulate(gx.astype(x.data.dtype))

    return Tensor._op(out.astype(x.data.dtype), (x,), bwd)


_INTERP_CACHE: dict = {}


def _interp_matrix(n: int, factor: int, mode: str, dtype) -> np.ndarray:
    """(factor*n, n) row-interpolation matrix, cached per signature.

    Bilinear uses the align-corners-false convention: output sample o reads
    source coordinate (o + 0.5)/factor - 0.5, clipped to the valid range.
    Nearest picks the source pixel whose center is closest, which reduces
    to plain block replication for integer factors.
    """
    key = (n, factor, mode, np.dtype(dtype).str)
    cached = _INTERP_CACHE.get(key)
    if cached is not None:
        return cached
    m = np.zeros((factor * n, n), dtype=dtype)
    if mode == "nearest":
        for o in range(factor * n):
            m[o, o // factor] = 1.0
    else:
        s = (np.arange(factor * n) + 0.5) / factor - 0.5
        s = np.clip(s, 0.0, n - 1.0)
        i0 = np.floor(s).astype(int)
        i1 = np.minimum(i0 + 1, n - 1)
        w1 = s - i0
        for o in range(factor * n):
            m[o, i0[o]] += 1.0 - w1[o]
            m[o, i1[o]] += w1[o]
    _INTERP_CACHE[key] = m
    return m


def upsample(x: Tensor, factor: int, mode: str = "bilinear") -> Tensor:
    """Upsample a (C,H,W) map by an integer factor.

    `mode` is "bilinear" (align-corners-false) or "nearest". Both modes
    are linear maps, so gradients flow through either.
    """
    if mode not in ("bilinear", "nearest"):
        raise ValueError(f"upsample: unknown mode {mode!r}")
    if factor < 1:
        raise ValueError("upsample: factor must be >= 1")
    if factor == 1:
        return x * 1.0
    c, h, w = x.shape
    mr = _interp_matrix(h, factor, mode, x.data.dtype)
    mc = _interp_matrix(w, factor, mode, x.data.dtype)
    out = np.einsum("oh,chw,pw->cop", mr, x.data, mc, optimize=True)

    def bwd(g):
        x._accumulate(np.einsum("oh,cop,pw->chw", mr, g, mc, optimize=True))

    return Tensor._op(out.astype(x.data.dtype), (x,), bwd)


def gather_pixels(x: Tensor, coords: np.ndarray) -> Tensor:
    """Select pixel vectors from a (D,H,W) map at (row, col) coordinates.

    `coords` is an integer (K,2) array of unique positions; the result is
    (D,K). Duplicate coordinates are not supported (the backward pass
    writes each location once).
    """
    coords = np.asarray(coords, dtype=np.int64)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValueError("gather_pixels: coords must be (K,2)")
    _, h, w = x.shape
    ii, jj = coords[:, 0], coords[:, 1]
    if len(ii) and (ii.min() < 0 or ii.max() >= h or jj.min() < 0 or jj.max() >= w):
        raise ValueError("gather_pixels: coordinates out of bounds")
    out = x.data[:, ii, jj]

    def bwd(g):
        gx = np.zeros_like(x.data)
        gx[:, ii, jj] = g
        x._accumulate(gx)

    return Tensor._op(out, (x,), bwd)


def channel_slice(x: Tensor, start: int, stop: int) -> Tensor:
    """View channels [start, stop) of a (C,H,W) map as a new tensor."""
    c = x.shape[0]
    if not (0 <= start < stop <= c):
        raise ValueError("channel_slice: bad channel range")
    out = x.data[start:stop].copy()

    def bwd(g):
        gx = np.zeros_like(x.data)
        gx[start:stop] = g
        x._accumulate(gx)

    return Tensor._op(out, (x,), bwd)
