"""Differentiable tensor operations.

Every op computes its forward value eagerly and, when given a Tape and at
least one Tensor input requiring gradients, records a backward closure.
Called with tape=None the ops are plain numpy with Tensor wrappers, which
is the inference fast path.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, Tape, accumulate_grad, maybe_check

__all__ = [
    "as_tensor", "add", "sub", "mul", "div", "neg", "scale",
    "matmul", "bmm", "dense",
    "sigmoid", "tanh", "relu", "exp", "log", "sqrt",
    "softmax", "sum_", "mean_", "reshape", "transpose",
    "concat", "stack", "gather_rows", "masked_fill", "dropout",
    "conv2d", "conv3d", "scatter_to_padded", "zeros_like",
]


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


def _wants_grad(tape, *tensors) -> bool:
    return tape is not None and any(t.requires_grad for t in tensors)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `g` down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b, tape: Tape | None = None) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(maybe_check(a.data + b.data, "add"), requires_grad=_wants_grad(tape, a, b))
    if out.requires_grad:
        def bwd(g):
            accumulate_grad(a, _unbroadcast(g, a.data.shape))
            accumulate_grad(b, _unbroadcast(g, b.data.shape))
        tape.record([out], [a, b], bwd)
    return out


def sub(a, b, tape: Tape | None = None) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data, requires_grad=_wants_grad(tape, a, b))
    if out.requires_grad:
        def bwd(g):
            accumulate_grad(a, _unbroadcast(g, a.data.shape))
            accumulate_grad(b, _unbroadcast(-g, b.data.shape))
        tape.record([out], [a, b], bwd)
    return out


def mul(a, b, tape: Tape | None = None) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(maybe_check(a.data * b.data, "mul"), requires_grad=_wants_grad(tape, a, b))
    if out.requires_grad:
        ad, bd = a.data, b.data
        def bwd(g):
            accumulate_grad(a, _unbroadcast(g * bd, ad.shape))
            accumulate_grad(b, _unbroadcast(g * ad, bd.shape))
        tape.record([out], [a, b], bwd)
    return out


def div(a, b, tape: Tape | None = None) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(maybe_check(a.data / b.data, "div"), requires_grad=_wants_grad(tape, a, b))
    if out.requires_grad:
        ad, bd = a.data, b.data
        def bwd(g):
            accumulate_grad(a, _unbroadcast(g / bd, ad.shape))
            accumulate_grad(b, _unbroadcast(-g * ad / (bd * bd), bd.shape))
        tape.record([out], [a, b], bwd)
    return out


def neg(x, tape: Tape | None = None) -> Tensor:
    x = as_tensor(x)
    out = Tensor(-x.data, requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        tape.record([out], [x], lambda g: accumulate_grad(x, -g))
    return out


def scale(x, c: float, tape: Tape | None = None) -> Tensor:
    """x * c for a python-scalar constant c."""
    x = as_tensor(x)
    out = Tensor(x.data * c, requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        tape.record([out], [x], lambda g: accumulate_grad(x, g * c))
    return out


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a, b, tape: Tape | None = None) -> Tensor:
    """2-D (or N-D x 2-D) matrix product."""
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(maybe_check(a.data @ b.data, "matmul"), requires_grad=_wants_grad(tape, a, b))
    if out.requires_grad:
        ad, bd = a.data, b.data
        def bwd(g):
            if a.requires_grad:
                accumulate_grad(a, g @ bd.T if bd.ndim == 2 else g @ np.swapaxes(bd, -1, -2))
            if b.requires_grad:
                ga = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
                accumulate_grad(b, ga)
        tape.record([out], [a, b], bwd)
    return out


def bmm(a, b, tape: Tape | None = None) -> Tensor:
    """Batched matrix product: (B,m,k) @ (B,k,n) -> (B,m,n)."""
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(maybe_check(a.data @ b.data, "bmm"), requires_grad=_wants_grad(tape, a, b))
    if out.requires_grad:
        ad, bd = a.data, b.data
        def bwd(g):
            if a.requires_grad:
                accumulate_grad(a, g @ np.swapaxes(bd, -1, -2))
            if b.requires_grad:
                accumulate_grad(b, np.swapaxes(ad, -1, -2) @ g)
        tape.record([out], [a, b], bwd)
    return out


def dense(x, w, b=None, tape: Tape | None = None) -> Tensor:
    """x @ w (+ b). x may be (..., D); w is (D, M); b is (M,)."""
    x, w = as_tensor(x), as_tensor(w)
    y = x.data @ w.data
    if b is not None:
        b = as_tensor(b)
        y = y + b.data
    inputs = [x, w] if b is None else [x, w, b]
    out = Tensor(maybe_check(y, "dense"), requires_grad=_wants_grad(tape, *inputs))
    if out.requires_grad:
        xd, wd = x.data, w.data
        def bwd(g):
            if x.requires_grad:
                accumulate_grad(x, g @ wd.T)
            if w.requires_grad:
                g2 = g.reshape(-1, g.shape[-1])
                accumulate_grad(w, xd.reshape(-1, xd.shape[-1]).T @ g2)
            if b is not None and b.requires_grad:
                accumulate_grad(b, g.reshape(-1, g.shape[-1]).sum(axis=0))
        tape.record([out], inputs, bwd)
    return out


# ---------------------------------------------------------------------------
# nonlinearities

def sigmoid(x, tape: Tape | None = None) -> Tensor:
    x = as_tensor(x)
    # exp overflow saturates to exactly 0/1, which is the right limit
    with np.errstate(over="ignore"):
        s = 1.0 / (1.0 + np.exp(-x.data))
    out = Tensor(s, requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        tape.record([out], [x], lambda g: accumulate_grad(x, g * s * (1.0 - s)))
    return out


def tanh(x, tape: Tape | None = None) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.data)
    out = Tensor(t, requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        tape.record([out], [x], lambda g: accumulate_grad(x, g * (1.0 - t * t)))
    return out


def relu(x, tape: Tape | None = None) -> Tensor:
    x = as_tensor(x)
    y = np.maximum(x.data, 0.0)
    out = Tensor(y, requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        m = x.data > 0
        tape.record([out], [x], lambda g: accumulate_grad(x, g * m))
    return out


def exp(x, tape: Tape | None = None) -> Tensor:
    x = as_tensor(x)
    y = maybe_check(np.exp(x.data), "exp")
    out = Tensor(y, requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        tape.record([out], [x], lambda g: accumulate_grad(x, g * y))
    return out


def log(x, tape: Tape | None = None) -> Tensor:
    x = as_tensor(x)
    out = Tensor(maybe_check(np.log(x.data), "log"), requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        xd = x.data
        tape.record([out], [x], lambda g: accumulate_grad(x, g / xd))
    return out


def sqrt(x, tape: Tape | None = None) -> Tensor:
    x = as_tensor(x)
    y = np.sqrt(x.data)
    out = Tensor(y, requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        tape.record([out], [x], lambda g: accumulate_grad(x, g * 0.5 / y))
    return out


def softmax(x, axis: int = -1, tape: Tape | None = None) -> Tensor:
    """Stable softmax along `axis` (max subtraction is mandatory)."""
    x = as_tensor(x)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(s, requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        def bwd(g):
            dot = (g * s).sum(axis=axis, keepdims=True)
            accumulate_grad(x, s * (g - dot))
        tape.record([out], [x], bwd)
    return out


# ---------------------------------------------------------------------------
# reductions / shape

def sum_(x, axis=None, keepdims: bool = False, tape: Tape | None = None) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims), requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        shape = x.data.shape
        def bwd(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            accumulate_grad(x, np.broadcast_to(g, shape))
        tape.record([out], [x], bwd)
    return out


def mean_(x, axis=None, keepdims: bool = False, tape: Tape | None = None) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else x.data.shape[axis]
    out = Tensor(x.data.mean(axis=axis, keepdims=keepdims), requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        shape = x.data.shape
        def bwd(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            accumulate_grad(x, np.broadcast_to(g, shape) / n)
        tape.record([out], [x], bwd)
    return out


def reshape(x, shape, tape: Tape | None = None) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data.reshape(shape), requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        orig = x.data.shape
        tape.record([out], [x], lambda g: accumulate_grad(x, g.reshape(orig)))
    return out


def transpose(x, axes, tape: Tape | None = None) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.transpose(x.data, axes), requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        inv = np.argsort(axes)
        tape.record([out], [x], lambda g: accumulate_grad(x, np.transpose(g, inv)))
    return out


def concat(xs, axis: int = 0, tape: Tape | None = None) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    out = Tensor(np.concatenate([x.data for x in xs], axis=axis),
                 requires_grad=_wants_grad(tape, *xs))
    if out.requires_grad:
        sizes = [x.data.shape[axis] for x in xs]
        offsets = np.cumsum([0] + sizes)
        def bwd(g):
            for x, lo, hi in zip(xs, offsets[:-1], offsets[1:]):
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                accumulate_grad(x, g[tuple(idx)])
        tape.record([out], xs, bwd)
    return out


def stack(xs, axis: int = 0, tape: Tape | None = None) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    out = Tensor(np.stack([x.data for x in xs], axis=axis),
                 requires_grad=_wants_grad(tape, *xs))
    if out.requires_grad:
        def bwd(g):
            parts = np.moveaxis(g, axis, 0)
            for x, gx in zip(xs, parts):
                accumulate_grad(x, gx)
        tape.record([out], xs, bwd)
    return out


def gather_rows(table, ids: np.ndarray, tape: Tape | None = None) -> Tensor:
    """Row lookup table[(ids)] for an integer index array (embedding)."""
    table = as_tensor(table)
    ids = np.asarray(ids)
    out = Tensor(table.data[ids], requires_grad=_wants_grad(tape, table))
    if out.requires_grad:
        def bwd(g):
            acc = np.zeros_like(table.data)
            np.add.at(acc, ids, g)
            accumulate_grad(table, acc)
        tape.record([out], [table], bwd)
    return out


def masked_fill(x, mask: np.ndarray, value: float, tape: Tape | None = None) -> Tensor:
    """Set positions where boolean `mask` is True to `value` (no grad there)."""
    x = as_tensor(x)
    out = Tensor(np.where(mask, np.asarray(value, dtype=x.data.dtype), x.data),
                 requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        keep = ~mask
        tape.record([out], [x], lambda g: accumulate_grad(x, g * keep))
    return out


def zeros_like(x) -> Tensor:
    x = as_tensor(x)
    return Tensor(np.zeros_like(x.data))


# ---------------------------------------------------------------------------
# dropout

def dropout(x, keep_prob: float, training: bool, rng: np.random.Generator | None = None,
            seed: int | None = None, tape: Tape | None = None) -> Tensor:
    """Inverted dropout: keep w.p. keep_prob, scale kept values by 1/keep_prob.

    Identity in evaluation mode and for keep_prob == 1.
    """
    if keep_prob <= 0.0 or keep_prob > 1.0:
        raise ValueError(f"keep_prob must lie in (0, 1], got {keep_prob}")
    x = as_tensor(x)
    if not training or keep_prob == 1.0:
        out = Tensor(x.data, requires_grad=_wants_grad(tape, x))
        if out.requires_grad:
            tape.record([out], [x], lambda g: accumulate_grad(x, g))
        return out
    if rng is None:
        rng = np.random.default_rng(seed)
    mask = (rng.random(x.data.shape) < keep_prob).astype(x.data.dtype) / keep_prob
    out = Tensor(x.data * mask, requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        tape.record([out], [x], lambda g: accumulate_grad(x, g * mask))
    return out


# ---------------------------------------------------------------------------
# convolution (same padding, im2col + GEMM)

def _same_pad(n: int, k: int, stride: int) -> tuple[int, int]:
    out = -(-n // stride)  # ceil
    total = max((out - 1) * stride + k - n, 0)
    lo = total // 2
    return lo, total - lo


def _im2col2d(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """(N,Hp,Wp,C) -> (N,ho,wo,k,k,C) patch tensor."""
    n, _, _, c = xp.shape
    cols = np.empty((n, ho, wo, k, k, c), dtype=xp.dtype)
    for di in range(k):
        for dj in range(k):
            cols[:, :, :, di, dj, :] = xp[:, di:di + stride * ho:stride,
                                          dj:dj + stride * wo:stride, :]
    return cols


def conv2d(x, kernel, stride: int = 1, tape: Tape | None = None) -> Tensor:
    """Same-padded 2-D convolution.

    x: (N,H,W,Cin), kernel: (k,k,Cin,Cout), stride in {1,2}.
    Output spatial extents are ceil(H/stride), ceil(W/stride).
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    xd, kd = x.data, kernel.data
    if xd.ndim != 4 or kd.ndim != 4:
        raise ValueError("conv2d expects (N,H,W,Cin) input and (k,k,Cin,Cout) kernel")
    k = kd.shape[0]
    if kd.shape[1] != k:
        raise ValueError("conv2d kernel must be square")
    if kd.shape[2] != xd.shape[3]:
        raise ValueError(f"channel mismatch: input Cin={xd.shape[3]}, kernel Cin={kd.shape[2]}")
    n, h, w, cin = xd.shape
    cout = kd.shape[3]
    ho, wo = -(-h // stride), -(-w // stride)
    pt, pb = _same_pad(h, k, stride)
    pl, pr = _same_pad(w, k, stride)
    xp = np.pad(xd, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    cols = _im2col2d(xp, k, stride, ho, wo)
    flat = cols.reshape(n * ho * wo, k * k * cin)
    y = (flat @ kd.reshape(k * k * cin, cout)).reshape(n, ho, wo, cout)
    out = Tensor(maybe_check(y, "conv2d"), requires_grad=_wants_grad(tape, x, kernel))
    if out.requires_grad:
        def bwd(g):
            gf = g.reshape(n * ho * wo, cout)
            if kernel.requires_grad:
                accumulate_grad(kernel, (flat.T @ gf).reshape(kd.shape))
            if x.requires_grad:
                dcols = (gf @ kd.reshape(k * k * cin, cout).T).reshape(n, ho, wo, k, k, cin)
                dxp = np.zeros_like(xp)
                for di in range(k):
                    for dj in range(k):
                        dxp[:, di:di + stride * ho:stride,
                            dj:dj + stride * wo:stride, :] += dcols[:, :, :, di, dj, :]
                accumulate_grad(x, dxp[:, pt:pt + h, pl:pl + w, :])
        tape.record([out], [x, kernel], bwd)
    return out


def conv3d(x, kernel, stride: int = 1, tape: Tape | None = None) -> Tensor:
    """Same-padded 3-D convolution over a (T,H,W,Cin) volume or (B,T,H,W,Cin) batch.

    kernel: (kt,k,k,Cin,Cout); temporal stride is fixed at 1 with zero
    temporal same-padding, spatial stride as given.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    squeeze = x.data.ndim == 4
    xd = x.data[None] if squeeze else x.data
    kd = kernel.data
    if xd.shape[1] < 1:
        raise ValueError("conv3d requires at least one frame")
    if kd.ndim != 5:
        raise ValueError("conv3d kernel must be (kt,k,k,Cin,Cout)")
    if kd.shape[3] != xd.shape[4]:
        raise ValueError(f"channel mismatch: input Cin={xd.shape[4]}, kernel Cin={kd.shape[3]}")
    b, t, h, w, cin = xd.shape
    kt, k = kd.shape[0], kd.shape[1]
    cout = kd.shape[4]
    ho, wo = -(-h // stride), -(-w // stride)
    ptt, ptb = _same_pad(t, kt, 1)
    pt, pb = _same_pad(h, k, stride)
    pl, pr = _same_pad(w, k, stride)
    xp = np.pad(xd, ((0, 0), (ptt, ptb), (pt, pb), (pl, pr), (0, 0)))
    cols = np.empty((b, t, ho, wo, kt, k, k, cin), dtype=xp.dtype)
    for dt in range(kt):
        for di in range(k):
            for dj in range(k):
                cols[:, :, :, :, dt, di, dj, :] = xp[:, dt:dt + t,
                                                     di:di + stride * ho:stride,
                                                     dj:dj + stride * wo:stride, :]
    flat = cols.reshape(b * t * ho * wo, kt * k * k * cin)
    y = (flat @ kd.reshape(kt * k * k * cin, cout)).reshape(b, t, ho, wo, cout)
    res = y[0] if squeeze else y
    out = Tensor(maybe_check(res, "conv3d"), requires_grad=_wants_grad(tape, x, kernel))
    if out.requires_grad:
        def bwd(g):
            if squeeze:
                g = g[None]
            gf = g.reshape(b * t * ho * wo, cout)
            if kernel.requires_grad:
                accumulate_grad(kernel, (flat.T @ gf).reshape(kd.shape))
            if x.requires_grad:
                dcols = (gf @ kd.reshape(kt * k * k * cin, cout).T).reshape(
                    b, t, ho, wo, kt, k, k, cin)
                dxp = np.zeros_like(xp)
                for dt in range(kt):
                    for di in range(k):
                        for dj in range(k):
                            dxp[:, dt:dt + t,
                                di:di + stride * ho:stride,
                                dj:dj + stride * wo:stride, :] += dcols[:, :, :, :, dt, di, dj, :]
                dx = dxp[:, ptt:ptt + t, pt:pt + h, pl:pl + w, :]
                accumulate_grad(x, dx[0] if squeeze else dx)
        tape.record([out], [x, kernel], bwd)
    return out


def scatter_to_padded(packed, t_idx: np.ndarray, b_idx: np.ndarray,
                      t_max: int, batch: int, tape: Tape | None = None) -> Tensor:
    """Scatter (N,D) packed rows into a zero-initialized (t_max, batch, D) block."""
    packed = as_tensor(packed)
    d = packed.data.shape[1]
    y = np.zeros((t_max, batch, d), dtype=packed.data.dtype)
    y[t_idx, b_idx] = packed.data
    out = Tensor(y, requires_grad=_wants_grad(tape, packed))
    if out.requires_grad:
        tape.record([out], [packed], lambda g: accumulate_grad(packed, g[t_idx, b_idx]))
    return out
