"""LSTM cell and a fused full-sequence op with hand-rolled BPTT.

Gate layout in the stacked weight matrices is [input, forget, output,
candidate] so one sigmoid covers the three gates. The new cell state is
clipped elementwise to [-cell_clip, cell_clip] *before* the hidden state is
produced, so |c| never exceeds the bound.

The fused sequence op precomputes the input projection for all timesteps in
one GEMM and records a single tape entry per layer; padded timesteps
(t >= length) carry state through unchanged and emit zero outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..gradcore import Tensor, accumulate_grad, check_finite
from ..gradcore.ops import as_tensor, _wants_grad

CELL_CLIP = 10.0


@dataclass
class LSTMLayerParams:
    wx: Tensor  # (4H, D)
    wh: Tensor  # (4H, H)
    b: Tensor   # (4H,)

    @property
    def hidden(self) -> int:
        return self.wh.shape[1]

    @property
    def input_dim(self) -> int:
        return self.wx.shape[1]

    def named(self, prefix: str):
        return {f"{prefix}.wx": self.wx, f"{prefix}.wh": self.wh, f"{prefix}.b": self.b}

    def groups(self, prefix: str):
        return {f"{prefix}.wx": "recurrent", f"{prefix}.wh": "recurrent"}


def init_lstm_layer(rng: np.random.Generator, d_in: int, hidden: int,
                    dtype=np.float32, forget_bias: float = 1.0) -> LSTMLayerParams:
    def glorot(shape, fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape).astype(dtype)

    wx = glorot((4 * hidden, d_in), d_in, hidden)
    wh = glorot((4 * hidden, hidden), hidden, hidden)
    b = np.zeros(4 * hidden, dtype=dtype)
    b[hidden:2 * hidden] = forget_bias
    return LSTMLayerParams(Tensor(wx, requires_grad=True),
                           Tensor(wh, requires_grad=True),
                           Tensor(b, requires_grad=True))


def _sigmoid(x):
    # exp overflow saturates to exactly 0/1, which is the right limit
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def _gates(z, hid):
    """z (B,4H) -> sigmoid(i,f,o), tanh(g) with layout [i, f, o, g]."""
    s = _sigmoid(z[:, :3 * hid])
    g = np.tanh(z[:, 3 * hid:])
    return s[:, :hid], s[:, hid:2 * hid], s[:, 2 * hid:], g


def lstm_step(x, h, c, params: LSTMLayerParams, cell_clip: float = CELL_CLIP,
              tape=None):
    """One LSTM step: (B,D) input, (B,H) states -> (h_new, c_new)."""
    x, h, c = as_tensor(x), as_tensor(h), as_tensor(c)
    wx, wh, b = params.wx, params.wh, params.b
    hid = params.hidden
    if x.shape[-1] != params.input_dim or h.shape[-1] != hid or c.shape[-1] != hid:
        raise ValueError("lstm_step width mismatch")
    z = x.data @ wx.data.T + h.data @ wh.data.T + b.data
    i, f, o, g = _gates(z, hid)
    c_raw = f * c.data + i * g
    clip_mask = np.abs(c_raw) <= cell_clip
    c_new = np.clip(c_raw, -cell_clip, cell_clip)
    tc = np.tanh(c_new)
    h_new = o * tc
    check_finite(h_new, "lstm state")
    req = _wants_grad(tape, x, h, c, wx, wh, b)
    out_h = Tensor(h_new, requires_grad=req)
    out_c = Tensor(c_new, requires_grad=req)
    if req:
        xd, hd, cd = x.data, h.data, c.data

        def bwd(gh, gc):
            do = gh * tc
            dct = gc + gh * o * (1.0 - tc * tc)
            dcraw = dct * clip_mask
            dz = np.empty_like(z)
            dz[:, :hid] = dcraw * g * i * (1 - i)
            dz[:, hid:2 * hid] = dcraw * cd * f * (1 - f)
            dz[:, 2 * hid:3 * hid] = do * o * (1 - o)
            dz[:, 3 * hid:] = dcraw * i * (1 - g * g)
            accumulate_grad(x, dz @ wx.data)
            accumulate_grad(h, dz @ wh.data)
            accumulate_grad(c, dcraw * f)
            accumulate_grad(wx, dz.T @ xd)
            accumulate_grad(wh, dz.T @ hd)
            accumulate_grad(b, dz.sum(axis=0))

        tape.record([out_h, out_c], [x, h, c, wx, wh, b], bwd)
    return out_h, out_c


def lstm_sequence(x, lengths, params: LSTMLayerParams, h0=None, c0=None,
                  cell_clip: float = CELL_CLIP, keep_input: float = 1.0,
                  keep_state: float = 1.0, keep_output: float = 1.0,
                  training: bool = False, rng: np.random.Generator | None = None,
                  tape=None):
    """Run one LSTM layer over a (T,B,D) block with per-sequence lengths.

    Returns (outputs (T,B,H), h_final (B,H), c_final (B,H)); outputs beyond a
    sequence's length are zero and the final state is the state at length-1.
    Dropout (inverted) is applied per timestep to layer inputs, to the hidden
    state entering the gates, and to the emitted outputs while training.
    """
    x = as_tensor(x)
    xd = x.data
    t_max, batch, d_in = xd.shape
    if t_max < 1:
        raise ValueError("empty input sequence")
    hid = params.hidden
    dtype = xd.dtype
    lengths = np.asarray(lengths, dtype=np.int64)

    h0 = as_tensor(h0 if h0 is not None else np.zeros((batch, hid), dtype=dtype))
    c0 = as_tensor(c0 if c0 is not None else np.zeros((batch, hid), dtype=dtype))
    wx, wh, b = params.wx, params.wh, params.b

    use_drop = training and (keep_input < 1.0 or keep_state < 1.0 or keep_output < 1.0)
    if use_drop:
        if rng is None:
            rng = np.random.default_rng()
        def mk(shape, keep):
            if keep >= 1.0:
                return None
            return (rng.random(shape) < keep).astype(dtype) / dtype.type(keep)
        in_mask = mk((t_max, batch, d_in), keep_input)
        st_mask = mk((t_max, batch, hid), keep_state)
        out_mask = mk((t_max, batch, hid), keep_output)
    else:
        in_mask = st_mask = out_mask = None

    x_in = xd * in_mask if in_mask is not None else xd
    xz = (x_in.reshape(t_max * batch, d_in) @ wx.data.T + b.data).reshape(t_max, batch, 4 * hid)

    valid = (np.arange(t_max)[:, None] < lengths[None, :])  # (T,B)
    gates = np.empty((t_max, batch, 4 * hid), dtype=dtype)
    tc_all = np.empty((t_max, batch, hid), dtype=dtype)
    c_prev_all = np.empty((t_max, batch, hid), dtype=dtype)
    clip_all = np.empty((t_max, batch, hid), dtype=bool)
    h_in_all = np.empty((t_max, batch, hid), dtype=dtype)
    outputs = np.zeros((t_max, batch, hid), dtype=dtype)

    h = h0.data.astype(dtype, copy=True)
    c = c0.data.astype(dtype, copy=True)
    for t in range(t_max):
        h_in = h * st_mask[t] if st_mask is not None else h
        h_in_all[t] = h_in
        z = xz[t] + h_in @ wh.data.T
        zt = gates[t]
        zt[:, :3 * hid] = _sigmoid(z[:, :3 * hid])
        np.tanh(z[:, 3 * hid:], out=zt[:, 3 * hid:])
        i, f, o = zt[:, :hid], zt[:, hid:2 * hid], zt[:, 2 * hid:3 * hid]
        g = zt[:, 3 * hid:]
        c_prev_all[t] = c
        c_raw = f * c + i * g
        clip_all[t] = np.abs(c_raw) <= cell_clip
        c_new = np.clip(c_raw, -cell_clip, cell_clip)
        tc = np.tanh(c_new)
        h_new = o * tc
        tc_all[t] = tc
        v = valid[t][:, None]
        h = np.where(v, h_new, h)
        c = np.where(v, c_new, c)
        out_t = h_new * out_mask[t] if out_mask is not None else h_new
        outputs[t] = np.where(v, out_t, 0.0)

    check_finite(h, "lstm state")
    req = _wants_grad(tape, x, h0, c0, wx, wh, b)
    out_seq = Tensor(outputs, requires_grad=req)
    out_h = Tensor(h, requires_grad=req)
    out_c = Tensor(c, requires_grad=req)

    if req:
        def bwd(g_out, g_h, g_c):
            dh = g_h.astype(dtype, copy=True)
            dc = g_c.astype(dtype, copy=True)
            dz_all = np.empty((t_max, batch, 4 * hid), dtype=dtype)
            for t in range(t_max - 1, -1, -1):
                v = valid[t][:, None]
                dout = g_out[t] * out_mask[t] if out_mask is not None else g_out[t]
                dh_tot = dh + np.where(v, dout, 0.0)
                zt = gates[t]
                i, f, o = zt[:, :hid], zt[:, hid:2 * hid], zt[:, 2 * hid:3 * hid]
                g = zt[:, 3 * hid:]
                tc = tc_all[t]
                do = dh_tot * tc
                dct = dc + dh_tot * o * (1.0 - tc * tc)
                dcraw = dct * clip_all[t]
                dz = dz_all[t]
                dz[:, :hid] = dcraw * g * i * (1 - i)
                dz[:, hid:2 * hid] = dcraw * c_prev_all[t] * f * (1 - f)
                dz[:, 2 * hid:3 * hid] = do * o * (1 - o)
                dz[:, 3 * hid:] = dcraw * i * (1 - g * g)
                dz *= v
                dh_gate = dz @ wh.data
                if st_mask is not None:
                    dh_gate = dh_gate * st_mask[t]
                dh = np.where(v, dh_gate, dh_tot)
                dc = np.where(v, dcraw * f, dc)
            dz_flat = dz_all.reshape(t_max * batch, 4 * hid)
            if wx.requires_grad:
                accumulate_grad(wx, dz_flat.T @ x_in.reshape(t_max * batch, d_in))
            if wh.requires_grad:
                accumulate_grad(wh, dz_flat.T @ h_in_all.reshape(t_max * batch, hid))
            if b.requires_grad:
                accumulate_grad(b, dz_flat.sum(axis=0))
            if x.requires_grad:
                dx = (dz_flat @ wx.data).reshape(t_max, batch, d_in)
                if in_mask is not None:
                    dx = dx * in_mask
                accumulate_grad(x, dx)
            accumulate_grad(h0, dh)
            accumulate_grad(c0, dc)

        tape.record([out_seq, out_h, out_c], [x, h0, c0, wx, wh, b], bwd)
    return out_seq, out_h, out_c


def reverse_sequence(x, lengths, tape=None):
    """Reverse each sequence's valid prefix along the time axis; padding stays put."""
    x = as_tensor(x)
    t_max, batch = x.data.shape[0], x.data.shape[1]
    lengths = np.asarray(lengths, dtype=np.int64)
    ts = np.arange(t_max)[:, None]
    idx = np.where(ts < lengths[None, :], lengths[None, :] - 1 - ts, ts)
    cols = np.broadcast_to(np.arange(batch)[None, :], idx.shape)
    out = Tensor(x.data[idx, cols], requires_grad=_wants_grad(tape, x))
    if out.requires_grad:
        # the per-column permutation is an involution: applying it to the
        # upstream grad scatters it back
        tape.record([out], [x], lambda g: accumulate_grad(x, g[idx, cols]))
    return out
