"""Attention mechanisms: scaled Luong, Bahdanau, and online monotonic.

Content attention soft-selects memory rows with softmax weights. Monotonic
attention computes per-position selection probabilities p_t = sigmoid(e_t + r)
from a normalised-v energy and either takes the expectation over all hard
monotonic scans (training) or scans greedily left to right (decoding).
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from ..gradcore import Tensor, accumulate_grad, ops
from ..gradcore.ops import as_tensor, _wants_grad

NEG_INF = -1e30


def _glorot(rng, shape, dtype):
    limit = np.sqrt(6.0 / sum(shape))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


@dataclass
class AttentionParams:
    style: str                       # "luong" | "bahdanau" | "monotonic"
    w_q: Tensor | None = None        # luong: (Q,E); bahdanau/monotonic: (Q,A)
    w_m: Tensor | None = None        # (E,A)
    b: Tensor | None = None          # (A,)
    v: Tensor | None = None          # (A,)
    g: Tensor | None = None          # scalar energy gain
    r: Tensor | None = None          # scalar sigmoid bias (monotonic)
    noise_enabled: bool = False      # pre-sigmoid noise (off per training recipe)
    noise_scale: float = 1.0

    def named(self, prefix: str = "attn") -> OrderedDict[str, Tensor]:
        d: OrderedDict[str, Tensor] = OrderedDict()
        for key in ("w_q", "w_m", "b", "v", "g", "r"):
            t = getattr(self, key)
            if t is not None:
                d[f"{prefix}.{key}"] = t
        return d


def init_attention(rng: np.random.Generator, style: str, query_dim: int,
                   memory_dim: int, attn_dim: int = 128, dtype=np.float32,
                   luong_scale_init: float = 1.0, monotonic_bias_init: float = -4.0,
                   monotonic_scale_init: float | None = None,
                   noise_enabled: bool = False) -> AttentionParams:
    if style == "luong":
        return AttentionParams(
            style,
            w_q=Tensor(_glorot(rng, (query_dim, memory_dim), dtype), requires_grad=True),
            g=Tensor(np.asarray(luong_scale_init, dtype=dtype), requires_grad=True))
    if style == "bahdanau":
        return AttentionParams(
            style,
            w_q=Tensor(_glorot(rng, (query_dim, attn_dim), dtype), requires_grad=True),
            w_m=Tensor(_glorot(rng, (memory_dim, attn_dim), dtype), requires_grad=True),
            b=Tensor(np.zeros(attn_dim, dtype=dtype), requires_grad=True),
            v=Tensor(_glorot(rng, (attn_dim,), dtype), requires_grad=True))
    if style == "monotonic":
        if monotonic_bias_init > 0:
            raise ValueError("monotonic scalar bias must initialise non-positive")
        if monotonic_scale_init is None:
            monotonic_scale_init = 1.0 / np.sqrt(attn_dim)
        return AttentionParams(
            style,
            w_q=Tensor(_glorot(rng, (query_dim, attn_dim), dtype), requires_grad=True),
            w_m=Tensor(_glorot(rng, (memory_dim, attn_dim), dtype), requires_grad=True),
            b=Tensor(np.zeros(attn_dim, dtype=dtype), requires_grad=True),
            v=Tensor(_glorot(rng, (attn_dim,), dtype), requires_grad=True),
            g=Tensor(np.asarray(monotonic_scale_init, dtype=dtype), requires_grad=True),
            r=Tensor(np.asarray(monotonic_bias_init, dtype=dtype), requires_grad=True),
            noise_enabled=noise_enabled)
    raise ValueError(f"unknown attention style {style!r}")


def precompute_memory(p: AttentionParams, memory_bt, tape=None):
    """Per-batch memory-side projection reused across decoder steps."""
    if p.style == "luong" or p.w_m is None:
        return None
    b, t, e = memory_bt.shape
    flat = ops.reshape(memory_bt, (b * t, e), tape)
    proj = ops.matmul(flat, p.w_m, tape)
    return ops.reshape(proj, (b, t, -1), tape)


def _tanh_energies(p: AttentionParams, query, mem_proj, tape):
    pre = ops.dense(query, p.w_q, p.b, tape)          # (B,A)
    b, t, a = mem_proj.shape
    s = ops.tanh(ops.add(ops.reshape(pre, (b, 1, a), tape), mem_proj, tape), tape)
    return s  # (B,T,A)


def content_attention(p: AttentionParams, query, memory_bt, mask, mem_proj=None,
                      tape=None):
    """Soft selection over memory rows: returns (context (B,E), weights (B,T)).

    luong: e_t = g * (q W) . m_t ; bahdanau: e_t = v . tanh(W_q q + W_m m_t + b).
    Rows beyond a sequence's length receive zero weight.
    """
    b, t, e = memory_bt.shape
    if p.style == "luong":
        qw = ops.matmul(query, p.w_q, tape)                          # (B,E)
        en = ops.bmm(memory_bt, ops.reshape(qw, (b, e, 1), tape), tape)
        en = ops.mul(ops.reshape(en, (b, t), tape), p.g, tape)
    elif p.style == "bahdanau":
        if mem_proj is None:
            mem_proj = precompute_memory(p, memory_bt, tape)
        s = _tanh_energies(p, query, mem_proj, tape)
        en = ops.sum_(ops.mul(s, ops.reshape(p.v, (1, 1, -1), tape), tape),
                      axis=2, tape=tape)
    else:
        raise ValueError(f"content_attention got style {p.style!r}")
    if mask is not None:
        en = ops.masked_fill(en, ~mask, NEG_INF, tape)
    weights = ops.softmax(en, axis=1, tape=tape)
    context = ops.bmm(ops.reshape(weights, (b, 1, t), tape), memory_bt, tape)
    return ops.reshape(context, (b, e), tape), weights


def monotonic_p(p: AttentionParams, query, memory_bt, mask, mem_proj=None,
                training: bool = False, rng: np.random.Generator | None = None,
                tape=None):
    """Selection probabilities p_t = sigmoid(g * (v/|v|) . tanh(...) + r)."""
    if mem_proj is None:
        mem_proj = precompute_memory(p, memory_bt, tape)
    s = _tanh_energies(p, query, mem_proj, tape)       # (B,T,A)
    vnorm = ops.sqrt(ops.sum_(ops.mul(p.v, p.v, tape), tape=tape), tape)
    vscaled = ops.mul(p.v, ops.div(p.g, vnorm, tape), tape)
    en = ops.sum_(ops.mul(s, ops.reshape(vscaled, (1, 1, -1), tape), tape),
                  axis=2, tape=tape)
    en = ops.add(en, p.r, tape)
    if p.noise_enabled and training:
        if rng is None:
            rng = np.random.default_rng()
        noise = (rng.standard_normal(en.shape) * p.noise_scale).astype(en.data.dtype)
        en = ops.add(en, Tensor(noise), tape)
    if mask is not None:
        en = ops.masked_fill(en, ~mask, NEG_INF, tape)
    return ops.sigmoid(en, tape)


def monotonic_expected_alignment(p, alpha_prev, tape=None):
    """Expected monotonic alignment via the stable recurrence.

    q_1 = alpha_prev_1; q_t = (1 - p_{t-1}) q_{t-1} + alpha_prev_t;
    alpha_t = p_t q_t. Equals the enumeration over all hard monotonic scans:
    alpha_t = sum_{k<=t} alpha_prev_k p_t prod_{j=k}^{t-1} (1 - p_j).
    """
    p = as_tensor(p)
    alpha_prev = as_tensor(alpha_prev)
    pd, ad = p.data, alpha_prev.data
    b, t = pd.shape
    q = np.empty_like(pd)
    q[:, 0] = ad[:, 0]
    for i in range(1, t):
        q[:, i] = (1.0 - pd[:, i - 1]) * q[:, i - 1] + ad[:, i]
    alpha = pd * q
    out = Tensor(alpha, requires_grad=_wants_grad(tape, p, alpha_prev))
    if out.requires_grad:
        def bwd(g):
            dp = np.zeros_like(pd)
            da = np.zeros_like(ad)
            dq_next = None
            for i in range(t - 1, -1, -1):
                dq = g[:, i] * pd[:, i]
                if dq_next is not None:
                    dq = dq + dq_next * (1.0 - pd[:, i])
                    dp[:, i] -= dq_next * q[:, i]
                dp[:, i] += g[:, i] * q[:, i]
                da[:, i] = dq
                dq_next = dq
            accumulate_grad(p, dp)
            accumulate_grad(alpha_prev, da)
        tape.record([out], [p, alpha_prev], bwd)
    return out


def monotonic_attention_soft(p: AttentionParams, query, memory_bt, mask,
                             alpha_prev, mem_proj=None, training: bool = False,
                             rng=None, tape=None):
    """Soft (expected) monotonic attention step.

    Returns (context (B,E), alignment (B,T), alignment) where the alignment is
    also the next step's alpha_prev. Weight rows sum to at most 1; leftover
    mass corresponds to scans that run off the end of the memory.
    """
    b, t, e = memory_bt.shape
    probs = monotonic_p(p, query, memory_bt, mask, mem_proj, training, rng, tape)
    alpha = monotonic_expected_alignment(probs, alpha_prev, tape)
    context = ops.bmm(ops.reshape(alpha, (b, 1, t), tape), memory_bt, tape)
    return ops.reshape(context, (b, e), tape), alpha


def initial_alignment(batch: int, t_max: int, dtype=np.float32) -> np.ndarray:
    """One-hot on the first frame: the first decoder step scans from frame 1."""
    a = np.zeros((batch, t_max), dtype=dtype)
    a[:, 0] = 1.0
    return a


def monotonic_attention_hard(p_values: np.ndarray, memory_bt: np.ndarray,
                             positions: np.ndarray):
    """Greedy online scan: from the previous position, select the first
    memory index with p >= 0.5 (one-hot weights); if none, emit a zero
    context and keep the position. Positions never decrease.
    """
    b, t = p_values.shape
    cols = np.arange(t)[None, :]
    eligible = (p_values >= 0.5) & (cols >= positions[:, None])
    found = eligible.any(axis=1)
    sel = np.where(found, eligible.argmax(axis=1), 0)
    weights = np.zeros_like(p_values)
    weights[found, sel[found]] = 1.0
    context = np.einsum("bt,bte->be", weights, memory_bt)
    new_pos = np.where(found, sel, positions)
    return weights, context, new_pos
