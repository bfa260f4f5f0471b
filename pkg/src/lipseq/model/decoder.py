"""Attention decoder: two LSTM layers fed with [previous-symbol embedding ;
previous context], initialised from the encoder's thought vector.

In training mode the previous symbol is the ground truth, replaced from time
to time (with probability sampling_prob) by the previous step's argmax so
the network learns to recover from its own mistakes. Inference runs the same
forward code without a tape; monotonic attention then switches to its hard
online scan.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, replace

import numpy as np

from ..gradcore import Tensor, ops
from .attention import (AttentionParams, init_attention, precompute_memory,
                        content_attention, monotonic_attention_soft, monotonic_p,
                        monotonic_attention_hard, initial_alignment)
from .encoder import EncoderOutput
from .lstm import LSTMLayerParams, init_lstm_layer, lstm_step


@dataclass
class DecoderParams:
    embedding: Tensor
    cells: list[LSTMLayerParams]
    w_out: Tensor
    b_out: Tensor
    attention: AttentionParams | None
    attention_mode: str
    memory_dim: int
    hidden: int

    @property
    def vocab(self) -> int:
        return self.embedding.shape[0]

    def named(self) -> OrderedDict[str, Tensor]:
        d: OrderedDict[str, Tensor] = OrderedDict()
        d["dec.embedding"] = self.embedding
        for i, cell in enumerate(self.cells, start=1):
            d.update(cell.named(f"dec.l{i}"))
        d["dec.w_out"] = self.w_out
        d["dec.b_out"] = self.b_out
        if self.attention is not None:
            d.update(self.attention.named("attn"))
        return d

    def groups(self) -> dict[str, str]:
        g: dict[str, str] = {}
        for i, cell in enumerate(self.cells, start=1):
            g.update(cell.groups(f"dec.l{i}"))
        return g


def init_decoder(rng: np.random.Generator, vocab: int, memory_dim: int,
                 attention_mode: str = "luong", emb_dim: int = 32,
                 hidden: int = 128, attn_dim: int = 128, dtype=np.float32,
                 luong_scale_init: float = 1.0, monotonic_bias_init: float = -4.0,
                 monotonic_scale_init: float | None = None,
                 noise_enabled: bool = False) -> DecoderParams:
    def glorot(shape):
        limit = np.sqrt(6.0 / sum(shape))
        return rng.uniform(-limit, limit, size=shape).astype(dtype)

    embedding = Tensor(glorot((vocab, emb_dim)), requires_grad=True)
    cells = [init_lstm_layer(rng, emb_dim + memory_dim, hidden, dtype),
             init_lstm_layer(rng, hidden, hidden, dtype)]
    w_out = Tensor(glorot((hidden + memory_dim, vocab)), requires_grad=True)
    b_out = Tensor(np.zeros(vocab, dtype=dtype), requires_grad=True)
    attention = None
    if attention_mode != "none":
        attention = init_attention(rng, attention_mode, hidden, memory_dim,
                                   attn_dim, dtype, luong_scale_init,
                                   monotonic_bias_init, monotonic_scale_init,
                                   noise_enabled)
    return DecoderParams(embedding, cells, w_out, b_out, attention,
                         attention_mode, memory_dim, hidden)


def _cell_with_dropout(cell, x, h, c, keeps, cell_clip, training, rng, tape):
    keep_in, keep_state, keep_out = keeps
    x = ops.dropout(x, keep_in, training, rng=rng, tape=tape)
    h_in = ops.dropout(h, keep_state, training, rng=rng, tape=tape)
    h_new, c_new = lstm_step(x, h_in, c, cell, cell_clip, tape)
    h_out = ops.dropout(h_new, keep_out, training, rng=rng, tape=tape)
    return h_out, h_new, c_new


def decode_train(dec: DecoderParams, enc_out: EncoderOutput, targets: np.ndarray,
                 target_lengths: np.ndarray, start_id: int, end_id: int,
                 pad_id: int = 0, sampling_prob: float = 0.1,
                 keeps=(1.0, 1.0, 1.0), cell_clip: float = 10.0,
                 training: bool = True, rng: np.random.Generator | None = None,
                 tape=None):
    """Teacher-forced decode with scheduled ground-truth replacement.

    targets: (B, U') padded token block (no sentinels); one extra step is
    decoded for the end token. Returns (logits (U,B,V) Tensor,
    alignments (U,B,T) array, targets_out (U,B), loss mask (U,B)).
    """
    targets = np.asarray(targets)
    target_lengths = np.asarray(target_lengths, dtype=np.int64)
    if targets.ndim != 2 or np.any(target_lengths < 1):
        raise ValueError("decode_train requires a nonempty (B,U') target block")
    batch = targets.shape[0]
    u_max = int(target_lengths.max()) + 1
    t_max = enc_out.memory.shape[0]
    dtype = enc_out.memory.dtype
    if rng is None:
        rng = np.random.default_rng()

    steps = np.arange(u_max)[:, None]
    targets_out = np.full((u_max, batch), pad_id, dtype=np.int64)
    for u in range(u_max):
        inside = u < target_lengths
        if inside.any():
            targets_out[u, inside] = targets[inside, u]
        targets_out[u, u == target_lengths] = end_id
    loss_mask = steps <= target_lengths[None, :]

    memory_bt = ops.transpose(enc_out.memory, (1, 0, 2), tape)
    mask_bt = enc_out.mask.T
    mem_proj = None
    if dec.attention is not None and dec.attention.style in ("bahdanau", "monotonic"):
        mem_proj = precompute_memory(dec.attention, memory_bt, tape)

    (h1, c1), (h2, c2) = enc_out.init_states
    ctx = Tensor(np.zeros((batch, dec.memory_dim), dtype=dtype))
    alpha_prev = Tensor(initial_alignment(batch, t_max, dtype))
    y_cur = np.full(batch, start_id, dtype=np.int64)

    logits_steps = []
    alignments = np.zeros((u_max, batch, t_max), dtype=np.float64)
    for u in range(u_max):
        emb = ops.gather_rows(dec.embedding, y_cur, tape)
        x = ops.concat([emb, ctx], axis=1, tape=tape)
        h1o, h1, c1 = _cell_with_dropout(dec.cells[0], x, h1, c1, keeps,
                                         cell_clip, training, rng, tape)
        h2o, h2, c2 = _cell_with_dropout(dec.cells[1], h1o, h2, c2, keeps,
                                         cell_clip, training, rng, tape)
        if dec.attention_mode == "none":
            ctx = Tensor(np.zeros((batch, dec.memory_dim), dtype=dtype))
        elif dec.attention_mode == "monotonic":
            ctx, alpha = monotonic_attention_soft(
                dec.attention, h2o, memory_bt, mask_bt, alpha_prev, mem_proj,
                training=training, rng=rng, tape=tape)
            alignments[u] = alpha.data
            alpha_prev = alpha
        else:
            ctx, weights = content_attention(dec.attention, h2o, memory_bt,
                                             mask_bt, mem_proj, tape)
            alignments[u] = weights.data
        logits_u = ops.dense(ops.concat([h2o, ctx], axis=1, tape=tape),
                             dec.w_out, dec.b_out, tape)
        logits_steps.append(logits_u)
        if u + 1 < u_max:
            gt = np.where(u < target_lengths, targets[:, min(u, targets.shape[1] - 1)],
                          pad_id).astype(np.int64)
            if training and sampling_prob > 0.0:
                coin = rng.random(batch) < sampling_prob
                pred = logits_u.data.argmax(axis=1)
                y_cur = np.where(coin, pred, gt)
            else:
                y_cur = gt
    logits = ops.stack(logits_steps, axis=0, tape=tape)
    return logits, alignments, targets_out, loss_mask


# ---------------------------------------------------------------------------
# inference stepping (shared by greedy and beam decoding)

@dataclass
class InferenceContext:
    memory_bt: np.ndarray            # (B,T,E)
    mask_bt: np.ndarray              # (B,T)
    mem_proj: np.ndarray | None      # (B,T,A)
    lengths: np.ndarray


@dataclass
class DecodeState:
    h1: np.ndarray
    c1: np.ndarray
    h2: np.ndarray
    c2: np.ndarray
    ctx: np.ndarray
    alpha: np.ndarray | None         # content/soft path: previous alignment
    positions: np.ndarray | None     # hard monotonic scan positions

    @property
    def batch(self) -> int:
        return self.h1.shape[0]

    def take(self, idx) -> "DecodeState":
        return DecodeState(
            self.h1[idx], self.c1[idx], self.h2[idx], self.c2[idx], self.ctx[idx],
            None if self.alpha is None else self.alpha[idx],
            None if self.positions is None else self.positions[idx])


def prepare_inference(dec: DecoderParams, enc_out: EncoderOutput) -> InferenceContext:
    memory_bt = np.ascontiguousarray(enc_out.memory.data.transpose(1, 0, 2))
    mem_proj = None
    if dec.attention is not None and dec.attention.style in ("bahdanau", "monotonic"):
        proj = precompute_memory(dec.attention, ops.as_tensor(memory_bt))
        mem_proj = proj.data
    return InferenceContext(memory_bt, enc_out.mask.T.copy(), mem_proj,
                            enc_out.lengths.copy())


def init_decode_state(dec: DecoderParams, enc_out: EncoderOutput) -> DecodeState:
    (h1, c1), (h2, c2) = enc_out.init_states
    batch = h1.shape[0]
    t_max = enc_out.memory.shape[0]
    dtype = enc_out.memory.dtype
    ctx = np.zeros((batch, dec.memory_dim), dtype=dtype)
    if dec.attention_mode == "monotonic":
        return DecodeState(h1.data.copy(), c1.data.copy(), h2.data.copy(),
                           c2.data.copy(), ctx, None,
                           np.zeros(batch, dtype=np.int64))
    return DecodeState(h1.data.copy(), c1.data.copy(), h2.data.copy(),
                       c2.data.copy(), ctx, None, None)


def _bcast(arr: np.ndarray | None, n: int):
    if arr is None or arr.shape[0] == n:
        return arr
    return np.broadcast_to(arr, (n,) + arr.shape[1:])


def decoder_step_infer(dec: DecoderParams, ctxinfo: InferenceContext,
                       state: DecodeState, tokens: np.ndarray,
                       cell_clip: float = 10.0):
    """One evaluation-mode decoder step.

    Returns (log-probabilities (B,V) float64, new state, alignment row (B,T)).
    Monotonic attention runs its hard online scan here.
    """
    n = state.batch
    memory_bt = _bcast(ctxinfo.memory_bt, n)
    mask_bt = _bcast(ctxinfo.mask_bt, n)
    mem_proj = _bcast(ctxinfo.mem_proj, n)
    t_max = memory_bt.shape[1]

    emb = dec.embedding.data[np.asarray(tokens, dtype=np.int64)]
    x = np.concatenate([emb, state.ctx], axis=1)
    h1, c1 = lstm_step(ops.as_tensor(x), ops.as_tensor(state.h1),
                       ops.as_tensor(state.c1), dec.cells[0], cell_clip)
    h2, c2 = lstm_step(h1, ops.as_tensor(state.h2), ops.as_tensor(state.c2),
                       dec.cells[1], cell_clip)

    positions = state.positions
    if dec.attention_mode == "none":
        ctx = np.zeros((n, dec.memory_dim), dtype=memory_bt.dtype)
        weights = np.zeros((n, t_max), dtype=np.float64)
    elif dec.attention_mode == "monotonic":
        p = monotonic_p(dec.attention, h2, ops.as_tensor(memory_bt), mask_bt,
                        ops.as_tensor(mem_proj) if mem_proj is not None else None)
        weights, ctx, positions = monotonic_attention_hard(p.data, memory_bt,
                                                           state.positions)
    else:
        ctx_t, w_t = content_attention(
            dec.attention, h2, ops.as_tensor(memory_bt), mask_bt,
            ops.as_tensor(mem_proj) if mem_proj is not None else None)
        ctx, weights = ctx_t.data, w_t.data

    logits = np.concatenate([h2.data, ctx], axis=1) @ dec.w_out.data + dec.b_out.data
    logits = logits.astype(np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logprobs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    new_state = DecodeState(h1.data, c1.data, h2.data, c2.data,
                            np.asarray(ctx, dtype=memory_bt.dtype),
                            None, positions)
    return logprobs, new_state, np.asarray(weights, dtype=np.float64)
