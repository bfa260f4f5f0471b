"""Sequence encoders: two stacked unidirectional LSTM layers, or one
bidirectional layer whose per-direction width is solved so the total LSTM
parameter count matches the unidirectional stack (within 2%).

The encoder exposes all per-timestep outputs as the attention memory and
the final states as the thought vector used to initialise the decoder.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from ..gradcore import Tensor, ops
from .lstm import LSTMLayerParams, init_lstm_layer, lstm_sequence, reverse_sequence


def lstm_param_count(d_in: int, hidden: int) -> int:
    return 4 * hidden * (d_in + hidden) + 4 * hidden


def uni2_param_count(feat_dim: int, hidden: int) -> int:
    return lstm_param_count(feat_dim, hidden) + lstm_param_count(hidden, hidden)


def solve_bi_width(feat_dim: int, budget: int) -> int:
    """Largest per-direction width with 2 * (4w(D+w)+4w) <= budget (quadratic)."""
    d1 = feat_dim + 1
    w = int(math.floor((-d1 + math.sqrt(d1 * d1 + budget / 2.0)) / 2.0))
    while 2 * lstm_param_count(feat_dim, w + 1) <= budget:
        w += 1
    while w > 1 and 2 * lstm_param_count(feat_dim, w) > budget:
        w -= 1
    return w


@dataclass
class EncoderOutput:
    memory: Tensor            # (T, B, E)
    init_states: list         # [(h, c) Tensor pairs], one per decoder layer
    lengths: np.ndarray       # (B,)
    mask: np.ndarray          # (T, B) bool, True at valid steps

    @property
    def memory_dim(self) -> int:
        return self.memory.shape[2]


@dataclass
class EncoderParams:
    mode: str                 # "uni2" | "bi1"
    layers: list              # uni2: [L1, L2]; bi1: [fwd, bwd]
    projections: list = field(default_factory=list)  # bi1: per decoder layer (wh, bh, wc, bc)
    hidden: int = 128

    @property
    def memory_dim(self) -> int:
        if self.mode == "uni2":
            return self.layers[1].hidden
        return 2 * self.layers[0].hidden

    def named(self) -> OrderedDict[str, Tensor]:
        d: OrderedDict[str, Tensor] = OrderedDict()
        tags = ("l1", "l2") if self.mode == "uni2" else ("fwd", "bwd")
        for tag, layer in zip(tags, self.layers):
            d.update(layer.named(f"enc.{tag}"))
        for i, (wh, bh, wc, bc) in enumerate(self.projections, start=1):
            d[f"enc.proj{i}.wh"] = wh
            d[f"enc.proj{i}.bh"] = bh
            d[f"enc.proj{i}.wc"] = wc
            d[f"enc.proj{i}.bc"] = bc
        return d

    def groups(self) -> dict[str, str]:
        g: dict[str, str] = {}
        tags = ("l1", "l2") if self.mode == "uni2" else ("fwd", "bwd")
        for tag, layer in zip(tags, self.layers):
            g.update(layer.groups(f"enc.{tag}"))
        return g


def init_encoder(rng: np.random.Generator, feat_dim: int, hidden: int = 128,
                 mode: str = "uni2", dec_hidden: int = 128, dec_layers: int = 2,
                 dtype=np.float32, bi_width: int | None = None) -> EncoderParams:
    if mode == "uni2":
        layers = [init_lstm_layer(rng, feat_dim, hidden, dtype),
                  init_lstm_layer(rng, hidden, hidden, dtype)]
        return EncoderParams(mode, layers, hidden=hidden)
    if mode == "bi1":
        w = bi_width if bi_width is not None else solve_bi_width(
            feat_dim, uni2_param_count(feat_dim, hidden))
        layers = [init_lstm_layer(rng, feat_dim, w, dtype),
                  init_lstm_layer(rng, feat_dim, w, dtype)]
        projections = []
        def glorot(shape):
            limit = np.sqrt(6.0 / sum(shape))
            return rng.uniform(-limit, limit, size=shape).astype(dtype)
        for _ in range(dec_layers):
            projections.append((
                Tensor(glorot((2 * w, dec_hidden)), requires_grad=True),
                Tensor(np.zeros(dec_hidden, dtype=dtype), requires_grad=True),
                Tensor(glorot((2 * w, dec_hidden)), requires_grad=True),
                Tensor(np.zeros(dec_hidden, dtype=dtype), requires_grad=True),
            ))
        return EncoderParams(mode, layers, projections, hidden=w)
    raise ValueError(f"unknown encoder mode {mode!r}")


def encode(enc: EncoderParams, feats, lengths, cell_clip: float = 10.0,
           keep_input: float = 1.0, keep_state: float = 1.0, keep_output: float = 1.0,
           training: bool = False, rng: np.random.Generator | None = None,
           tape=None) -> EncoderOutput:
    """Encode a (T,B,D) feature block into memory rows and decoder init states."""
    feats = ops.as_tensor(feats)
    if feats.ndim != 3 or feats.shape[0] < 1:
        raise ValueError("encoder input must be a nonempty (T,B,D) block")
    lengths = np.asarray(lengths, dtype=np.int64)
    if np.any(lengths < 1):
        raise ValueError("every sequence must have at least one frame")
    t_max = feats.shape[0]
    mask = np.arange(t_max)[:, None] < lengths[None, :]
    kwargs = dict(cell_clip=cell_clip, keep_input=keep_input, keep_state=keep_state,
                  keep_output=keep_output, training=training, rng=rng, tape=tape)

    if enc.mode == "uni2":
        out1, h1, c1 = lstm_sequence(feats, lengths, enc.layers[0], **kwargs)
        out2, h2, c2 = lstm_sequence(out1, lengths, enc.layers[1], **kwargs)
        return EncoderOutput(out2, [(h1, c1), (h2, c2)], lengths, mask)

    if enc.mode == "bi1":
        fwd_out, hf, cf = lstm_sequence(feats, lengths, enc.layers[0], **kwargs)
        rev_in = reverse_sequence(feats, lengths, tape)
        bwd_raw, hb, cb = lstm_sequence(rev_in, lengths, enc.layers[1], **kwargs)
        bwd_out = reverse_sequence(bwd_raw, lengths, tape)
        memory = ops.concat([fwd_out, bwd_out], axis=2, tape=tape)
        h_cat = ops.concat([hf, hb], axis=1, tape=tape)
        c_cat = ops.concat([cf, cb], axis=1, tape=tape)
        init_states = []
        for wh, bh, wc, bc in enc.projections:
            init_states.append((ops.tanh(ops.dense(h_cat, wh, bh, tape), tape),
                                ops.tanh(ops.dense(c_cat, wc, bc, tape), tape)))
        return EncoderOutput(memory, init_states, lengths, mask)

    raise ValueError(f"unknown encoder mode {enc.mode!r}")
