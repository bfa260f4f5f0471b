"""Model assembly and the per-batch forward pass shared by train and eval.

A Model bundles the front-end (CNN weights when learned), encoder, decoder,
optional CTC head, and the flat parameter registry used by the optimizer,
checkpoints, and L2 groups.
"""

from __future__ import annotations

import os
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from ..corpus import vocab
from ..corpus.data import SentenceRecord, stream_rng
from ..errors import ConfigError, DataError
from ..frontend import (dct_features, zero_features, load_clip, load_features,
                        load_frames_dir, preprocess, to_grayscale, resize_bilinear,
                        CNNParams, init_cnn_params, cnn2d_apply, cnn3d_apply,
                        FrameSequence, DCT_DIM, CNN_DIM)
from ..gradcore import Tensor, ops
from ..model import (EncoderParams, init_encoder, encode, DecoderParams,
                     init_decoder, decode_train)
from ..objectives import (cross_entropy_sequence_loss, ctc_loss, joint_loss,
                          ctc_required_length, LossReport)
from .config import ExperimentConfig


def frontend_spec(cfg: ExperimentConfig):
    """(kind, in_channels, input_size, feature_dim) for the configured front-end."""
    return {
        "dct": ("dct", 1, 36, DCT_DIM),
        "zeros": ("zeros", 1, 36, cfg.zeros_dim),
        "cnn2d": ("cnn2d", 1, 36, CNN_DIM),
        "cnn2d_rgb": ("cnn2d", 3, 36, CNN_DIM),
        "cnn2d_64": ("cnn2d", 1, 64, CNN_DIM),
        "cnn3d": ("cnn3d", 1, 36, CNN_DIM),
    }[cfg.frontend]


@dataclass
class Model:
    config: ExperimentConfig
    encoder: EncoderParams
    decoder: DecoderParams
    cnn: CNNParams | None
    ctc_w: Tensor | None
    ctc_b: Tensor | None
    params: OrderedDict[str, Tensor]
    groups: dict[str, str]
    feat_dim: int

    @property
    def memory_dim(self) -> int:
        return self.encoder.memory_dim

    def rnn_keeps(self):
        c = self.config
        return (c.keep_input, c.keep_state, c.keep_output)


def build_model(cfg: ExperimentConfig) -> Model:
    cfg.validate()
    kind, cin, size, feat_dim = frontend_spec(cfg)
    rng = stream_rng(cfg.seed, "init")
    dtype = np.float32

    cnn = None
    if kind in ("cnn2d", "cnn3d"):
        cnn = init_cnn_params(rng, in_channels=cin, input_size=size,
                              temporal=(kind == "cnn3d"), dtype=dtype)
    encoder = init_encoder(rng, feat_dim, hidden=cfg.hidden, mode=cfg.encoder,
                           dec_hidden=cfg.hidden, dtype=dtype)
    decoder = init_decoder(rng, vocab.VOCAB_SIZE, encoder.memory_dim,
                           attention_mode=cfg.attention, emb_dim=cfg.embed_dim,
                           hidden=cfg.hidden, attn_dim=cfg.attn_dim, dtype=dtype,
                           luong_scale_init=cfg.luong_scale_init,
                           monotonic_bias_init=cfg.monotonic_bias_init,
                           monotonic_scale_init=cfg.monotonic_scale_init,
                           noise_enabled=cfg.monotonic_noise)
    ctc_w = ctc_b = None
    if cfg.loss == "joint":
        limit = np.sqrt(6.0 / (encoder.memory_dim + vocab.CTC_CLASSES))
        ctc_w = Tensor(rng.uniform(-limit, limit,
                                   (encoder.memory_dim, vocab.CTC_CLASSES)).astype(dtype),
                       requires_grad=True)
        ctc_b = Tensor(np.zeros(vocab.CTC_CLASSES, dtype=dtype), requires_grad=True)

    params: OrderedDict[str, Tensor] = OrderedDict()
    groups: dict[str, str] = {}
    if cnn is not None:
        params.update(cnn.named())
        groups.update(cnn.groups())
    params.update(encoder.named())
    groups.update(encoder.groups())
    params.update(decoder.named())
    groups.update(decoder.groups())
    if ctc_w is not None:
        params["ctc.w"] = ctc_w
        params["ctc.b"] = ctc_b
    return Model(cfg, encoder, decoder, cnn, ctc_w, ctc_b, params, groups, feat_dim)


def load_model_weights(model: Model, ckpt_params: dict[str, np.ndarray]) -> None:
    """Copy checkpoint arrays into the model registry; shapes must agree."""
    missing = [k for k in model.params if k not in ckpt_params]
    extra = [k for k in ckpt_params if k not in model.params]
    if missing or extra:
        raise ConfigError(f"checkpoint/config mismatch: missing={missing[:4]} "
                          f"extra={extra[:4]}")
    for name, tensor in model.params.items():
        arr = ckpt_params[name]
        if tuple(arr.shape) != tuple(tensor.data.shape):
            if name == "dec.embedding":
                raise ConfigError(f"vocabulary mismatch: checkpoint embedding "
                                  f"{arr.shape} vs model {tensor.data.shape}")
            raise ConfigError(f"shape mismatch for {name}: checkpoint {arr.shape} "
                              f"vs model {tensor.data.shape}")
        tensor.data = arr.astype(tensor.data.dtype)


# ---------------------------------------------------------------------------
# record loading (frames or features, with in-memory caching)

class RecordLoader:
    """Maps a SentenceRecord to the arrays the configured front-end consumes."""

    def __init__(self, cfg: ExperimentConfig):
        self.kind, self.cin, self.size, self.feat_dim = frontend_spec(cfg)
        self.cfg = cfg
        self._cache: dict[str, dict] = {}

    def _load_frames(self, record: SentenceRecord) -> np.ndarray:
        path = record.path
        if os.path.isdir(path):
            clip = load_frames_dir(path, record.clip_id)
        else:
            clip = load_clip(path, record.clip_id)
        frames = clip.frames.astype(np.float32)
        if frames.shape[1] != self.size or frames.shape[2] != self.size:
            frames = resize_bilinear(frames, self.size, self.size)
            frames = np.clip(frames, 0.0, 1.0)
        if self.cin == 1 and frames.shape[3] == 3:
            frames = to_grayscale(frames)
        elif self.cin == 3 and frames.shape[3] == 1:
            frames = np.repeat(frames, 3, axis=3)
        return frames

    def __call__(self, record: SentenceRecord) -> dict:
        hit = self._cache.get(record.clip_id)
        if hit is not None:
            return hit
        if record.path.endswith(".vsf"):
            feats = load_features(record.path)
            if self.kind not in ("dct", "zeros") or feats.dim != self.feat_dim:
                raise DataError(f"{record.clip_id}: cached features ({feats.source}, "
                                f"D={feats.dim}) do not fit front-end {self.cfg.frontend}")
            item = {"features": feats.features.astype(np.float32)}
        elif self.kind == "zeros":
            item = {"features": np.zeros((record.n_frames, self.feat_dim),
                                         dtype=np.float32)}
        elif self.kind == "dct":
            frames = self._load_frames(record)
            feats = dct_features(FrameSequence(frames, clip_id=record.clip_id))
            item = {"features": feats.features.astype(np.float32)}
        else:
            item = {"frames": self._load_frames(record)}
        self._cache[record.clip_id] = item
        return item


# ---------------------------------------------------------------------------
# batch forward

def frontend_forward(model: Model, batch, training: bool, rng, tape):
    """Turn a Batch into a (T,B,D) feature Tensor (through the CNN if learned)."""
    cfg = model.config
    if batch.features is not None:
        return ops.as_tensor(np.ascontiguousarray(batch.features.transpose(1, 0, 2)))
    frames = batch.frames
    b, t_max = frames.shape[0], frames.shape[1]
    if model.cnn is None:
        raise ConfigError("batch carries frames but the front-end is not a CNN")
    if model.cnn.temporal:
        feats = cnn3d_apply(model.cnn, frames, training, rng, cfg.cnn_dropout, tape)
        return ops.transpose(feats, (1, 0, 2), tape)
    lengths = batch.feature_lengths
    t_idx_list, b_idx_list = [], []
    for i in range(b):
        n = int(lengths[i])
        t_idx_list.append(np.arange(n))
        b_idx_list.append(np.full(n, i))
    t_idx = np.concatenate(t_idx_list)
    b_idx = np.concatenate(b_idx_list)
    packed = frames[b_idx, t_idx]                     # (N,H,W,C) valid frames only
    feats = cnn2d_apply(model.cnn, packed, training, rng, cfg.cnn_dropout, tape)
    return ops.scatter_to_padded(feats, t_idx, b_idx, t_max, b, tape)


def forward_batch(model: Model, batch, training: bool, rng, tape):
    """Full forward pass; returns (loss Tensor, LossReport, logits, alignments)."""
    cfg = model.config
    feats = frontend_forward(model, batch, training, rng, tape)
    enc_out = encode(model.encoder, feats, batch.feature_lengths,
                     cell_clip=cfg.cell_clip, keep_input=cfg.keep_input,
                     keep_state=cfg.keep_state, keep_output=cfg.keep_output,
                     training=training, rng=rng, tape=tape)
    logits, alignments, targets_out, mask = decode_train(
        model.decoder, enc_out, batch.targets, batch.target_lengths,
        start_id=vocab.START_ID, end_id=vocab.END_ID, pad_id=vocab.PAD_ID,
        sampling_prob=cfg.sampling_prob, keeps=model.rnn_keeps(),
        cell_clip=cfg.cell_clip, training=training, rng=rng, tape=tape)
    ce = cross_entropy_sequence_loss(logits, targets_out, mask, tape)
    ctc = None
    if cfg.loss == "joint":
        for i, cid in enumerate(batch.clip_ids):
            needed = ctc_required_length(batch.targets[i, :batch.target_lengths[i]])
            if int(batch.feature_lengths[i]) < needed:
                raise DataError(f"CTC pair infeasible for clip {cid}: "
                                f"{batch.feature_lengths[i]} frames < {needed} needed")
        t_max, b, e = enc_out.memory.shape
        flat = ops.reshape(enc_out.memory, (t_max * b, e), tape)
        ctc_logits = ops.reshape(ops.dense(flat, model.ctc_w, model.ctc_b, tape),
                                 (t_max, b, vocab.CTC_CLASSES), tape)
        ctc_targets = [[int(t) - 1 for t in batch.targets[i, :batch.target_lengths[i]]]
                       for i in range(b)]
        ctc = ctc_loss(ctc_logits, ctc_targets, batch.feature_lengths,
                       blank=vocab.BLANK_ID, tape=tape)
    total = joint_loss(ce, ctc, cfg.lambda_ctc, tape) if ctc is not None else ce
    report = LossReport(float(ce.data), None if ctc is None else float(ctc.data),
                        cfg.lambda_ctc)
    return total, report, logits, alignments
