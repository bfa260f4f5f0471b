"""Alignment-matrix export: decode one clip and write the decoder's attention
weights as numeric text and as an 8-bit PGM image (rows = decoder steps,
columns = encoder steps, [0, max] scaled linearly to [0, 255])."""

from __future__ import annotations

import os

import numpy as np

from ..corpus import vocab
from ..corpus.data import load_manifest
from ..errors import ConfigError, DataError
from ..model import encode, prepare_inference, init_decode_state, decoder_step_infer
from ..objectives import beam_search_decode, default_max_len
from .build import RecordLoader, frontend_forward
from .config import ExperimentConfig
from .evaluate import load_model_from_checkpoint


def alignment_for_record(model, record, loader) -> tuple[np.ndarray, list[int]]:
    """Beam-decode one clip; returns (alignment (steps, T), decoded tokens)."""
    from ..corpus.data import collate

    cfg = model.config
    batch = collate([record], loader)
    feats = frontend_forward(model, batch, training=False, rng=None, tape=None)
    enc_out = encode(model.encoder, feats, batch.feature_lengths,
                     cell_clip=cfg.cell_clip, training=False)
    ctxinfo = prepare_inference(model.decoder, enc_out)
    state = init_decode_state(model.decoder, enc_out)
    step = lambda s, t: decoder_step_infer(model.decoder, ctxinfo, s, t, cfg.cell_clip)
    hyps = beam_search_decode(step, state, vocab.START_ID, vocab.END_ID,
                              width=cfg.beam_width,
                              max_len=default_max_len(record.n_frames),
                              exclude_ids=(vocab.PAD_ID, vocab.START_ID),
                              length_normalize=cfg.length_normalize)
    best = hyps[0]
    if best.alignment is None:
        raise ConfigError("no alignment to export")
    return best.alignment[:, :record.n_frames], best.tokens


def save_alignment_text(path, matrix: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in matrix:
            fh.write("\t".join(f"{v:.6f}" for v in row) + "\n")


def save_alignment_pgm(path, matrix: np.ndarray) -> None:
    peak = float(matrix.max())
    scaled = np.zeros_like(matrix) if peak <= 0 else matrix / peak
    img = np.round(scaled * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        fh.write(img.tobytes())


def run_align(ckpt_path, manifest, clip_id, out_prefix,
              cfg: ExperimentConfig | None = None) -> np.ndarray:
    model = load_model_from_checkpoint(ckpt_path, cfg)
    if model.config.attention == "none":
        raise ConfigError("no alignment to export: this config has attention=none")
    records = [r for r in load_manifest(manifest) if r.clip_id == clip_id]
    if not records:
        raise DataError(f"clip {clip_id!r} not found in {manifest}")
    loader = RecordLoader(model.config)
    matrix, _ = alignment_for_record(model, records[0], loader)
    os.makedirs(os.path.dirname(os.path.abspath(out_prefix)), exist_ok=True)
    save_alignment_text(out_prefix + ".txt", matrix)
    save_alignment_pgm(out_prefix + ".pgm", matrix)
    return matrix
