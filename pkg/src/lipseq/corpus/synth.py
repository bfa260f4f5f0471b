"""Synthetic rendered-viseme dataset: a desk-scale stand-in corpus.

Each viseme class owns a fixed, visually distinct 36x36 binary glyph.
A sentence is a viseme sequence drawn from a unigram prior in which the two
dominant classes ("lips relaxed narrow opening" and "tongue up or down")
jointly carry 52.56% of the mass; the sentence is framed by Silence at both
ends, and every token is rendered for a uniform-random number of frames with
optional Gaussian pixel noise. Generation is a pure function of the seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from ..errors import DataError
from ..frontend.video import FrameSequence, save_clip
from . import vocab
from .data import SentenceRecord, stream_rng, save_manifest

GLYPH_SIZE = 36
SILENCE_ID = vocab.SHORT_TO_ID["silence"]
TOP2_IDS = (vocab.SHORT_TO_ID["lips_relaxed_narrow"],
            vocab.SHORT_TO_ID["tongue_up_down"])
DEFAULT_TOP2_MASS = 0.5256


def viseme_glyphs(size: int = GLYPH_SIZE) -> np.ndarray:
    """The 12 canonical binary glyphs, indexed by viseme id."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy = cx = (size - 1) / 2.0
    r2 = (yy - cy) ** 2 + (xx - cx) ** 2
    cell = size // 6
    glyphs = np.zeros((vocab.N_VISEMES, size, size), dtype=np.float32)
    glyphs[0] = yy < size / 2                                   # top half
    glyphs[1] = xx < size / 2                                   # left half
    glyphs[2] = yy >= xx                                        # lower triangle
    glyphs[3] = ((yy // cell) + (xx // cell)) % 2               # coarse checker
    glyphs[4] = ((yy // (cell // 2)) + (xx // (cell // 2))) % 2  # fine checker
    glyphs[5] = (yy // cell) % 2                                # horizontal stripes
    glyphs[6] = (xx // cell) % 2                                # vertical stripes
    glyphs[7] = r2 < (size / 3.0) ** 2                          # disk
    glyphs[8] = (r2 >= (size / 4.5) ** 2) & (r2 < (size / 2.4) ** 2)  # ring
    glyphs[9] = (np.abs(yy - cy) < size / 6) | (np.abs(xx - cx) < size / 6)  # cross
    glyphs[10] = (np.abs(yy - xx) < size / 7) | (np.abs(yy + xx - (size - 1)) < size / 7)  # X
    glyphs[11] = np.minimum.reduce([yy, xx, size - 1 - yy, size - 1 - xx]) < size / 7  # frame
    return glyphs


def unigram_prior(top2_mass: float = DEFAULT_TOP2_MASS) -> np.ndarray:
    """Class probabilities: the two dominant visemes split `top2_mass` evenly,
    the remaining ten classes share the rest."""
    if not 0.0 < top2_mass < 1.0:
        raise ValueError("top2_mass must lie in (0, 1)")
    p = np.full(vocab.N_VISEMES, (1.0 - top2_mass) / (vocab.N_VISEMES - 2))
    for vid in TOP2_IDS:
        p[vid] = top2_mass / 2.0
    return p


@dataclass
class SynthConfig:
    n_sentences: int = 100
    seed: int = 0
    noise_sigma: float = 0.1
    duration_range: tuple[int, int] = (4, 10)
    length_range: tuple[int, int] = (10, 65)   # total tokens incl. framing silences
    top2_mass: float = DEFAULT_TOP2_MASS

    def __post_init__(self):
        lo, hi = self.length_range
        if lo < 3 or hi < lo:
            raise ValueError("length_range must satisfy 3 <= lo <= hi "
                             "(two framing silences plus content)")
        dlo, dhi = self.duration_range
        if dlo < 1 or dhi < dlo:
            raise ValueError("duration_range must satisfy 1 <= lo <= hi")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


def sample_transcript(rng: np.random.Generator, cfg: SynthConfig) -> list[int]:
    """One viseme-id sequence: silence + unigram draws + silence."""
    prior = unigram_prior(cfg.top2_mass)
    total = int(rng.integers(cfg.length_range[0], cfg.length_range[1] + 1))
    content = rng.choice(vocab.N_VISEMES, size=total - 2, p=prior)
    return [SILENCE_ID] + [int(v) for v in content] + [SILENCE_ID]


def render_sentence(rng: np.random.Generator, tokens, cfg: SynthConfig,
                    glyphs: np.ndarray | None = None) -> np.ndarray:
    """Render (T,36,36,1) frames: per-token glyph, uniform-random duration,
    Gaussian pixel noise, quantised to the packed-clip 8-bit grid."""
    if glyphs is None:
        glyphs = viseme_glyphs()
    durations = rng.integers(cfg.duration_range[0], cfg.duration_range[1] + 1,
                             size=len(tokens))
    frame_ids = np.repeat(np.asarray(tokens), durations)
    frames = glyphs[frame_ids].astype(np.float32)
    if cfg.noise_sigma > 0:
        frames = frames + rng.normal(0.0, cfg.noise_sigma, frames.shape).astype(np.float32)
    frames = np.clip(frames, 0.0, 1.0)
    frames = np.round(frames * 255.0) / np.float32(255.0)
    return frames[..., None]


def synth_generate(cfg: SynthConfig):
    """Generate the corpus in memory: (clips, records). Pure in the seed."""
    glyphs = viseme_glyphs()
    clips: list[FrameSequence] = []
    records: list[SentenceRecord] = []
    for i in range(cfg.n_sentences):
        rng = stream_rng(cfg.seed, "synth", i)
        tokens = sample_transcript(rng, cfg)
        frames = render_sentence(rng, tokens, cfg, glyphs)
        clip_id = f"syn{cfg.seed}_{i:05d}"
        clips.append(FrameSequence(frames, clip_id=clip_id))
        records.append(SentenceRecord(clip_id, f"clips/{clip_id}.vclip",
                                      frames.shape[0], tuple(tokens)))
    return clips, records


def write_dataset(cfg: SynthConfig, out_dir, force: bool = False,
                  cache_dct: bool = False) -> str:
    """Write clips + manifest + generation report; returns the manifest path.

    With cache_dct a parallel `features/` tree of DCT feature-cache files and
    a `manifest_dct.tsv` pointing at them are written as well.
    """
    if os.path.isdir(out_dir) and os.listdir(out_dir) and not force:
        raise DataError(f"output directory {out_dir} exists and is not empty "
                        "(use force to overwrite)")
    clip_dir = os.path.join(out_dir, "clips")
    os.makedirs(clip_dir, exist_ok=True)
    clips, records = synth_generate(cfg)
    for clip, rec in zip(clips, records):
        save_clip(os.path.join(out_dir, rec.path), clip)
    manifest = os.path.join(out_dir, "manifest.tsv")
    save_manifest(manifest, records)
    if cache_dct:
        from ..frontend import dct_features, save_features
        feat_dir = os.path.join(out_dir, "features")
        os.makedirs(feat_dir, exist_ok=True)
        cached = []
        for clip, rec in zip(clips, records):
            rel = f"features/{rec.clip_id}.vsf"
            save_features(os.path.join(out_dir, rel), dct_features(clip))
            cached.append(replace(rec, path=rel))
        save_manifest(os.path.join(out_dir, "manifest_dct.tsv"), cached)
    total_frames = sum(r.n_frames for r in records)
    with open(os.path.join(out_dir, "generation_report.txt"), "w") as fh:
        fh.write(f"n_sentences={cfg.n_sentences}\n")
        fh.write(f"seed={cfg.seed}\n")
        fh.write(f"noise_sigma={cfg.noise_sigma}\n")
        fh.write(f"duration_range={cfg.duration_range[0]}:{cfg.duration_range[1]}\n")
        fh.write(f"length_range={cfg.length_range[0]}:{cfg.length_range[1]}\n")
        fh.write(f"top2_mass={cfg.top2_mass}\n")
        fh.write(f"total_frames={total_frames}\n")
    return manifest
