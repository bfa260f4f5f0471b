"""Manifest-driven data loading, length bucketing, and the epoch batch stream.

Manifest rows are tab-separated:
    clip_id <TAB> path <TAB> frames <TAB> space-separated viseme short names
Paths resolve relative to the manifest's directory. The epoch stream shuffles
records as a pure function of (seed, epoch), groups them into 15-frame
buckets, and emits padded batches drawn within one bucket.
"""

from __future__ import annotations

import os
import zlib
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from . import vocab

BUCKET_WIDTH_FRAMES = 15
PROTOCOL_MIN_LEN = 10
PROTOCOL_MAX_LEN = 65
FRAME_RATE = 30.0


@dataclass
class SentenceRecord:
    clip_id: str
    path: str
    n_frames: int
    tokens: tuple[int, ...]      # viseme ids 0..11, silences included

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)


def stream_rng(seed: int, *tags) -> np.random.Generator:
    """Deterministic named RNG stream: a pure function of (seed, tags)."""
    keys = [int(seed) & 0xFFFFFFFF]
    for tag in tags:
        if isinstance(tag, str):
            keys.append(zlib.crc32(tag.encode("utf-8")))
        else:
            keys.append(int(tag) & 0xFFFFFFFF)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(keys)))


def _is_sa_clip(clip_id: str) -> bool:
    for part in clip_id.replace("-", "_").split("_"):
        up = part.upper()
        if up.startswith("SA") and up[2:3].isdigit():
            return True
    return False


def load_manifest(path, enforce_protocol_lengths: bool = False,
                  exclude_sa: bool = False) -> list[SentenceRecord]:
    """Parse a manifest; malformed rows raise DataError naming the line."""
    records: list[SentenceRecord] = []
    seen: set[str] = set()
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 tab-separated fields, "
                                f"got {len(parts)}")
            clip_id, rel, frames_s, trans = parts
            if clip_id in seen:
                raise DataError(f"{path}:{lineno}: duplicate clip_id {clip_id!r}")
            seen.add(clip_id)
            try:
                frames = int(frames_s)
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad frame count {frames_s!r}") from None
            if frames < 1:
                raise DataError(f"{path}:{lineno}: frame count must be positive")
            names = trans.split()
            if not names:
                raise DataError(f"{path}:{lineno}: missing transcription")
            try:
                tokens = tuple(vocab.names_to_tokens(names))
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if enforce_protocol_lengths and not (
                    PROTOCOL_MIN_LEN <= len(tokens) <= PROTOCOL_MAX_LEN):
                raise DataError(f"{path}:{lineno}: transcription length {len(tokens)} "
                                f"outside protocol range [{PROTOCOL_MIN_LEN}, "
                                f"{PROTOCOL_MAX_LEN}]")
            if exclude_sa and _is_sa_clip(clip_id):
                continue
            full = rel if os.path.isabs(rel) else os.path.join(base, rel)
            records.append(SentenceRecord(clip_id, full, frames, tokens))
    return records


def save_manifest(path, records: list[SentenceRecord], path_prefix: str = "") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            rel = os.path.join(path_prefix, os.path.basename(r.path)) if path_prefix \
                else r.path
            names = " ".join(vocab.tokens_to_names(r.tokens))
            fh.write(f"{r.clip_id}\t{rel}\t{r.n_frames}\t{names}\n")


def bucket_of(n_frames: int, bucket_width: int = BUCKET_WIDTH_FRAMES) -> int:
    return n_frames // bucket_width


def make_buckets(records, bucket_width: int = BUCKET_WIDTH_FRAMES):
    """Group records by floor(frames / bucket_width); returns {bucket: [records]}."""
    buckets: dict[int, list[SentenceRecord]] = {}
    for r in records:
        buckets.setdefault(bucket_of(r.n_frames, bucket_width), []).append(r)
    return buckets


def epoch_record_batches(records, seed: int, epoch_index: int, batch_size: int,
                         bucket_width: int = BUCKET_WIDTH_FRAMES):
    """Bucket-local batches in a shuffled order; pure function of (seed, epoch).

    Every record appears in exactly one batch.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    records = list(records)
    if not records:
        raise DataError("empty corpus")
    rng = stream_rng(seed, "epoch-shuffle", epoch_index)
    order = rng.permutation(len(records))
    shuffled = [records[i] for i in order]
    buckets = make_buckets(shuffled, bucket_width)
    batches = []
    for key in sorted(buckets):
        group = buckets[key]
        for i in range(0, len(group), batch_size):
            batches.append(group[i:i + batch_size])
    batch_order = rng.permutation(len(batches))
    return [batches[i] for i in batch_order]


@dataclass
class Batch:
    """Padded arrays for one batch; padding is zero features / pad tokens."""

    clip_ids: list[str]
    features: np.ndarray | None      # (B, T_max, D) float32, zeros at padding
    frames: np.ndarray | None        # (B, T_max, H, W, C) float32 (CNN front-ends)
    feature_lengths: np.ndarray      # (B,)
    targets: np.ndarray              # (B, U_max) decoder token ids, pad beyond
    target_lengths: np.ndarray       # (B,)

    @property
    def size(self) -> int:
        return len(self.clip_ids)

    def unpad_targets(self) -> list[list[int]]:
        return [list(self.targets[b, :self.target_lengths[b]])
                for b in range(self.size)]

    def unpad_features(self) -> list[np.ndarray]:
        if self.features is None:
            raise ValueError("batch carries frames, not features")
        return [self.features[b, :self.feature_lengths[b]]
                for b in range(self.size)]


def collate(records, loader, pad_id: int = vocab.PAD_ID) -> Batch:
    """Build one padded Batch. `loader(record)` returns a dict with either
    "features" (T,D) or "frames" (T,H,W,C) float32."""
    items = [loader(r) for r in records]
    lengths = np.array([r.n_frames for r in records], dtype=np.int64)
    t_max = int(lengths.max())
    features = frames = None
    if "features" in items[0]:
        d = items[0]["features"].shape[1]
        features = np.zeros((len(records), t_max, d), dtype=np.float32)
        for b, item in enumerate(items):
            feats = item["features"]
            if feats.shape[0] != records[b].n_frames:
                raise DataError(f"{records[b].clip_id}: manifest says "
                                f"{records[b].n_frames} frames, data has {feats.shape[0]}")
            features[b, :feats.shape[0]] = feats
    else:
        shp = items[0]["frames"].shape[1:]
        frames = np.zeros((len(records), t_max) + shp, dtype=np.float32)
        for b, item in enumerate(items):
            fr = item["frames"]
            if fr.shape[0] != records[b].n_frames:
                raise DataError(f"{records[b].clip_id}: manifest says "
                                f"{records[b].n_frames} frames, data has {fr.shape[0]}")
            frames[b, :fr.shape[0]] = fr
    tok_lengths = np.array([r.n_tokens for r in records], dtype=np.int64)
    targets = np.full((len(records), int(tok_lengths.max())), pad_id, dtype=np.int64)
    for b, r in enumerate(records):
        targets[b, :r.n_tokens] = vocab.to_decoder_ids(r.tokens)
    return Batch([r.clip_id for r in records], features, frames, lengths,
                 targets, tok_lengths)


def epoch_stream(records, seed: int, epoch_index: int, batch_size: int, loader,
                 bucket_width: int = BUCKET_WIDTH_FRAMES):
    """Ordered stream of padded Batches for one epoch (deterministic)."""
    for group in epoch_record_batches(records, seed, epoch_index, batch_size,
                                      bucket_width):
        yield collate(group, loader)


def padded_cells(batches) -> int:
    """Total zero-padded feature cells over a batch partition (waste metric)."""
    total = 0
    for group in batches:
        t_max = max(r.n_frames for r in group)
        total += sum(t_max - r.n_frames for r in group)
    return total
