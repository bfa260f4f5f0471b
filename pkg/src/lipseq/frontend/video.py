"""Frame sequences: the raw video-side value type plus preprocessing and file IO.

Clips live on disk either as a single packed binary (magic + T,H,W,C header
+ uint8 pixel bytes) or as a directory of PGM/PPM frames; in memory they are
float arrays in [0, 1].
"""

from __future__ import annotations

import os
import re
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError

CLIP_MAGIC = b"VSCLIP01"
FEAT_MAGIC = b"VSFEAT01"

LUMA = (0.299, 0.587, 0.114)


@dataclass
class FrameSequence:
    """One video clip: (T,H,W,C) values in [0,1], C in {1,3}."""

    frames: np.ndarray
    frame_rate: float = 30.0
    clip_id: str = ""

    def __post_init__(self):
        f = np.asarray(self.frames)
        if f.ndim == 3:
            f = f[..., None]
        if f.ndim != 4 or f.shape[0] < 1:
            raise ValueError(f"frames must be (T,H,W,C) with T >= 1, got {f.shape}")
        if f.shape[3] not in (1, 3):
            raise ValueError(f"channel count must be 1 or 3, got {f.shape[3]}")
        if f.size and (f.min() < -1e-9 or f.max() > 1.0 + 1e-9):
            raise ValueError("frame values must lie in [0, 1]")
        self.frames = f

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def is_gray(self) -> bool:
        return self.frames.shape[3] == 1


@dataclass
class FeatureSequence:
    """Per-frame visual features: (T,D) matrix plus its source tag."""

    features: np.ndarray
    source: str
    clip_id: str = ""

    def __post_init__(self):
        f = np.asarray(self.features)
        if f.ndim != 2:
            raise ValueError(f"features must be (T,D), got {f.shape}")
        self.features = f

    @property
    def n_frames(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def to_grayscale(frames: np.ndarray) -> np.ndarray:
    """RGB -> single luma channel with weights 0.299/0.587/0.114."""
    if frames.shape[-1] == 1:
        return frames
    w = np.asarray(LUMA, dtype=frames.dtype)
    return (frames @ w)[..., None]


def resize_bilinear(frames: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel centers: src = (dst+0.5)*scale - 0.5."""
    t, h, w, c = frames.shape
    if (h, w) == (out_h, out_w):
        return frames.copy()
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[None, :, None, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, None, :, None]
    tl = frames[:, y0][:, :, x0]
    tr = frames[:, y0][:, :, x1]
    bl = frames[:, y1][:, :, x0]
    br = frames[:, y1][:, :, x1]
    top = tl * (1 - wx) + tr * wx
    bot = bl * (1 - wx) + br * wx
    return top * (1 - wy) + bot * wy


def preprocess(raw: FrameSequence, crop_box=None, target_size=(36, 36),
               to_gray: bool = True) -> FrameSequence:
    """Crop, bilinearly resize, and optionally convert to grayscale.

    crop_box is (top, left, height, width) and must lie inside the frame.
    """
    frames = raw.frames
    t, h, w, _ = frames.shape
    if crop_box is not None:
        top, left, ch, cw = crop_box
        if top < 0 or left < 0 or ch < 1 or cw < 1 or top + ch > h or left + cw > w:
            raise ValueError(f"crop box {crop_box} outside {h}x{w} frame")
        frames = frames[:, top:top + ch, left:left + cw, :]
    frames = resize_bilinear(frames, target_size[0], target_size[1])
    if to_gray:
        frames = to_grayscale(frames)
    frames = np.clip(frames, 0.0, 1.0)
    return FrameSequence(frames, frame_rate=raw.frame_rate, clip_id=raw.clip_id)


# ---------------------------------------------------------------------------
# packed clip binary

def save_clip(path, clip: FrameSequence) -> None:
    frames = np.round(np.clip(clip.frames, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(CLIP_MAGIC)
        fh.write(struct.pack("<IIII", *frames.shape))
        fh.write(frames.tobytes())


def load_clip(path, clip_id: str = "") -> FrameSequence:
    with open(path, "rb") as fh:
        if fh.read(8) != CLIP_MAGIC:
            raise DataError(f"not a packed clip: {path}")
        t, h, w, c = struct.unpack("<IIII", fh.read(16))
        raw = np.frombuffer(fh.read(t * h * w * c), dtype=np.uint8)
        if raw.size != t * h * w * c:
            raise DataError(f"truncated clip file: {path}")
    frames = raw.reshape(t, h, w, c).astype(np.float32) / 255.0
    return FrameSequence(frames, clip_id=clip_id or os.path.splitext(os.path.basename(path))[0])


# ---------------------------------------------------------------------------
# PGM/PPM frames (binary P5/P6, maxval 255)

def save_pnm(path, image: np.ndarray) -> None:
    """Write one (H,W) or (H,W,C) image in [0,1] as binary PGM/PPM."""
    img = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    code = b"P5" if img.ndim == 2 else b"P6"
    with open(path, "wb") as fh:
        fh.write(code + b"\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        fh.write(img.tobytes())


def load_pnm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    m = re.match(rb"(P[56])\s+(?:#[^\n]*\s+)*(\d+)\s+(\d+)\s+(\d+)\s", data)
    if not m:
        raise DataError(f"unsupported PNM file: {path}")
    code, w, h, maxval = m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4))
    if maxval != 255:
        raise DataError(f"only 8-bit PNM supported, got maxval {maxval}")
    c = 1 if code == b"P5" else 3
    pixels = np.frombuffer(data[m.end():], dtype=np.uint8)[:h * w * c]
    if pixels.size != h * w * c:
        raise DataError(f"truncated PNM file: {path}")
    return pixels.reshape(h, w, c).astype(np.float32) / 255.0


def load_frames_dir(path, clip_id: str = "") -> FrameSequence:
    names = sorted(n for n in os.listdir(path)
                   if n.lower().endswith((".pgm", ".ppm")))
    if not names:
        raise DataError(f"no PGM/PPM frames in {path}")
    frames = np.stack([load_pnm(os.path.join(path, n)) for n in names])
    return FrameSequence(frames, clip_id=clip_id or os.path.basename(path.rstrip("/")))


# ---------------------------------------------------------------------------
# feature cache

def save_features(path, feats: FeatureSequence) -> None:
    with open(path, "wb") as fh:
        fh.write(FEAT_MAGIC)
        cid = feats.clip_id.encode("utf-8")
        src = feats.source.encode("utf-8")
        fh.write(struct.pack("<H", len(cid)))
        fh.write(cid)
        fh.write(struct.pack("<II", feats.n_frames, feats.dim))
        fh.write(struct.pack("<B", len(src)))
        fh.write(src)
        fh.write(np.asarray(feats.features, dtype="<f4").tobytes())


def load_features(path) -> FeatureSequence:
    with open(path, "rb") as fh:
        if fh.read(8) != FEAT_MAGIC:
            raise DataError(f"not a feature cache file: {path}")
        (nid,) = struct.unpack("<H", fh.read(2))
        clip_id = fh.read(nid).decode("utf-8")
        t, d = struct.unpack("<II", fh.read(8))
        (ns,) = struct.unpack("<B", fh.read(1))
        source = fh.read(ns).decode("utf-8")
        data = np.frombuffer(fh.read(4 * t * d), dtype="<f4")
        if data.size != t * d:
            raise DataError(f"truncated feature file: {path}")
    return FeatureSequence(data.reshape(t, d).copy(), source=source, clip_id=clip_id)
