"""Handcrafted visual features: low-frequency 2D-DCT coefficients plus deltas.

Per frame we take the orthonormal DCT-II of the 36x36 gray lip region, keep
the 44 lowest-frequency coefficients in zig-zag order ((u+v) ascending, then
u ascending; the DC term is included), and append first and second temporal
regression derivatives over a +/-2 frame window with edge replication,
giving 44*3 = 132 values per frame.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .video import FrameSequence, FeatureSequence

N_COEFF = 44
DELTA_WINDOW = 2
FEATURE_DIM = 3 * N_COEFF


@lru_cache(maxsize=8)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis: rows indexed by frequency u."""
    x = np.arange(n)
    u = np.arange(n)[:, None]
    mat = np.cos(np.pi * (2 * x[None, :] + 1) * u / (2 * n))
    mat *= np.sqrt(2.0 / n)
    mat[0] *= np.sqrt(0.5)
    return mat


@lru_cache(maxsize=8)
def zigzag_indices(n: int, count: int) -> tuple[np.ndarray, np.ndarray]:
    """First `count` (u,v) pairs ordered by u+v ascending, then u ascending."""
    pairs = sorted(((u, v) for u in range(n) for v in range(n)),
                   key=lambda p: (p[0] + p[1], p[0]))
    pairs = pairs[:count]
    us = np.array([p[0] for p in pairs])
    vs = np.array([p[1] for p in pairs])
    return us, vs


def frame_dct_coefficients(frame: np.ndarray, count: int = N_COEFF) -> np.ndarray:
    """Zig-zag-selected orthonormal 2D DCT-II coefficients of one gray frame."""
    if frame.ndim == 3:
        frame = frame[..., 0]
    n = frame.shape[0]
    if frame.shape[1] != n:
        raise ValueError(f"frame must be square, got {frame.shape}")
    d = dct_matrix(n)
    coeffs = d @ frame.astype(np.float64) @ d.T
    us, vs = zigzag_indices(n, count)
    return coeffs[us, vs]


def regression_deltas(x: np.ndarray, window: int = DELTA_WINDOW) -> np.ndarray:
    """Temporal regression derivative over +/-window frames, edges replicated.

    delta[t] = sum_d d*(x[t+d] - x[t-d]) / (2 * sum_d d^2)
    """
    t = x.shape[0]
    denom = 2.0 * sum(d * d for d in range(1, window + 1))
    out = np.zeros_like(x)
    idx = np.arange(t)
    for d in range(1, window + 1):
        fwd = np.minimum(idx + d, t - 1)
        bwd = np.maximum(idx - d, 0)
        out += d * (x[fwd] - x[bwd])
    return out / denom


def dct_features(clip: FrameSequence) -> FeatureSequence:
    """44 DCT coefficients per frame plus delta and delta-delta (D = 132)."""
    if clip.n_frames < 1:
        raise ValueError("clip must have at least one frame")
    if not clip.is_gray:
        raise ValueError("DCT features require grayscale input")
    static = np.stack([frame_dct_coefficients(f) for f in clip.frames])
    d1 = regression_deltas(static)
    d2 = regression_deltas(d1)
    feats = np.concatenate([static, d1, d2], axis=1)
    return FeatureSequence(feats, source="dct", clip_id=clip.clip_id)


def zero_features(n_frames: int, dim: int = FEATURE_DIM, clip_id: str = "") -> FeatureSequence:
    """The zero-feature ablation: an input-independent all-zero (T,D) block."""
    if n_frames < 1 or dim < 1:
        raise ValueError("n_frames and dim must be positive")
    return FeatureSequence(np.zeros((n_frames, dim)), source="zeros", clip_id=clip_id)
