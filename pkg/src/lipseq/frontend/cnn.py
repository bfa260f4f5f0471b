"""Learned visual front-ends: small 4-layer 2D and 3D CNN feature encoders.

Both share one plan: 16/32/64/128 feature detectors, 3x3 (or 3x3x3) kernels,
ReLU activations, stride 2 from the second layer on, 50% dropout between
convolutions while training, then flatten and a dense layer producing a
128-wide feature vector per frame.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from ..gradcore import Tensor, ops
from .video import FrameSequence, FeatureSequence

CHANNELS = (16, 32, 64, 128)
FEATURE_DIM = 128
SUPPORTED_SIZES = {36, 64}


def spatial_chain(size: int) -> int:
    """Output extent after the stride-1 layer and three stride-2 layers."""
    for _ in range(3):
        size = -(-size // 2)
    return size


def flatten_width(size: int) -> int:
    s = spatial_chain(size)
    return s * s * CHANNELS[-1]


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


@dataclass
class CNNParams:
    kernels: list[Tensor]
    biases: list[Tensor]
    w_out: Tensor
    b_out: Tensor
    input_size: int
    in_channels: int
    temporal: bool

    def named(self, prefix: str = "cnn") -> OrderedDict[str, Tensor]:
        d: OrderedDict[str, Tensor] = OrderedDict()
        for i, (k, b) in enumerate(zip(self.kernels, self.biases), start=1):
            d[f"{prefix}.k{i}"] = k
            d[f"{prefix}.b{i}"] = b
        d[f"{prefix}.w_out"] = self.w_out
        d[f"{prefix}.b_out"] = self.b_out
        return d

    def groups(self, prefix: str = "cnn") -> dict[str, str]:
        return {f"{prefix}.k{i}": "conv" for i in range(1, len(self.kernels) + 1)}


def init_cnn_params(rng: np.random.Generator, in_channels: int = 1,
                    input_size: int = 36, temporal: bool = False,
                    dtype=np.float32) -> CNNParams:
    if input_size not in SUPPORTED_SIZES:
        raise ValueError(f"unsupported spatial size {input_size}x{input_size}")
    kernels, biases = [], []
    cin = in_channels
    for cout in CHANNELS:
        if temporal:
            shape = (3, 3, 3, cin, cout)
            fan_in = 27 * cin
            fan_out = 27 * cout
        else:
            shape = (3, 3, cin, cout)
            fan_in = 9 * cin
            fan_out = 9 * cout
        kernels.append(Tensor(_glorot(rng, shape, fan_in, fan_out, dtype), requires_grad=True))
        biases.append(Tensor(np.zeros(cout, dtype=dtype), requires_grad=True))
        cin = cout
    flat = flatten_width(input_size)
    w_out = Tensor(_glorot(rng, (flat, FEATURE_DIM), flat, FEATURE_DIM, dtype), requires_grad=True)
    b_out = Tensor(np.zeros(FEATURE_DIM, dtype=dtype), requires_grad=True)
    return CNNParams(kernels, biases, w_out, b_out, input_size, in_channels, temporal)


def _check_input(p: CNNParams, shape) -> None:
    h, w, c = shape[-3], shape[-2], shape[-1]
    if h != p.input_size or w != p.input_size:
        raise ValueError(f"unsupported spatial size {h}x{w}; "
                         f"this front-end expects {p.input_size}x{p.input_size}")
    if c != p.in_channels:
        raise ValueError(f"channel mismatch: got {c}, expected {p.in_channels}")


def cnn2d_apply(p: CNNParams, frames, training: bool = False,
                rng: np.random.Generator | None = None, dropout_rate: float = 0.5,
                tape=None) -> Tensor:
    """Per-frame 2D CNN: (N,H,W,C) -> (N,128)."""
    x = ops.as_tensor(frames)
    _check_input(p, x.shape)
    keep = 1.0 - dropout_rate
    for i, (kern, bias) in enumerate(zip(p.kernels, p.biases)):
        stride = 1 if i == 0 else 2
        x = ops.conv2d(x, kern, stride, tape)
        x = ops.add(x, ops.reshape(bias, (1, 1, 1, -1), tape), tape)
        x = ops.relu(x, tape)
        if i < len(p.kernels) - 1:
            x = ops.dropout(x, keep, training, rng=rng, tape=tape)
    n = x.shape[0]
    x = ops.reshape(x, (n, -1), tape)
    return ops.dense(x, p.w_out, p.b_out, tape)


def cnn3d_apply(p: CNNParams, clips, training: bool = False,
                rng: np.random.Generator | None = None, dropout_rate: float = 0.5,
                tape=None) -> Tensor:
    """3D CNN over (T,H,W,C) or (B,T,H,W,C); frame count is preserved."""
    x = ops.as_tensor(clips)
    _check_input(p, x.shape)
    squeeze = x.ndim == 4
    if squeeze:
        x = ops.reshape(x, (1,) + x.shape, tape)
    keep = 1.0 - dropout_rate
    for i, (kern, bias) in enumerate(zip(p.kernels, p.biases)):
        stride = 1 if i == 0 else 2
        x = ops.conv3d(x, kern, stride, tape)
        x = ops.add(x, ops.reshape(bias, (1, 1, 1, 1, -1), tape), tape)
        x = ops.relu(x, tape)
        if i < len(p.kernels) - 1:
            x = ops.dropout(x, keep, training, rng=rng, tape=tape)
    b, t = x.shape[0], x.shape[1]
    x = ops.reshape(x, (b * t, -1), tape)
    feats = ops.dense(x, p.w_out, p.b_out, tape)
    feats = ops.reshape(feats, (b, t, FEATURE_DIM), tape)
    if squeeze:
        feats = ops.reshape(feats, (t, FEATURE_DIM), tape)
    return feats


def cnn2d_features(clip: FrameSequence, p: CNNParams, training: bool = False,
                   rng: np.random.Generator | None = None) -> FeatureSequence:
    out = cnn2d_apply(p, clip.frames.astype(p.w_out.data.dtype), training, rng)
    return FeatureSequence(out.data, source="cnn2d", clip_id=clip.clip_id)


def cnn3d_features(clip: FrameSequence, p: CNNParams, training: bool = False,
                   rng: np.random.Generator | None = None) -> FeatureSequence:
    if not clip.is_gray:
        raise ValueError("3D CNN front-end expects grayscale clips")
    out = cnn3d_apply(p, clip.frames.astype(p.w_out.data.dtype), training, rng)
    return FeatureSequence(out.data, source="cnn3d", clip_id=clip.clip_id)
