"""Versioned binary parameter checkpoints.

Layout (all integers little-endian):
    magic   8 bytes  b"LIPSEQCP"
    version u32      (currently 1)
    nparams u32
    then per parameter:
        name    u16 length + utf-8 bytes
        ndim    u8
        shape   ndim * u32
        data    float32 little-endian, row-major
    opt_flag u8  (0 = end, 1 = optimizer state follows)
    if opt_flag:
        step u64, lr f64, beta1 f64, beta2 f64, eps f64, clip_norm f64
        l2 groups: u16 count, each (name u16+utf8, coeff f64)
        per parameter (same order as the table): m then v, float32 raw
"""

from __future__ import annotations

import struct
from collections import OrderedDict

import numpy as np

from ..errors import DataError
from .optim import OptimizerState
from .tensor import Tensor

MAGIC = b"LIPSEQCP"
VERSION = 1


def _write_str(fh, s: str) -> None:
    b = s.encode("utf-8")
    fh.write(struct.pack("<H", len(b)))
    fh.write(b)


def _read_str(fh) -> str:
    (n,) = struct.unpack("<H", fh.read(2))
    return fh.read(n).decode("utf-8")


def save_checkpoint(path, params: dict[str, Tensor],
                    opt: OptimizerState | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(params)))
        for name, p in params.items():
            _write_str(fh, name)
            arr = np.asarray(p.data, dtype="<f4")
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())
        if opt is None:
            fh.write(struct.pack("<B", 0))
            return
        fh.write(struct.pack("<B", 1))
        fh.write(struct.pack("<Qddddd", opt.step, opt.lr, opt.beta1, opt.beta2,
                             opt.eps, opt.clip_norm))
        fh.write(struct.pack("<H", len(opt.l2)))
        for group, coeff in sorted(opt.l2.items()):
            _write_str(fh, group)
            fh.write(struct.pack("<d", coeff))
        for name in params:
            fh.write(np.asarray(opt.m[name], dtype="<f4").tobytes())
            fh.write(np.asarray(opt.v[name], dtype="<f4").tobytes())


def load_checkpoint(path):
    """Returns (params: OrderedDict[name, float32 array], opt: dict | None)."""
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise DataError(f"not a lipseq checkpoint: {path}")
        version, nparams = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        params: OrderedDict[str, np.ndarray] = OrderedDict()
        for _ in range(nparams):
            name = _read_str(fh)
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim)) if ndim else ()
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(4 * count), dtype="<f4").reshape(shape)
            params[name] = data.copy()
        (flag,) = struct.unpack("<B", fh.read(1))
        if not flag:
            return params, None
        step, lr, beta1, beta2, eps, clip_norm = struct.unpack("<Qddddd", fh.read(48))
        (ngroups,) = struct.unpack("<H", fh.read(2))
        l2 = {}
        for _ in range(ngroups):
            group = _read_str(fh)
            (coeff,) = struct.unpack("<d", fh.read(8))
            l2[group] = coeff
        m, v = OrderedDict(), OrderedDict()
        for name, arr in params.items():
            m[name] = np.frombuffer(fh.read(4 * arr.size), dtype="<f4").reshape(arr.shape).copy()
            v[name] = np.frombuffer(fh.read(4 * arr.size), dtype="<f4").reshape(arr.shape).copy()
        opt = {"step": step, "lr": lr, "beta1": beta1, "beta2": beta2,
               "eps": eps, "clip_norm": clip_norm, "l2": l2, "m": m, "v": v}
        return params, opt


def restore_optimizer(opt_dict, params: dict[str, Tensor]) -> OptimizerState:
    state = OptimizerState(params, lr=opt_dict["lr"], beta1=opt_dict["beta1"],
                           beta2=opt_dict["beta2"], eps=opt_dict["eps"],
                           clip_norm=opt_dict["clip_norm"], l2=opt_dict["l2"])
    state.step = opt_dict["step"]
    for name, p in params.items():
        if opt_dict["m"][name].shape != p.data.shape:
            raise DataError(f"optimizer moment shape mismatch for {name}")
        state.m[name] = opt_dict["m"][name].astype(p.data.dtype)
        state.v[name] = opt_dict["v"][name].astype(p.data.dtype)
    return state
