"""Experiment configuration: every benchmark system D..O is one preset.

Config files are flat `key = value` text; a `preset` key expands first and
the remaining keys override it. Unknown keys or malformed values raise
ConfigError.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from ..errors import ConfigError

FRONTENDS = ("dct", "zeros", "cnn2d", "cnn2d_rgb", "cnn2d_64", "cnn3d")
ENCODERS = ("uni2", "bi1")
ATTENTIONS = ("luong", "bahdanau", "monotonic", "none")
LOSSES = ("ce", "joint")


@dataclass
class ExperimentConfig:
    preset: str = ""
    frontend: str = "dct"
    encoder: str = "uni2"
    attention: str = "luong"
    loss: str = "ce"
    lambda_ctc: float = 0.2
    beam_width: int = 4
    hidden: int = 128
    embed_dim: int = 32
    attn_dim: int = 128
    zeros_dim: int = 132
    keep_input: float = 0.9
    keep_state: float = 0.9
    keep_output: float = 0.9
    cnn_dropout: float = 0.5
    l2_recurrent: float = 0.0001
    l2_conv: float = 0.01
    clip_norm: float = 10.0
    cell_clip: float = 10.0
    lr: float = 0.001
    batch_size: int = 16
    sampling_prob: float = 0.1
    luong_scale_init: float = 1.0
    monotonic_bias_init: float = -4.0
    monotonic_scale_init: float = 0.0884   # 1/sqrt(128)
    monotonic_noise: bool = False
    seed: int = 1234
    max_epochs: int = 100
    patience: int = 20
    min_delta: float = 0.1
    train_eval_beam: int = 1
    length_normalize: bool = False

    def validate(self) -> "ExperimentConfig":
        def choice(name, value, allowed):
            if value not in allowed:
                raise ConfigError(f"{name}={value!r} not in {allowed}")
        choice("frontend", self.frontend, FRONTENDS)
        choice("encoder", self.encoder, ENCODERS)
        choice("attention", self.attention, ATTENTIONS)
        choice("loss", self.loss, LOSSES)
        if not 0.0 <= self.lambda_ctc <= 1.0:
            raise ConfigError("lambda_ctc must lie in [0,1]")
        if self.beam_width < 1 or self.train_eval_beam < 1:
            raise ConfigError("beam widths must be >= 1")
        for name in ("keep_input", "keep_state", "keep_output"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ConfigError(f"{name} must lie in (0,1]")
        if not 0.0 <= self.cnn_dropout < 1.0:
            raise ConfigError("cnn_dropout must lie in [0,1)")
        if self.clip_norm <= 0 or self.cell_clip <= 0:
            raise ConfigError("clip_norm and cell_clip must be positive")
        if not 0.0 <= self.sampling_prob <= 1.0:
            raise ConfigError("sampling_prob must lie in [0,1]")
        if self.monotonic_bias_init > 0:
            raise ConfigError("monotonic_bias_init must be <= 0")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be >= 1")
        return self


# Benchmark systems. G/H/I are single-field variations of E; J..O vary the
# front-end and loss on the CNN side.
PRESETS: dict[str, dict] = {
    "D": {"frontend": "zeros", "encoder": "uni2", "attention": "luong", "loss": "ce"},
    "E": {"frontend": "dct", "encoder": "uni2", "attention": "luong", "loss": "ce"},
    "F": {"frontend": "dct", "encoder": "bi1", "attention": "luong", "loss": "ce"},
    "G": {"frontend": "dct", "encoder": "uni2", "attention": "none", "loss": "ce"},
    "H": {"frontend": "dct", "encoder": "uni2", "attention": "monotonic", "loss": "ce"},
    "I": {"frontend": "dct", "encoder": "uni2", "attention": "luong", "loss": "joint"},
    "J": {"frontend": "cnn2d", "encoder": "uni2", "attention": "luong", "loss": "ce"},
    "K": {"frontend": "cnn2d", "encoder": "bi1", "attention": "luong", "loss": "ce"},
    "L": {"frontend": "cnn2d_rgb", "encoder": "uni2", "attention": "luong", "loss": "joint"},
    "M": {"frontend": "cnn2d_64", "encoder": "uni2", "attention": "luong", "loss": "joint"},
    "N": {"frontend": "cnn3d", "encoder": "uni2", "attention": "luong", "loss": "ce"},
    "O": {"frontend": "cnn2d", "encoder": "uni2", "attention": "luong", "loss": "joint"},
}

_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def apply_preset(cfg: ExperimentConfig, letter: str) -> ExperimentConfig:
    letter = letter.upper()
    if letter not in PRESETS:
        raise ConfigError(f"unknown preset {letter!r} (valid: {' '.join(PRESETS)})")
    cfg = dataclasses.replace(cfg, **PRESETS[letter])
    cfg.preset = letter
    return cfg


def _parse_value(name: str, raw: str):
    if name not in _FIELDS:
        raise ConfigError(f"unknown config key {name!r}")
    raw = raw.strip()
    try:
        if isinstance(_FIELDS[name].default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(_FIELDS[name].default, int):
            return int(raw)
        if isinstance(_FIELDS[name].default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = base if base is not None else ExperimentConfig()
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = line.split("=", 1)
        pairs.append((key.strip(), raw))
    for key, raw in pairs:
        if key == "preset":
            cfg = apply_preset(cfg, raw.strip())
    for key, raw in pairs:
        if key != "preset":
            setattr(cfg, key, _parse_value(key, raw))
    return cfg.validate()


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, base)


def format_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(ExperimentConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def save_config(path, cfg: ExperimentConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_config(cfg))
