"""Experiment harness: configuration, training, evaluation, alignment export, CLI."""

from .config import (ExperimentConfig, PRESETS, apply_preset, load_config,
                     parse_config_text, format_config, save_config)
from .build import (Model, build_model, RecordLoader, forward_batch,
                    frontend_forward, load_model_weights, frontend_spec)
from .train import run_training, TrainResult, evaluate_greedy, decode_single
from .evaluate import run_eval, EvalResult, load_model_from_checkpoint
from .align import run_align, alignment_for_record

__all__ = [
    "ExperimentConfig", "PRESETS", "apply_preset", "load_config",
    "parse_config_text", "format_config", "save_config",
    "Model", "build_model", "RecordLoader", "forward_batch", "frontend_forward",
    "load_model_weights", "frontend_spec",
    "run_training", "TrainResult", "evaluate_greedy", "decode_single",
    "run_eval", "EvalResult", "load_model_from_checkpoint",
    "run_align", "alignment_for_record",
]
