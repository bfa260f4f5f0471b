"""Minimal reverse-mode autodiff with the ops the training regime needs."""

from .tensor import (Tensor, Tape, backward, accumulate_grad, check_finite,
                     set_debug_checks, debug_checks_enabled)
from . import ops
from .optim import (OptimizerState, clip_by_global_norm, add_group_l2,
                    apply_update, training_step, DEFAULT_L2)
from .checkpoint import save_checkpoint, load_checkpoint, restore_optimizer

__all__ = [
    "Tensor", "Tape", "backward", "accumulate_grad", "check_finite",
    "set_debug_checks", "debug_checks_enabled", "ops",
    "OptimizerState", "clip_by_global_norm", "add_group_l2", "apply_update",
    "training_step", "DEFAULT_L2",
    "save_checkpoint", "load_checkpoint", "restore_optimizer",
]
