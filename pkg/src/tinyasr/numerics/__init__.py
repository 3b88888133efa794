"""Minimal dense-tensor arithmetic with reverse-mode differentiation,
the Adadelta optimizer, gradient clipping, and the parameter container."""

from . import ops
from .checkpoint import FORMAT_VERSION, load_arrays, save_arrays
from .optim import AdadeltaState, adadelta_step, clip_global_norm, global_norm
from .tensor import DEFAULT_DTYPE, OpRecord, Tape, Tensor, active_tape, backward

__all__ = [
    "DEFAULT_DTYPE",
    "FORMAT_VERSION",
    "AdadeltaState",
    "OpRecord",
    "Tape",
    "Tensor",
    "active_tape",
    "adadelta_step",
    "backward",
    "clip_global_norm",
    "global_norm",
    "load_arrays",
    "ops",
    "save_arrays",
]
