"""Small reverse-mode autodiff engine sized for the gesture model."""

from . import ops
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import analytic_grads, grad_check, kink_margin
from .optim import AdamState, adam_step
from .params import ParamStore
from .tape import OpError, Tape, Tensor, op_kinds

__all__ = [
    "AdamState",
    "CheckpointError",
    "OpError",
    "ParamStore",
    "Tape",
    "Tensor",
    "adam_step",
    "analytic_grads",
    "grad_check",
    "kink_margin",
    "load_checkpoint",
    "op_kinds",
    "ops",
    "save_checkpoint",
]
