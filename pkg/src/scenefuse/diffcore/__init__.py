"""Differentiable-parameter plumbing: state capture, checkpoints, gradient checks."""

from scenefuse.diffcore.params import Parameter, ModelState, load_checkpoint, save_checkpoint
from scenefuse.diffcore.gradcheck import GradReport, forward_with_grads, grad_check, module_computation
from scenefuse.diffcore.optim import make_adam, finetune_learning_rate, FINETUNE_BASE_LR

__all__ = [
    "Parameter",
    "ModelState",
    "load_checkpoint",
    "save_checkpoint",
    "GradReport",
    "forward_with_grads",
    "grad_check",
    "module_computation",
    "make_adam",
    "finetune_learning_rate",
    "FINETUNE_BASE_LR",
]
