"""Optimizer construction and fine-tuning learning-rate defaults."""

from __future__ import annotations

from typing import Iterable

import torch

from scenefuse.errors import ConfigurationError

# Base fine-tuning learning rates per fusion flavor, before desk-scale scaling.
FINETUNE_BASE_LR = {
    "gated": 2e-5,
    "tiny": 3e-5,
    "mini": 3e-5,
    "small": 1e-5,
}

# The synthetic desk-scale task trains from scratch-sized models on tiny data;
# the base rates are scaled up by this documented default factor.
DESK_LR_SCALE = 10.0


def finetune_learning_rate(flavor: str, scale: float = DESK_LR_SCALE) -> float:
    """Learning rate for fine-tuning a fusion flavor.

    ``flavor`` is ``"gated"`` or an attention preset name.  ``scale``
    defaults to the desk-scale factor; pass 1.0 for the base rates.
    """
    if flavor not in FINETUNE_BASE_LR:
        raise ConfigurationError(
            f"unknown fusion flavor {flavor!r}; expected one of {sorted(FINETUNE_BASE_LR)}"
        )
    if scale <= 0:
        raise ConfigurationError(f"lr scale must be positive, got {scale}")
    return FINETUNE_BASE_LR[flavor] * scale


def make_adam(parameters: Iterable[torch.nn.Parameter], lr: float) -> torch.optim.Adam | None:
    """Adam over the trainable subset; returns None when nothing is trainable."""
    trainable = [p for p in parameters if p.requires_grad]
    if not trainable:
        return None
    if lr <= 0:
        raise ConfigurationError(f"learning rate must be positive, got {lr}")
    return torch.optim.Adam(trainable, lr=lr)
