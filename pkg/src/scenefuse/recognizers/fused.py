"""Bundling a recognizer with a fusion block at one integration point."""

from __future__ import annotations

import torch
from torch import nn

from scenefuse.encoder.pooling import PoolKernel
from scenefuse.errors import ConfigurationError
from scenefuse.fusion.blocks import FusionBlock
from scenefuse.recognizers.integration import parse_point
from scenefuse.recognizers.parallel import ParallelConfig, ParallelRecognizer
from scenefuse.recognizers.recurrent import RecurrentConfig, RecurrentRecognizer

ARCHITECTURES = ("recurrent", "parallel")


def build_recognizer(arch: str, d_local: int = 48, max_len: int = 8) -> nn.Module:
    """Construct a recognizer by architecture name."""
    arch = str(arch).strip().lower()
    if arch == "recurrent":
        return RecurrentRecognizer(RecurrentConfig(d_local=d_local, max_len=max_len))
    if arch == "parallel":
        return ParallelRecognizer(ParallelConfig(d_local=d_local, max_len=max_len))
    raise ConfigurationError(
        f"unknown recognizer architecture {arch!r}; expected one of {ARCHITECTURES}"
    )


class FusedRecognizer(nn.Module):
    """A recognizer plus its fusion block, pinned to one integration point.

    The pooling kernel is carried along so downstream code knows how to
    shape global tokens; it is configuration, not a parameter.
    """

    def __init__(self, recognizer: nn.Module, fusion: FusionBlock, point: str,
                 kernel: PoolKernel):
        super().__init__()
        point = parse_point(point)
        if point not in recognizer.valid_points:
            raise ConfigurationError(
                f"{type(recognizer).__name__} does not support the {point!r} point"
            )
        self.recognizer = recognizer
        self.fusion = fusion
        self.point = point
        self.kernel = kernel

    def forward(
        self,
        crops: torch.Tensor,
        global_tokens: torch.Tensor,
        targets: torch.Tensor | None = None,
    ) -> torch.Tensor:
        return self.recognizer(
            crops,
            targets=targets,
            fusion=self.fusion,
            global_tokens=global_tokens,
            point=self.point,
        )
