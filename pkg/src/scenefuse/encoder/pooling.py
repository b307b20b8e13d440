"""Average pooling of scene patch tokens down to a compact global sequence.

The class token always survives pooling untouched.  Patch tokens are
averaged over non-overlapping ``k x k`` windows of the patch grid; the
infinite kernel drops patch tokens entirely, leaving the class token as the
single global descriptor.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from scenefuse.errors import ConfigurationError, ShapeError
from scenefuse.encoder.vit import GlobalFeatures
from scenefuse.fusion.sequences import FeatureSequence


@dataclass(frozen=True)
class PoolKernel:
    """Pooling window size; ``k=None`` means the infinite kernel."""

    k: int | None

    def __post_init__(self):
        if self.k is not None:
            if not isinstance(self.k, int) or isinstance(self.k, bool):
                raise ConfigurationError(f"pool kernel must be an integer, got {self.k!r}")
            if self.k < 1:
                raise ConfigurationError(f"pool kernel must be >= 1, got {self.k}")

    @classmethod
    def of(cls, k: int) -> "PoolKernel":
        return cls(k)

    @classmethod
    def infinite(cls) -> "PoolKernel":
        return cls(None)

    @classmethod
    def parse(cls, text: str) -> "PoolKernel":
        text = str(text).strip().lower()
        if text in ("inf", "infinite", "infinity"):
            return cls.infinite()
        try:
            return cls(int(text))
        except ValueError:
            raise ConfigurationError(f"cannot parse pool kernel {text!r}") from None

    @property
    def is_infinite(self) -> bool:
        return self.k is None

    def code(self) -> int:
        """Integer wire code used by the cache header; 0 encodes infinite."""
        return 0 if self.k is None else self.k

    @classmethod
    def from_code(cls, code: int) -> "PoolKernel":
        return cls.infinite() if code == 0 else cls(code)

    def __str__(self) -> str:
        return "inf" if self.k is None else str(self.k)


def pooled_length(grid: tuple[int, int], kernel: PoolKernel) -> int:
    """Number of tokens after pooling a ``grid`` of patches: 1 + (H/k)(W/k)."""
    if kernel.is_infinite:
        return 1
    gh, gw = grid
    k = kernel.k
    if gh % k != 0 or gw % k != 0:
        raise ConfigurationError(
            f"pool kernel {k} does not divide the patch grid {gh}x{gw}"
        )
    return 1 + (gh // k) * (gw // k)


def pool_tokens(tokens: torch.Tensor, grid: tuple[int, int], kernel: PoolKernel) -> torch.Tensor:
    """Pool batched encoder tokens ``[B, 1 + H*W, d] -> [B, n_pooled, d]``.

    The leading class token is passed through bit-for-bit; each pooled patch
    token is the exact mean of its ``k x k`` window.
    """
    gh, gw = grid
    if tokens.dim() != 3 or tokens.shape[1] != 1 + gh * gw:
        raise ShapeError(
            f"expected tokens [batch, {1 + gh * gw}, dim] for grid {grid}, "
            f"got shape {tuple(tokens.shape)}"
        )
    cls = tokens[:, :1, :]
    if kernel.is_infinite:
        return cls
    k = kernel.k
    if gh % k != 0 or gw % k != 0:
        raise ConfigurationError(
            f"pool kernel {k} does not divide the patch grid {gh}x{gw}"
        )
    b, _, d = tokens.shape
    patches = tokens[:, 1:, :].reshape(b, gh, gw, d)
    windows = patches.reshape(b, gh // k, k, gw // k, k, d)
    pooled = windows.mean(dim=(2, 4)).reshape(b, (gh // k) * (gw // k), d)
    return torch.cat([cls, pooled], dim=1)


def pool_features(features: GlobalFeatures, kernel: PoolKernel) -> FeatureSequence:
    """Pool one scene's features into a global sequence for fusion."""
    pooled = pool_tokens(features.tokens.unsqueeze(0), features.grid, kernel)
    return FeatureSequence(pooled[0], "global")
