"""Token sequences passed between the encoder, fusion, and recognizers."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from scenefuse.errors import NumericError, ShapeError

ROLES = ("local", "global", "mixed", "fused")


@dataclass
class FeatureSequence:
    """A ``[num_tokens, dim]`` float tensor tagged with its pipeline role."""

    tokens: torch.Tensor
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ShapeError(f"unknown feature role {self.role!r}; expected one of {ROLES}")
        if not isinstance(self.tokens, torch.Tensor):
            self.tokens = torch.as_tensor(self.tokens, dtype=torch.float32)
        if self.tokens.dim() != 2:
            raise ShapeError(
                f"feature sequence must be 2-d [tokens, dim], got shape {tuple(self.tokens.shape)}"
            )
        n, d = self.tokens.shape
        if n < 1 or d < 1:
            raise ShapeError(f"feature sequence must be non-empty, got shape {(n, d)}")
        if not torch.isfinite(self.tokens).all():
            raise NumericError(f"{self.role} feature sequence contains non-finite values")

    @property
    def num_tokens(self) -> int:
        return self.tokens.shape[0]

    @property
    def dim(self) -> int:
        return self.tokens.shape[1]

    def with_role(self, role: str) -> "FeatureSequence":
        return FeatureSequence(self.tokens, role)
