"""Desk-scale vision transformer producing scene-level token features.

A stand-in for a large pretrained image-text encoder: small enough to
pretrain on the synthetic benchmark in seconds, then frozen.  Produces a
class token plus one token per image patch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Any

import torch
from torch import nn

from scenefuse.errors import ConfigurationError, ShapeError


@dataclass(frozen=True)
class EncoderConfig:
    image_size: int = 96
    patch_size: int = 8
    depth: int = 3
    dim: int = 64
    heads: int = 4
    mlp_ratio: int = 4

    def __post_init__(self):
        if self.image_size % self.patch_size != 0:
            raise ConfigurationError(
                f"image size {self.image_size} not divisible by patch size {self.patch_size}"
            )
        if self.dim % self.heads != 0:
            raise ConfigurationError(
                f"encoder dim {self.dim} not divisible by heads {self.heads}"
            )
        if min(self.image_size, self.patch_size, self.depth, self.dim, self.heads) < 1:
            raise ConfigurationError("encoder dimensions must be positive")

    @property
    def grid(self) -> tuple[int, int]:
        side = self.image_size // self.patch_size
        return (side, side)

    @property
    def num_patches(self) -> int:
        gh, gw = self.grid
        return gh * gw

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EncoderConfig":
        return cls(**data)


@dataclass
class GlobalFeatures:
    """Scene-level tokens for one image: class token first, then patches."""

    tokens: torch.Tensor  # [1 + patches, dim]
    grid: tuple[int, int]

    def __post_init__(self):
        gh, gw = self.grid
        if self.tokens.dim() != 2 or self.tokens.shape[0] != 1 + gh * gw:
            raise ShapeError(
                f"expected {1 + gh * gw} tokens for grid {self.grid}, "
                f"got shape {tuple(self.tokens.shape)}"
            )

    @property
    def class_token(self) -> torch.Tensor:
        return self.tokens[0]

    @property
    def patch_tokens(self) -> torch.Tensor:
        return self.tokens[1:]


class SelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, d = x.shape
        qkv = self.qkv(x).view(b, n, 3, self.heads, self.head_dim)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        weights = torch.softmax(scores, dim=-1)
        ctx = (weights @ v).transpose(1, 2).reshape(b, n, d)
        return self.out(ctx)


class EncoderBlock(nn.Module):
    """Pre-norm transformer block."""

    def __init__(self, dim: int, heads: int, mlp_ratio: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, dim * mlp_ratio),
            nn.GELU(),
            nn.Linear(dim * mlp_ratio, dim),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        x = x + self.mlp(self.norm2(x))
        return x


class SceneEncoder(nn.Module):
    """Patch-embedding transformer over whole scene images.

    ``invocations`` counts calls to the no-grad encode methods, which is how
    the pipeline asserts each scene is encoded exactly once.
    """

    def __init__(self, config: EncoderConfig | None = None):
        super().__init__()
        self.config = config or EncoderConfig()
        c = self.config
        self.patch_embed = nn.Conv2d(1, c.dim, kernel_size=c.patch_size, stride=c.patch_size)
        self.class_token = nn.Parameter(torch.zeros(1, 1, c.dim))
        self.pos_embedding = nn.Parameter(torch.zeros(1, 1 + c.num_patches, c.dim))
        nn.init.trunc_normal_(self.pos_embedding, std=0.02)
        nn.init.trunc_normal_(self.class_token, std=0.02)
        self.blocks = nn.ModuleList(
            EncoderBlock(c.dim, c.heads, c.mlp_ratio) for _ in range(c.depth)
        )
        self.norm = nn.LayerNorm(c.dim)
        self.invocations = 0

    @property
    def grid(self) -> tuple[int, int]:
        return self.config.grid

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """Differentiable forward: ``[B, 1, H, W] -> [B, 1 + patches, dim]``."""
        if images.dim() != 4 or images.shape[1] != 1:
            raise ShapeError(
                f"expected images [batch, 1, H, W], got shape {tuple(images.shape)}"
            )
        c = self.config
        if images.shape[-2:] != (c.image_size, c.image_size):
            raise ShapeError(
                f"expected {c.image_size}x{c.image_size} images, "
                f"got {images.shape[-2]}x{images.shape[-1]}"
            )
        x = self.patch_embed(images)            # [B, dim, gh, gw]
        x = x.flatten(2).transpose(1, 2)        # [B, patches, dim]
        cls = self.class_token.expand(x.shape[0], -1, -1)
        x = torch.cat([cls, x], dim=1) + self.pos_embedding
        for block in self.blocks:
            x = block(x)
        return self.norm(x)

    def freeze(self) -> "SceneEncoder":
        """Disable gradients and switch to eval mode; returns self."""
        for p in self.parameters():
            p.requires_grad_(False)
        return self.eval()

    @property
    def is_frozen(self) -> bool:
        return not any(p.requires_grad for p in self.parameters())

    @torch.no_grad()
    def encode_batch(self, images: torch.Tensor) -> torch.Tensor:
        """Encode scene images without gradient tracking. One invocation per call."""
        self.invocations += 1
        return self.forward(images)

    def encode_scene(self, pixels: torch.Tensor) -> GlobalFeatures:
        """Encode a single ``[H, W]`` (or ``[1, H, W]``) scene image."""
        if pixels.dim() == 2:
            pixels = pixels.unsqueeze(0)
        if pixels.dim() != 3:
            raise ShapeError(f"expected a single image, got shape {tuple(pixels.shape)}")
        tokens = self.encode_batch(pixels.unsqueeze(0).to(torch.float32))[0]
        return GlobalFeatures(tokens, self.grid)

    def reset_invocations(self) -> None:
        self.invocations = 0
