"""Parallel word recognizer: patch tokens plus per-position readout tokens.

A small transformer encoder runs over learnable readout tokens concatenated
with crop patch embeddings; a shared head classifies each readout position.
Fusion attaches at the single ``vision`` point, on the transformer's output
tokens just before the head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from scenefuse.errors import ConfigurationError, ShapeError
from scenefuse.recognizers.integration import VISION, parse_point
from scenefuse.recognizers.vocab import N_LOGITS


@dataclass(frozen=True)
class ParallelConfig:
    d_local: int = 48
    max_len: int = 8
    patch_size: int = 8
    depth: int = 2
    heads: int = 4
    mlp_ratio: int = 4
    max_patches: int = 8
    crop_height: int = 8

    def __post_init__(self):
        if self.d_local % self.heads != 0:
            raise ConfigurationError(
                f"d_local {self.d_local} not divisible by heads {self.heads}"
            )
        if self.crop_height != self.patch_size:
            raise ConfigurationError(
                "crop height must equal the patch size so a crop is one patch row"
            )


class _Block(nn.Module):
    # pre-norm self-attention + MLP
    def __init__(self, dim, heads, mlp_ratio):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.norm1 = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.norm2 = nn.LayerNorm(dim)
        self.fc1 = nn.Linear(dim, dim * mlp_ratio)
        self.fc2 = nn.Linear(dim * mlp_ratio, dim)

    def forward(self, x):
        b, n, d = x.shape
        qkv = self.qkv(self.norm1(x)).view(b, n, 3, self.heads, self.head_dim)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)
        attn = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(self.head_dim), dim=-1)
        x = x + self.proj((attn @ v).transpose(1, 2).reshape(b, n, d))
        x = x + self.fc2(torch.nn.functional.gelu(self.fc1(self.norm2(x))))
        return x


class ParallelRecognizer(nn.Module):
    arch = "parallel"
    valid_points = (VISION,)

    def __init__(self, config: ParallelConfig | None = None):
        super().__init__()
        self.config = config or ParallelConfig()
        c = self.config
        self.patch_embed = nn.Conv2d(1, c.d_local, kernel_size=c.patch_size,
                                     stride=c.patch_size)
        self.readout = nn.Parameter(torch.zeros(1, c.max_len, c.d_local))
        self.pos = nn.Parameter(torch.zeros(1, c.max_len + c.max_patches, c.d_local))
        nn.init.trunc_normal_(self.readout, std=0.02)
        nn.init.trunc_normal_(self.pos, std=0.02)
        self.blocks = nn.ModuleList(
            _Block(c.d_local, c.heads, c.mlp_ratio) for _ in range(c.depth)
        )
        self.norm = nn.LayerNorm(c.d_local)
        self.head = nn.Linear(c.d_local, N_LOGITS)
        self.site_calls = {VISION: 0}

    def reset_site_calls(self) -> None:
        self.site_calls = {VISION: 0}

    def patches_for_width(self, width: int) -> int:
        c = self.config
        if width % c.patch_size != 0 or width < c.patch_size:
            raise ShapeError(
                f"crop width must be a positive multiple of {c.patch_size}, got {width}"
            )
        patches = width // c.patch_size
        if patches > c.max_patches:
            raise ShapeError(
                f"crop of width {width} needs {patches} patches, max is {c.max_patches}"
            )
        return patches

    def local_width(self, point: str, crop_width: int) -> int:
        """Token count at the fusion point: readout plus patch tokens."""
        return self.config.max_len + self.patches_for_width(crop_width)

    def forward(
        self,
        crops: torch.Tensor,
        targets: torch.Tensor | None = None,
        fusion: nn.Module | None = None,
        global_tokens: torch.Tensor | None = None,
        point: str | None = None,
    ) -> torch.Tensor:
        """Per-position logits ``[B, max_len, 27]``; ``targets`` is ignored
        (decoding is non-autoregressive)."""
        point = self._check_fusion_args(fusion, global_tokens, point)
        if crops.dim() != 4 or crops.shape[1] != 1:
            raise ShapeError(f"expected crops [B, 1, H, W], got {tuple(crops.shape)}")
        if crops.shape[2] != self.config.crop_height:
            raise ShapeError(
                f"expected crop height {self.config.crop_height}, got {crops.shape[2]}"
            )
        n_patches = self.patches_for_width(crops.shape[3])
        patches = self.patch_embed(crops).flatten(2).transpose(1, 2)  # [B, P, d]
        x = torch.cat([self.readout.expand(crops.shape[0], -1, -1), patches], dim=1)
        x = x + self.pos[:, : x.shape[1], :]
        for block in self.blocks:
            x = block(x)
        x = self.norm(x)
        if point == VISION:
            x = fusion(x, global_tokens)
            self.site_calls[VISION] += 1
        return self.head(x[:, : self.config.max_len, :])

    def _check_fusion_args(self, fusion, global_tokens, point) -> str | None:
        if fusion is None and point is None and global_tokens is None:
            return None
        if fusion is None or point is None or global_tokens is None:
            raise ConfigurationError(
                "fusion, global_tokens, and point must be given together"
            )
        point = parse_point(point)
        if point not in self.valid_points:
            raise ConfigurationError(
                f"{type(self).__name__} supports only the {VISION!r} integration point, "
                f"got {point!r}"
            )
        if global_tokens.dim() != 3:
            raise ShapeError(
                f"global tokens must be [B, N, d_global], got {tuple(global_tokens.shape)}"
            )
        return point
