"""Autoregressive word recognizer: conv stack, BiGRU, attention decoder.

Fusion can attach at three points: ``vision`` (conv feature frames),
``contextual`` (BiGRU outputs), or ``decoder`` (the query state, re-fused at
every decoding step).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from scenefuse.errors import ConfigurationError, ShapeError
from scenefuse.recognizers.integration import CONTEXTUAL, DECODER, VISION, parse_point
from scenefuse.recognizers.vocab import (
    BLANKOUT_ID,
    EOS_ID,
    N_LOGITS,
    VOCAB_SIZE,
    argmax_lowest_batch,
)


@dataclass(frozen=True)
class RecurrentConfig:
    d_local: int = 48
    max_len: int = 8
    crop_height: int = 8

    def __post_init__(self):
        if self.d_local % 2 != 0:
            raise ConfigurationError(f"d_local must be even for a BiGRU, got {self.d_local}")
        if self.max_len < 1:
            raise ConfigurationError("max_len must be >= 1")


class RecurrentRecognizer(nn.Module):
    """Conv frames -> bidirectional GRU -> attention GRU decoder."""

    arch = "recurrent"
    valid_points = (VISION, CONTEXTUAL, DECODER)

    def __init__(self, config: RecurrentConfig | None = None):
        super().__init__()
        self.config = config or RecurrentConfig()
        d = self.config.d_local
        self.conv = nn.Sequential(
            nn.Conv2d(1, d // 2, kernel_size=3, padding=1),
            nn.ReLU(),
            nn.MaxPool2d(2),
            nn.Conv2d(d // 2, d, kernel_size=3, padding=1),
            nn.ReLU(),
            nn.MaxPool2d(2),
        )
        self.gru = nn.GRU(d, d // 2, batch_first=True, bidirectional=True)
        self.embed = nn.Embedding(VOCAB_SIZE, d)
        self.attn_query = nn.Linear(d, d)
        self.attn_key = nn.Linear(d, d)
        self.attn_score = nn.Linear(d, 1)
        self.cell = nn.GRUCell(2 * d, d)
        self.head = nn.Linear(d, N_LOGITS)
        self.site_calls = {VISION: 0, CONTEXTUAL: 0, DECODER: 0}

    def reset_site_calls(self) -> None:
        self.site_calls = {VISION: 0, CONTEXTUAL: 0, DECODER: 0}

    def frames_for_width(self, width: int) -> int:
        """Number of visual frames a crop of this width produces."""
        if width % 4 != 0 or width < 4:
            raise ShapeError(f"crop width must be a positive multiple of 4, got {width}")
        return width // 4

    def local_width(self, point: str, crop_width: int) -> int:
        """Local token count at an integration point, for cost reporting."""
        if point == DECODER:
            return 1
        return self.frames_for_width(crop_width)

    def _visual_frames(self, crops: torch.Tensor) -> torch.Tensor:
        if crops.dim() != 4 or crops.shape[1] != 1:
            raise ShapeError(f"expected crops [B, 1, H, W], got {tuple(crops.shape)}")
        if crops.shape[2] != self.config.crop_height:
            raise ShapeError(
                f"expected crop height {self.config.crop_height}, got {crops.shape[2]}"
            )
        self.frames_for_width(crops.shape[3])
        feats = self.conv(crops)           # [B, d, H/4, W/4]
        feats = feats.mean(dim=2)          # collapse height
        return feats.transpose(1, 2)       # [B, frames, d]

    def forward(
        self,
        crops: torch.Tensor,
        targets: torch.Tensor | None = None,
        fusion: nn.Module | None = None,
        global_tokens: torch.Tensor | None = None,
        point: str | None = None,
    ) -> torch.Tensor:
        """Return per-step logits ``[B, steps, 27]``.

        With ``targets`` the decoder is teacher-forced for exactly
        ``targets.shape[1]`` steps; otherwise it decodes greedily for up to
        ``max_len + 1`` steps, stopping early once every row has emitted EOS.
        """
        point = self._check_fusion_args(fusion, global_tokens, point)
        v = self._visual_frames(crops)
        if point == VISION:
            v = fusion(v, global_tokens)
            self.site_calls[VISION] += 1
        h, _ = self.gru(v)
        if point == CONTEXTUAL:
            h = fusion(h, global_tokens)
            self.site_calls[CONTEXTUAL] += 1

        batch = crops.shape[0]
        state = crops.new_zeros(batch, self.config.d_local)
        prev = torch.full((batch,), BLANKOUT_ID, dtype=torch.long, device=crops.device)
        steps = targets.shape[1] if targets is not None else self.config.max_len + 1
        keys = self.attn_key(h)
        logits = []
        done = torch.zeros(batch, dtype=torch.bool, device=crops.device)
        for t in range(steps):
            query = state
            if point == DECODER:
                query = fusion(state.unsqueeze(1), global_tokens).squeeze(1)
                self.site_calls[DECODER] += 1
            scores = self.attn_score(torch.tanh(self.attn_query(query).unsqueeze(1) + keys))
            weights = torch.softmax(scores, dim=1)
            context = (weights * h).sum(dim=1)
            state = self.cell(torch.cat([self.embed(prev), context], dim=-1), query)
            step_logits = self.head(state)
            logits.append(step_logits)
            if targets is not None:
                prev = targets[:, t]
            else:
                prev = argmax_lowest_batch(step_logits.detach())
                done = done | (prev == EOS_ID)
                if bool(done.all()) and t + 1 < steps:
                    break
        return torch.stack(logits, dim=1)

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
                f"{type(self).__name__} does not support the {point!r} integration point"
            )
        if global_tokens.dim() != 3:
            raise ShapeError(
                f"global tokens must be [B, N, d_global], got {tuple(global_tokens.shape)}"
            )
        return point
