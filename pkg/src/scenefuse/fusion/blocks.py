"""Fusion modules: global projection, gated mixing, cross-attention, tanh gate.

All modules take batch-first tensors ``[batch, tokens, dim]``.  The
functional wrappers at the bottom operate on single
:class:`~scenefuse.fusion.sequences.FeatureSequence` objects and tag roles.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from scenefuse.errors import InvariantError, ShapeError
from scenefuse.fusion.config import MECHANISM_GATED, FusionConfig
from scenefuse.fusion.costs import estimate_flops
from scenefuse.fusion.sequences import FeatureSequence


def _expect_3d(t: torch.Tensor, what: str) -> None:
    if t.dim() != 3:
        raise ShapeError(f"{what} must be [batch, tokens, dim], got shape {tuple(t.shape)}")


class GlobalProjection(nn.Module):
    """Linear map taking raw scene features to the recognizer's width."""

    def __init__(self, d_global: int, d_local: int):
        super().__init__()
        self.proj = nn.Linear(d_global, d_local)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        if tokens.shape[-1] != self.proj.in_features:
            raise ShapeError(
                f"global features have width {tokens.shape[-1]}, "
                f"projection expects {self.proj.in_features}"
            )
        return self.proj(tokens)


class GatedAttention(nn.Module):
    """Channel-wise gated mixing of each local token with one global token.

    A linear map scores the concatenation of the local token and the global
    token; a softmax over channels produces the gate ``g``, and the output is
    ``g * local + (1 - g) * global`` per channel.  Requires exactly one
    global token.
    """

    def __init__(self, dim: int):
        super().__init__()
        self.gate = nn.Linear(2 * dim, dim)

    def forward(self, local: torch.Tensor, global_tokens: torch.Tensor) -> torch.Tensor:
        _expect_3d(local, "local features")
        _expect_3d(global_tokens, "global features")
        if global_tokens.shape[1] != 1:
            raise InvariantError(
                f"gated fusion requires a single global token, got {global_tokens.shape[1]}; "
                "pool with an infinite kernel or use cross-attention fusion"
            )
        if local.shape[-1] != global_tokens.shape[-1]:
            raise ShapeError(
                f"local width {local.shape[-1]} != global width {global_tokens.shape[-1]}"
            )
        expanded = global_tokens.expand_as(local)
        scores = self.gate(torch.cat([local, expanded], dim=-1))
        g = torch.softmax(scores, dim=-1)
        return g * local + (1.0 - g) * expanded


class CrossAttentionLayer(nn.Module):
    """One post-norm transformer block with cross-attention.

    Queries come from the local stream, keys and values from the (already
    projected) global stream.  Residual + LayerNorm follow both the
    attention and the feed-forward sublayers.
    """

    def __init__(self, hidden_size: int, heads: int, intermediate_size: int):
        super().__init__()
        if hidden_size % heads != 0:
            raise ShapeError(f"hidden size {hidden_size} not divisible by heads {heads}")
        self.heads = heads
        self.head_dim = hidden_size // heads
        self.query = nn.Linear(hidden_size, hidden_size)
        self.key = nn.Linear(hidden_size, hidden_size)
        self.value = nn.Linear(hidden_size, hidden_size)
        self.output = nn.Linear(hidden_size, hidden_size)
        self.norm_attn = nn.LayerNorm(hidden_size)
        self.ff_in = nn.Linear(hidden_size, intermediate_size)
        self.ff_out = nn.Linear(intermediate_size, hidden_size)
        self.norm_ff = nn.LayerNorm(hidden_size)
        self.last_attention: torch.Tensor | None = None

    def attention(self, x: torch.Tensor, memory: torch.Tensor):
        """Multi-head cross-attention; returns (projected context, weights)."""
        b, n_q, hidden = x.shape
        n_k = memory.shape[1]
        q = self.query(x).view(b, n_q, self.heads, self.head_dim).transpose(1, 2)
        k = self.key(memory).view(b, n_k, self.heads, self.head_dim).transpose(1, 2)
        v = self.value(memory).view(b, n_k, self.heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        weights = torch.softmax(scores, dim=-1)
        context = (weights @ v).transpose(1, 2).reshape(b, n_q, hidden)
        return self.output(context), weights

    def forward(self, x: torch.Tensor, memory: torch.Tensor) -> torch.Tensor:
        attended, weights = self.attention(x, memory)
        self.last_attention = weights.detach()
        x = self.norm_attn(x + attended)
        x = self.norm_ff(x + self.ff_out(nn.functional.gelu(self.ff_in(x))))
        return x


class MhcaStack(nn.Module):
    """Multi-head cross-attention fusion: local queries attend to scene tokens.

    Both streams are first mapped to the preset's hidden size; the global
    stream is mapped once and shared by every layer's keys and values.  The
    stack output is mapped back to the local width.
    """

    def __init__(self, config: FusionConfig):
        super().__init__()
        if config.mechanism == MECHANISM_GATED:
            raise ShapeError("MhcaStack requires a cross-attention config")
        self.local_in = nn.Linear(config.d_local, config.hidden_size)
        self.global_in = nn.Linear(config.d_local, config.hidden_size)
        self.layers = nn.ModuleList(
            CrossAttentionLayer(config.hidden_size, config.heads, config.intermediate_size)
            for _ in range(config.layers)
        )
        self.out = nn.Linear(config.hidden_size, config.d_local)

    def forward(self, local: torch.Tensor, global_tokens: torch.Tensor) -> torch.Tensor:
        _expect_3d(local, "local features")
        _expect_3d(global_tokens, "global features")
        if local.shape[-1] != global_tokens.shape[-1]:
            raise ShapeError(
                f"local width {local.shape[-1]} != global width {global_tokens.shape[-1]}"
            )
        x = self.local_in(local)
        memory = self.global_in(global_tokens)
        for layer in self.layers:
            x = layer(x, memory)
        return self.out(x)

    @property
    def last_attention(self) -> list[torch.Tensor]:
        return [layer.last_attention for layer in self.layers]


class TanhGate(nn.Module):
    """Learnable handover ``(1 - tanh(a)) * local + tanh(a) * mixed``.

    ``a`` starts at exactly zero, so a freshly built gate returns the local
    features unchanged.
    """

    def __init__(self):
        super().__init__()
        self.alpha = nn.Parameter(torch.zeros(()))

    @property
    def tanh_alpha(self) -> float:
        return float(torch.tanh(self.alpha.detach()))

    def forward(self, local: torch.Tensor, mixed: torch.Tensor) -> torch.Tensor:
        if local.shape != mixed.shape:
            raise ShapeError(
                f"gate inputs must match: local {tuple(local.shape)} vs mixed {tuple(mixed.shape)}"
            )
        t = torch.tanh(self.alpha)
        return (1.0 - t) * local + t * mixed


class FusionBlock(nn.Module):
    """Projection, mixing mechanism, and tanh gate, with call instrumentation.

    ``calls`` counts forward invocations and ``flops_estimate`` accumulates
    the analytic per-crop cost times batch size; both reset via
    :meth:`reset_counters`.
    """

    def __init__(self, config: FusionConfig):
        super().__init__()
        self.config = config
        self.project = GlobalProjection(config.d_global, config.d_local)
        if config.mechanism == MECHANISM_GATED:
            self.mix: nn.Module = GatedAttention(config.d_local)
        else:
            self.mix = MhcaStack(config)
        self.gate = TanhGate()
        self.calls = 0
        self.flops_estimate = 0

    @property
    def tanh_alpha(self) -> float:
        return self.gate.tanh_alpha

    def reset_counters(self) -> None:
        self.calls = 0
        self.flops_estimate = 0

    def forward(self, local: torch.Tensor, global_raw: torch.Tensor) -> torch.Tensor:
        _expect_3d(local, "local features")
        _expect_3d(global_raw, "raw global features")
        if local.shape[0] != global_raw.shape[0]:
            raise ShapeError(
                f"batch mismatch: local {local.shape[0]} vs global {global_raw.shape[0]}"
            )
        projected = self.project(global_raw)
        mixed = self.mix(local, projected)
        fused = self.gate(local, mixed)
        self.calls += 1
        self.flops_estimate += local.shape[0] * estimate_flops(
            self.config, local.shape[1], global_raw.shape[1]
        )
        return fused


def project_global(features: FeatureSequence, projection: GlobalProjection) -> FeatureSequence:
    """Project raw scene features to the local width; keeps the global role."""
    if features.role != "global":
        raise ShapeError(f"project_global expects global features, got role {features.role!r}")
    return FeatureSequence(projection(features.tokens), "global")


def gated_attention(
    local: FeatureSequence, global_features: FeatureSequence, module: GatedAttention
) -> FeatureSequence:
    """Mix one crop's tokens with a single projected global token."""
    if local.role != "local":
        raise ShapeError(f"expected local features, got role {local.role!r}")
    if global_features.role != "global":
        raise ShapeError(f"expected global features, got role {global_features.role!r}")
    mixed = module(local.tokens.unsqueeze(0), global_features.tokens.unsqueeze(0))
    return FeatureSequence(mixed.squeeze(0), "mixed")


def mhca_block(
    local: FeatureSequence, global_features: FeatureSequence, module: MhcaStack
) -> FeatureSequence:
    """Cross-attend one crop's tokens to the projected scene tokens."""
    if local.role != "local":
        raise ShapeError(f"expected local features, got role {local.role!r}")
    if global_features.role != "global":
        raise ShapeError(f"expected global features, got role {global_features.role!r}")
    mixed = module(local.tokens.unsqueeze(0), global_features.tokens.unsqueeze(0))
    return FeatureSequence(mixed.squeeze(0), "mixed")


def tanh_gate(
    local: FeatureSequence, mixed: FeatureSequence, module: TanhGate
) -> FeatureSequence:
    """Blend local and mixed features under the learnable handover gate."""
    if local.role != "local":
        raise ShapeError(f"expected local features, got role {local.role!r}")
    if mixed.role != "mixed":
        raise ShapeError(f"expected mixed features, got role {mixed.role!r}")
    fused = module(local.tokens.unsqueeze(0), mixed.tokens.unsqueeze(0))
    return FeatureSequence(fused.squeeze(0), "fused")
