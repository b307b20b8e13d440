"""Feature fusion: gated channel mixing, cross-attention, tanh-gated residual."""

from scenefuse.fusion.sequences import FeatureSequence
from scenefuse.fusion.config import FusionConfig, ATTENTION_PRESETS, MECHANISM_GATED, MECHANISM_MHCA
from scenefuse.fusion.blocks import (
    CrossAttentionLayer,
    FusionBlock,
    GatedAttention,
    GlobalProjection,
    MhcaStack,
    TanhGate,
    gated_attention,
    mhca_block,
    project_global,
    tanh_gate,
)
from scenefuse.fusion.costs import count_multiply_adds, count_params, estimate_flops

__all__ = [
    "FeatureSequence",
    "FusionConfig",
    "ATTENTION_PRESETS",
    "MECHANISM_GATED",
    "MECHANISM_MHCA",
    "GlobalProjection",
    "GatedAttention",
    "CrossAttentionLayer",
    "MhcaStack",
    "TanhGate",
    "FusionBlock",
    "project_global",
    "gated_attention",
    "mhca_block",
    "tanh_gate",
    "count_params",
    "count_multiply_adds",
    "estimate_flops",
]
