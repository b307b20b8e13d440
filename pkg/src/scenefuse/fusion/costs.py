"""Analytic parameter and arithmetic-cost models for fusion blocks.

Cost convention: :func:`count_multiply_adds` counts the multiply-accumulate
operations of the matrix products in a naive forward pass (linear maps,
attention scores, attention-weighted sums).  Bias additions, softmax,
normalization, activations, and elementwise gating are excluded.
:func:`estimate_flops` converts at the fixed rate of 1 multiply-add =
2 FLOPs.
"""

from __future__ import annotations

from scenefuse.errors import ConfigurationError
from scenefuse.fusion.config import MECHANISM_GATED, FusionConfig


def count_params(config: FusionConfig) -> int:
    """Number of learnable scalars a fusion block adds to a recognizer.

    Covers the global projection, the mixing mechanism, and the scalar
    handover gate; matches exhaustive enumeration of the built block.
    """
    d = config.d_local
    total = d * config.d_global + d  # global projection weight + bias
    if config.mechanism == MECHANISM_GATED:
        total += d * (2 * d) + d  # gate weight + bias
    else:
        h = config.hidden_size
        inter = config.intermediate_size
        total += 2 * (h * d + h)  # local and global input maps
        per_layer = (
            4 * (h * h + h)      # query/key/value/output maps
            + 2 * h              # post-attention LayerNorm
            + (inter * h + inter) + (h * inter + h)  # feed-forward maps
            + 2 * h              # post-feed-forward LayerNorm
        )
        total += config.layers * per_layer
        total += d * h + d  # output map back to the local width
    total += 1  # tanh-gate scalar
    return total


def count_multiply_adds(
    config: FusionConfig,
    n_local: int,
    n_global: int,
    d: int | None = None,
) -> int:
    """Multiply-accumulates of one fused forward pass over a single crop.

    ``d`` overrides the local/global feature width at the block boundary
    (the projection still maps from ``config.d_global``); by default the
    config's ``d_local`` is used.
    """
    if n_local < 1 or n_global < 1:
        raise ConfigurationError(
            f"token counts must be positive, got n_local={n_local} n_global={n_global}"
        )
    d = config.d_local if d is None else d
    total = n_global * d * config.d_global  # global projection
    if config.mechanism == MECHANISM_GATED:
        if n_global != 1:
            raise ConfigurationError(
                f"gated fusion requires a single global token, got {n_global}"
            )
        total += n_local * d * (2 * d)  # gate map
        return total
    h = config.hidden_size
    inter = config.intermediate_size
    total += n_local * h * d   # local input map
    total += n_global * h * d  # global input map
    per_layer = (
        n_local * h * h        # query map
        + 2 * (n_global * h * h)  # key and value maps
        + n_local * n_global * h  # attention scores, summed over heads
        + n_local * n_global * h  # attention-weighted sum
        + n_local * h * h      # attention output map
        + 2 * (n_local * h * inter)  # feed-forward maps
    )
    total += config.layers * per_layer
    total += n_local * d * h  # output map back to the local width
    return total


def estimate_flops(
    config: FusionConfig,
    n_local: int,
    n_global: int,
    d: int | None = None,
) -> int:
    """FLOPs of one fused forward pass (1 multiply-add = 2 FLOPs)."""
    return 2 * count_multiply_adds(config, n_local, n_global, d)
