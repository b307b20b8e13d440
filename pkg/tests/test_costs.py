"""Cost models vs loop-counting and parameter-enumeration oracles."""

import random

import torch

from scenefuse.fusion import (
    FusionBlock,
    FusionConfig,
    count_multiply_adds,
    count_params,
    estimate_flops,
)

import pytest

from scenefuse.errors import ConfigurationError


def matmul_mas(n: int, p: int, m: int) -> int:
    """Multiply-adds of an [n,p] @ [p,m] product, counted one output at a time."""
    count = 0
    for _ in range(n):
        for _ in range(m):
            count += p
    return count


def loop_count_mas(config: FusionConfig, n_local: int, n_global: int) -> int:
    """Structural mirror of a naive fused forward pass, counting matmul MAs."""
    d = config.d_local
    total = matmul_mas(n_global, config.d_global, d)  # projection
    if config.mechanism == "gated":
        total += matmul_mas(n_local, 2 * d, d)
        return total
    h = config.hidden_size
    inter = config.intermediate_size
    head_dim = h // config.heads
    total += matmul_mas(n_local, d, h)
    total += matmul_mas(n_global, d, h)
    for _ in range(config.layers):
        total += matmul_mas(n_local, h, h)       # queries
        total += matmul_mas(n_global, h, h)      # keys
        total += matmul_mas(n_global, h, h)      # values
        for _ in range(config.heads):
            total += matmul_mas(n_local, head_dim, n_global)  # scores
            total += matmul_mas(n_local, n_global, head_dim)  # weighted sum
        total += matmul_mas(n_local, h, h)       # attention output
        total += matmul_mas(n_local, h, inter)
        total += matmul_mas(n_local, inter, h)
    total += matmul_mas(n_local, h, d)
    return total


def test_multiply_adds_match_loop_oracle_on_random_shapes():
    rng = random.Random(20240817)
    for _ in range(5):
        d_local = rng.randint(2, 10)
        d_global = rng.randint(2, 12)
        n_local = rng.randint(1, 9)
        n_global = rng.randint(1, 7)
        heads = rng.choice([1, 2, 4])
        hidden = heads * rng.randint(1, 4)
        config = FusionConfig(
            "mhca",
            d_local,
            d_global,
            heads=heads,
            layers=rng.randint(1, 3),
            hidden_size=hidden,
            intermediate_size=rng.randint(2, 16),
        )
        expected = loop_count_mas(config, n_local, n_global)
        assert count_multiply_adds(config, n_local, n_global) == expected
        assert estimate_flops(config, n_local, n_global) == 2 * expected

        gated = FusionConfig.gated(d_local, d_global)
        expected = loop_count_mas(gated, n_local, 1)
        assert count_multiply_adds(gated, n_local, 1) == expected
        assert estimate_flops(gated, n_local, 1) == 2 * expected


def test_attention_score_terms_match_published_example_shape():
    # mini preset, 26 local tokens, 17 global tokens: the score and
    # weighted-sum products contribute 2 * (2 * 26 * 17 * 256) FLOPs per layer.
    config = FusionConfig.mhca("mini", d_local=256, d_global=256)
    per_layer_attention_flops = 2 * (2 * 26 * 17 * config.hidden_size)
    assert per_layer_attention_flops == 452_608

    with_scores = estimate_flops(config, 26, 17)
    # Remove the score/weighted terms analytically: they are the only terms
    # bilinear in both token counts.
    config_same = config
    delta = with_scores - 2 * (
        count_multiply_adds(config_same, 26, 17)
        - config.layers * (2 * 26 * 17 * config.hidden_size)
    )
    assert delta == config.layers * per_layer_attention_flops


def test_global_token_count_changes_only_kv_and_attention_terms():
    config = FusionConfig.mhca("mini", d_local=48, d_global=64)
    n_local = 26
    cost_1 = count_multiply_adds(config, n_local, 1)
    cost_17 = count_multiply_adds(config, n_local, 17)
    h = config.hidden_size
    per_extra_global = (
        config.d_local * config.d_global      # projection row
        + h * config.d_local                  # global input map row
        + config.layers * (2 * h * h + 2 * n_local * h)  # keys/values + attention terms
    )
    assert cost_17 - cost_1 == 16 * per_extra_global


def test_gated_cost_is_linear_in_local_tokens():
    config = FusionConfig.gated(d_local=48, d_global=64)
    c5 = count_multiply_adds(config, 5, 1)
    c10 = count_multiply_adds(config, 10, 1)
    c20 = count_multiply_adds(config, 20, 1)
    per_token = (c10 - c5) // 5
    assert per_token == (c20 - c10) // 10
    assert per_token == 48 * (2 * 48)  # gate map: d * 2d per token


def test_gated_cost_rejects_multiple_global_tokens():
    config = FusionConfig.gated(8, 8)
    with pytest.raises(ConfigurationError):
        count_multiply_adds(config, 4, 3)
    with pytest.raises(ConfigurationError):
        count_multiply_adds(config, 0, 1)


def test_count_params_matches_module_enumeration_at_desk_dims():
    torch.manual_seed(0)
    configs = [
        FusionConfig.gated(d_local=48, d_global=64),
        FusionConfig.mhca("tiny", d_local=48, d_global=64),
        FusionConfig.mhca("mini", d_local=48, d_global=64),
        FusionConfig.mhca("small", d_local=48, d_global=64),
    ]
    for config in configs:
        block = FusionBlock(config)
        enumerated = sum(p.numel() for p in block.parameters())
        assert count_params(config) == enumerated, config.flavor


def test_count_params_gated_hand_value():
    # projection 48*64+48 = 3120, gate 48*96+48 = 4656, handover scalar 1
    config = FusionConfig.gated(d_local=48, d_global=64)
    assert count_params(config) == 3120 + 4656 + 1 == 7777


def test_count_params_scales_linearly_with_layers():
    base = FusionConfig("mhca", 48, 64, heads=2, layers=1, hidden_size=128,
                        intermediate_size=512)
    double = FusionConfig("mhca", 48, 64, heads=2, layers=2, hidden_size=128,
                          intermediate_size=512)
    triple = FusionConfig("mhca", 48, 64, heads=2, layers=3, hidden_size=128,
                          intermediate_size=512)
    per_layer = count_params(double) - count_params(base)
    assert count_params(triple) - count_params(double) == per_layer
