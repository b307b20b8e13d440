"""Fusion math: gated mixing, cross-attention, tanh handover gate."""

import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from scenefuse.errors import ConfigurationError, InvariantError, ShapeError
from scenefuse.fusion import (
    CrossAttentionLayer,
    FeatureSequence,
    FusionBlock,
    FusionConfig,
    GatedAttention,
    GlobalProjection,
    MhcaStack,
    TanhGate,
    gated_attention,
    project_global,
    tanh_gate,
)


def brute_force_gated(local_rows, global_row, weight_rows, bias):
    """Scalar-loop oracle for the gated mixer: softmax(W [f_i; f_g]) mixing."""
    d = len(global_row)
    mixed = []
    for f_i in local_rows:
        concat = list(f_i) + list(global_row)
        scores = []
        for row, b in zip(weight_rows, bias):
            s = b
            for w_j, x_j in zip(row, concat):
                s += w_j * x_j
            scores.append(s)
        exps = [math.exp(s) for s in scores]
        z = sum(exps)
        g = [e / z for e in exps]
        mixed.append([g[c] * f_i[c] + (1 - g[c]) * global_row[c] for c in range(d)])
    return mixed


def test_gated_mixing_matches_hand_worked_values():
    # d=3, one local token (1,0,0), global (0,1,0), gate scores (ln 2, 0, 0):
    # softmax gives g=(0.5, 0.25, 0.25) and the mix lands on (0.5, 0.75, 0).
    module = GatedAttention(3)
    with torch.no_grad():
        module.gate.weight.zero_()
        module.gate.bias.zero_()
        module.gate.weight[0, 0] = math.log(2.0)
    local = torch.tensor([[[1.0, 0.0, 0.0]]])
    glob = torch.tensor([[[0.0, 1.0, 0.0]]])
    out = module(local, glob)
    expected = torch.tensor([[[0.5, 0.75, 0.0]]])
    assert torch.allclose(out, expected, atol=1e-7)

    oracle = brute_force_gated(
        [[1.0, 0.0, 0.0]],
        [0.0, 1.0, 0.0],
        module.gate.weight.tolist(),
        module.gate.bias.tolist(),
    )
    assert torch.allclose(out[0], torch.tensor(oracle), atol=1e-6)


def test_gated_mixing_matches_brute_force_on_random_weights():
    torch.manual_seed(11)
    module = GatedAttention(5)
    local = torch.randn(1, 4, 5)
    glob = torch.randn(1, 1, 5)
    out = module(local, glob)
    oracle = brute_force_gated(
        local[0].tolist(),
        glob[0, 0].tolist(),
        module.gate.weight.tolist(),
        module.gate.bias.tolist(),
    )
    assert torch.allclose(out[0], torch.tensor(oracle), atol=1e-5)


def test_gated_identical_streams_are_a_fixed_point():
    torch.manual_seed(5)
    module = GatedAttention(6)
    tokens = torch.randn(1, 1, 6)
    out = module(tokens, tokens)
    assert torch.allclose(out, tokens, atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_gated_output_is_channelwise_convex(seed, n_local):
    torch.manual_seed(seed)
    module = GatedAttention(4)
    local = torch.randn(1, n_local, 4)
    glob = torch.randn(1, 1, 4)
    out = module(local, glob)
    lo = torch.minimum(local, glob.expand_as(local))
    hi = torch.maximum(local, glob.expand_as(local))
    assert bool((out >= lo - 1e-6).all()) and bool((out <= hi + 1e-6).all())


def test_gated_rejects_multiple_global_tokens():
    module = GatedAttention(4)
    with pytest.raises(InvariantError):
        module(torch.zeros(1, 3, 4), torch.zeros(1, 2, 4))


def test_tanh_gate_zero_alpha_is_exact_identity():
    gate = TanhGate()
    local = torch.randn(2, 7, 5)
    mixed = torch.randn(2, 7, 5)
    out = gate(local, mixed)
    assert float((out - local).detach().abs().max()) == 0.0
    assert gate.tanh_alpha == 0.0


def test_tanh_gate_midpoint_and_saturation():
    gate = TanhGate()
    local = torch.randn(1, 3, 4)
    mixed = torch.randn(1, 3, 4)
    with torch.no_grad():
        gate.alpha.fill_(math.atanh(0.5))
    assert torch.allclose(gate(local, mixed), 0.5 * (local + mixed), atol=1e-6)
    with torch.no_grad():
        gate.alpha.fill_(20.0)
    assert torch.allclose(gate(local, mixed), mixed, atol=1e-6)


def test_tanh_gate_alpha_gradient_matches_closed_form():
    # loss = sum(fused); dloss/dalpha = (1 - tanh(a)^2) * sum(mixed - local)
    gate = TanhGate()
    with torch.no_grad():
        gate.alpha.fill_(0.3)
    local = torch.randn(1, 4, 3)
    mixed = torch.randn(1, 4, 3)
    loss = gate(local, mixed).sum()
    loss.backward()
    expected = (1 - math.tanh(0.3) ** 2) * float((mixed - local).sum())
    assert math.isclose(float(gate.alpha.grad), expected, rel_tol=1e-5)


def test_cross_attention_rows_are_stochastic():
    torch.manual_seed(2)
    layer = CrossAttentionLayer(hidden_size=16, heads=4, intermediate_size=32)
    x = torch.randn(2, 5, 16)
    mem = torch.randn(2, 7, 16)
    layer(x, mem)
    weights = layer.last_attention
    assert weights.shape == (2, 4, 5, 7)
    assert torch.allclose(weights.sum(dim=-1), torch.ones(2, 4, 5), atol=1e-6)
    assert bool((weights >= 0).all())


def test_cross_attention_single_key_gets_full_weight():
    torch.manual_seed(3)
    layer = CrossAttentionLayer(hidden_size=8, heads=2, intermediate_size=16)
    layer(torch.randn(1, 4, 8), torch.randn(1, 1, 8))
    assert torch.allclose(layer.last_attention, torch.ones(1, 2, 4, 1), atol=1e-7)


def test_constant_values_give_constant_attention_output():
    # When every value vector is identical, the attended context must be the
    # same for every query position regardless of the score pattern.
    torch.manual_seed(4)
    layer = CrossAttentionLayer(hidden_size=12, heads=3, intermediate_size=24)
    with torch.no_grad():
        layer.value.weight.zero_()
        layer.value.bias.copy_(torch.randn(12))
    with torch.no_grad():
        context, _ = layer.attention(torch.randn(1, 6, 12), torch.randn(1, 5, 12))
    spread = (context - context[:, :1, :]).abs().max()
    assert float(spread) < 1e-6


def test_mhca_preserves_local_shape_and_permutation_invariance():
    torch.manual_seed(6)
    config = FusionConfig.mhca("tiny", d_local=48, d_global=64)
    stack = MhcaStack(config)
    local = torch.randn(2, 9, 48)
    glob = torch.randn(2, 10, 48)
    out = stack(local, glob)
    assert out.shape == local.shape

    perm = torch.randperm(10)
    out_perm = stack(local, glob[:, perm, :])
    assert torch.allclose(out, out_perm, atol=1e-5)


def test_fusion_block_alpha_zero_returns_local_unchanged():
    torch.manual_seed(7)
    for config in (
        FusionConfig.gated(d_local=48, d_global=64),
        FusionConfig.mhca("tiny", d_local=48, d_global=64),
    ):
        block = FusionBlock(config)
        local = torch.randn(3, 5, 48)
        glob = torch.randn(3, 1 if config.mechanism == "gated" else 6, 64)
        out = block(local, glob)
        assert float((out - local).abs().max().detach()) < 1e-6
        assert block.calls == 1
        block.reset_counters()
        assert block.calls == 0 and block.flops_estimate == 0


def test_fusion_block_accumulates_flops_per_crop():
    config = FusionConfig.gated(d_local=8, d_global=4)
    block = FusionBlock(config)
    block(torch.zeros(5, 3, 8), torch.zeros(5, 1, 4))
    from scenefuse.fusion import estimate_flops

    assert block.flops_estimate == 5 * estimate_flops(config, 3, 1)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        FusionConfig("other", 8, 8)
    with pytest.raises(ConfigurationError):
        FusionConfig.mhca("huge", 8, 8)
    with pytest.raises(ConfigurationError):
        FusionConfig("mhca", 8, 8, heads=4, layers=2, hidden_size=130, intermediate_size=64)
    with pytest.raises(ConfigurationError):
        FusionConfig("gated", 8, 8, preset="tiny")
    with pytest.raises(ConfigurationError):
        FusionConfig("mhca", 8, 8, heads=4)  # incomplete explicit dims
    # round trip
    cfg = FusionConfig.mhca("mini", 48, 64)
    assert FusionConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.heads == 4 and cfg.layers == 4 and cfg.hidden_size == 256
    assert cfg.flavor == "mini" and FusionConfig.gated(48, 64).flavor == "gated"


def test_feature_sequence_validation():
    with pytest.raises(ShapeError):
        FeatureSequence(torch.zeros(0, 4), "local")
    with pytest.raises(ShapeError):
        FeatureSequence(torch.zeros(3), "local")
    with pytest.raises(ShapeError):
        FeatureSequence(torch.zeros(2, 2), "bogus")
    seq = FeatureSequence(torch.ones(2, 3), "local")
    assert seq.num_tokens == 2 and seq.dim == 3


def test_functional_wrappers_tag_roles():
    torch.manual_seed(8)
    proj = GlobalProjection(6, 4)
    raw = FeatureSequence(torch.randn(3, 6), "global")
    projected = project_global(raw, proj)
    assert projected.role == "global" and projected.dim == 4

    module = GatedAttention(4)
    local = FeatureSequence(torch.randn(5, 4), "local")
    single = FeatureSequence(projected.tokens[:1], "global")
    mixed = gated_attention(local, single, module)
    assert mixed.role == "mixed" and mixed.tokens.shape == (5, 4)

    fused = tanh_gate(local, mixed, TanhGate())
    assert fused.role == "fused"
    assert torch.equal(fused.tokens, local.tokens)

    with pytest.raises(ShapeError):
        gated_attention(mixed, single, module)
