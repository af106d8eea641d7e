import math

import numpy as np
import pytest
import torch

from fdcheck import check_gradients
from primed.cbcf import BiasField, BiasProjector, CBCFStack, resize_bias
from primed.layers import MultiheadAttention


def identity_bias_projector(d: int) -> BiasProjector:
    proj = BiasProjector(d=d, text_dim=d, audio_dim=d, c4=d).double()
    with torch.no_grad():
        for lin in (proj.proj_text, proj.proj_audio, proj.proj_visual):
            lin.weight.copy_(torch.eye(d, dtype=torch.float64))
            lin.bias.zero_()
    return proj


def test_bias_neutral_when_scores_half():
    d = 4
    proj = identity_bias_projector(d)
    # p_V = 1 and text token orthogonal to every visual token -> Sim_vis = 0.5
    t_g = torch.tensor([1.0, 0.0, 0.0, 0.0], dtype=torch.float64)
    f_a = torch.tensor([[0.0, 1.0, 0.0, 0.0]], dtype=torch.float64)
    f_v4 = torch.zeros(1, d, 1, 2, dtype=torch.float64)
    f_v4[0, 2, 0, 0] = 1.0
    f_v4[0, 3, 0, 1] = 1.0
    field = proj(torch.tensor([0.0, 1.0, 0.0], dtype=torch.float64), t_g, f_a, f_v4)
    np.testing.assert_allclose(field.p_hat.detach(), 0.5, atol=1e-7)
    np.testing.assert_allclose(field.b_m.detach(), 0.0, atol=1e-7)


def test_bias_saturates_at_clamp():
    d = 4
    proj = identity_bias_projector(d)
    t_g = torch.tensor([1.0, 0.0, 0.0, 0.0], dtype=torch.float64)
    f_v4 = torch.zeros(2, d, 1, 1, dtype=torch.float64)
    f_v4[:, 0, 0, 0] = 3.0  # parallel to t_g everywhere
    f_a = torch.tensor([[0.0, 1.0, 0.0, 0.0]], dtype=torch.float64)
    field = proj(torch.tensor([0.0, 1.0, 0.0], dtype=torch.float64), t_g, f_a, f_v4)
    expect = math.log((1 - 1e-4) / 1e-4)
    np.testing.assert_allclose(field.b_m.detach(), expect, rtol=1e-6)
    assert float(field.b_m.max()) == pytest.approx(9.2102, abs=1e-3)


def test_bias_uniform_prior_orthogonal_global_tokens():
    d = 6
    proj = identity_bias_projector(d)
    t_g = torch.zeros(d, dtype=torch.float64)
    t_g[0] = 1.0
    f_a = torch.zeros(1, d, dtype=torch.float64)
    f_a[0, 1] = 1.0
    f_v4 = torch.zeros(1, d, 1, 1, dtype=torch.float64)
    f_v4[0, 2] = 1.0  # orthogonal to both global tokens
    field = proj(torch.full((3,), 1 / 3, dtype=torch.float64), t_g, f_a, f_v4)
    np.testing.assert_allclose(field.p_hat.detach(), (0.5 + 0.5 + 0.25) / 3, atol=1e-7)
    np.testing.assert_allclose(
        field.b_m.detach(), math.log(0.41666667 / 0.58333333), atol=1e-5
    )


def test_bias_zero_norm_global_token_is_neutral_and_flagged():
    d = 4
    proj = identity_bias_projector(d)
    t_g = torch.zeros(d, dtype=torch.float64)  # zero-norm global text token
    f_a = torch.zeros(1, d, dtype=torch.float64)
    f_v4 = torch.randn(1, d, 1, 2, dtype=torch.float64)
    field = proj(torch.tensor([0.0, 1.0, 0.0], dtype=torch.float64), t_g, f_a, f_v4)
    assert field.degenerate
    np.testing.assert_allclose(field.p_hat.detach(), 0.5, atol=1e-7)


def test_resize_bias_nearest():
    field = BiasField(
        p_hat=torch.full((1, 4), 0.5),
        b_m=torch.tensor([[1.0, 2.0, 3.0, 4.0]]),
        grid=(2, 2),
        t_g=torch.zeros(1),
        a_g=torch.zeros(1),
        f_v=torch.zeros(1, 4, 1),
        degenerate=False,
    )
    up = resize_bias(field, (4, 4)).reshape(4, 4)
    np.testing.assert_array_equal(up[:2, :2].numpy(), 1.0)
    np.testing.assert_array_equal(up[2:, 2:].numpy(), 4.0)


# ------------------------------------------------------------ biased attention


def test_biased_attention_zero_bias_bitwise_equal():
    torch.manual_seed(0)
    attn = MultiheadAttention(8, 2)
    q, k, v = torch.randn(1, 3, 8), torch.randn(1, 5, 8), torch.randn(1, 5, 8)
    plain = attn(q, k, v)
    biased = attn(q, k, v, key_bias=torch.zeros(5))
    assert torch.equal(plain, biased)


def test_biased_attention_constant_shift_invariance():
    torch.manual_seed(1)
    attn = MultiheadAttention(8, 2).double()
    q, k, v = (torch.randn(1, 3, 8, dtype=torch.float64) for _ in range(3))
    plain = attn(q, k, v)
    shifted = attn(q, k, v, key_bias=torch.full((3,), 11.0, dtype=torch.float64))
    np.testing.assert_allclose(shifted.detach(), plain.detach(), atol=1e-6)


def test_biased_attention_large_bias_selects_key():
    torch.manual_seed(2)
    attn = MultiheadAttention(8, 2).double()
    q = torch.randn(1, 4, 8, dtype=torch.float64)
    k = torch.randn(1, 6, 8, dtype=torch.float64)
    v = torch.randn(1, 6, 8, dtype=torch.float64)
    bias = torch.zeros(6, dtype=torch.float64)
    bias[3] = 30.0
    out = attn(q, k, v, key_bias=bias)
    # with weight ~1 on key 3 the output is that key's value projection path
    expect = attn.out_proj(attn.v_proj(v[:, 3]))
    for row in range(4):
        np.testing.assert_allclose(out[0, row].detach(), expect[0].detach(), rtol=1e-3, atol=1e-6)


def test_biased_attention_rejects_nonfinite():
    attn = MultiheadAttention(8, 2)
    q = torch.full((1, 2, 8), float("inf"))
    with pytest.raises(ValueError):
        attn(q, q, q)


def test_per_query_constant_cancels_and_per_key_steers():
    rng = np.random.default_rng(3)
    logits = rng.standard_normal((5, 7))
    softmax = lambda x: np.exp(x - x.max(-1, keepdims=True)) / np.exp(
        x - x.max(-1, keepdims=True)
    ).sum(-1, keepdims=True)
    base = softmax(logits)
    per_query = softmax(logits + rng.standard_normal((5, 1)))
    np.testing.assert_allclose(per_query, base, atol=1e-7)
    # monotone steering: raising one key's bias strictly raises its weight
    for j in range(7):
        prev = base[:, j]
        for bump in (0.5, 1.0, 2.0):
            b = np.zeros(7)
            b[j] = bump
            wj = softmax(logits + b)[:, j]
            assert (wj > prev).all()
            prev = wj


# ------------------------------------------------------------------ stages


def make_stack(d=8, heads=2, d0=6):
    channels = (4, 6, 8, 10)
    grids = [(8, 8), (4, 4), (2, 2), (1, 1)]
    return CBCFStack(d, channels, grids, d0, heads), channels, grids


def rand_inputs(channels, grids, t=2, l=3, d=8, d0=6, dtype=torch.float32):
    gen = torch.Generator().manual_seed(7)
    f_v = [
        torch.randn(t, channels[n], grids[n][0], grids[n][1], generator=gen, dtype=dtype)
        for n in range(4)
    ]
    f_se = torch.randn(t, t + l, d, generator=gen, dtype=dtype)
    v_dis = torch.randn(t, 2, d0, generator=gen, dtype=dtype)
    return f_v, f_se, v_dis


def test_stage_shapes_toy_defaults():
    torch.manual_seed(4)
    stack = CBCFStack(8, (32, 64, 128, 256), [(16, 16), (8, 8), (4, 4), (2, 2)], 6, 2)
    t, l = 2, 3
    gen = torch.Generator().manual_seed(1)
    f_v = [
        torch.randn(t, c, hw, hw, generator=gen)
        for c, hw in zip((32, 64, 128, 256), (16, 8, 4, 2))
    ]
    f_se = torch.randn(t, t + l, 8, generator=gen)
    outs = stack(f_v, f_se, None, None)
    assert len(outs) == 3
    assert outs[0].v_fused.shape == (t, 32, 16, 16)
    assert outs[0].s_fused.shape == (t, t + l, 8)


def test_stage_residual_only_independence():
    torch.manual_seed(5)
    stack, channels, grids = make_stack()
    stage = stack.stages[0]
    with torch.no_grad():
        for mod in (stage.attn_v1, stage.attn_s1, stage.attn_vd, stage.attn_sd,
                    stage.attn_v2, stage.attn_s2):
            mod.out_proj.weight.zero_()
            mod.out_proj.bias.zero_()
    f_v, f_se, v_dis = rand_inputs(channels, grids)
    out1 = stage(f_v[0], f_se, v_dis)
    out2 = stage(f_v[0], torch.randn_like(f_se), v_dis)
    np.testing.assert_allclose(out1.v_fused.detach(), out2.v_fused.detach(), atol=1e-6)
    out3 = stage(torch.randn_like(f_v[0]), f_se, v_dis)
    np.testing.assert_allclose(out1.s_fused.detach(), out3.s_fused.detach(), atol=1e-6)


def test_stage_grid_mismatch_rejected():
    stack, channels, grids = make_stack()
    f_v, f_se, v_dis = rand_inputs(channels, grids)
    with pytest.raises(ValueError):
        stack.stages[1](f_v[0], f_se, v_dis)


def test_zero_bias_field_equals_none():
    torch.manual_seed(6)
    stack, channels, grids = make_stack()
    f_v, f_se, v_dis = rand_inputs(channels, grids)
    t = f_v[0].shape[0]
    field = BiasField(
        p_hat=torch.full((t, 1), 0.5),
        b_m=torch.zeros(t, 1),
        grid=grids[3],
        t_g=torch.zeros(8),
        a_g=torch.zeros(8),
        f_v=torch.zeros(t, 1, 8),
        degenerate=False,
    )
    with_zero = stack(f_v, f_se, v_dis, field)
    without = stack(f_v, f_se, v_dis, None)
    for a, b in zip(with_zero, without):
        np.testing.assert_allclose(a.v_fused.detach(), b.v_fused.detach(), atol=1e-6)
        np.testing.assert_allclose(a.s_fused.detach(), b.s_fused.detach(), atol=1e-6)


def test_stack_propagation_live():
    torch.manual_seed(7)
    stack, channels, grids = make_stack()
    f_v, f_se, v_dis = rand_inputs(channels, grids)
    base = stack(f_v, f_se, v_dis, None)
    bumped = [x.clone() for x in f_v]
    bumped[0] = bumped[0] + 0.3
    moved = stack(bumped, f_se, v_dis, None)
    for n in (1, 2):
        assert float((moved[n].v_fused - base[n].v_fused).abs().max()) > 1e-6


def test_prior_pathway_live():
    torch.manual_seed(8)
    channels = (4, 6, 8, 10)
    grids = [(16, 16), (8, 8), (4, 4), (2, 2)]  # stage 4 has 4 positions
    stack = CBCFStack(8, channels, grids, 6, 2)
    proj = BiasProjector(d=8, text_dim=5, audio_dim=6, c4=channels[3])
    f_v, f_se, v_dis = rand_inputs(channels, grids)
    t_g = torch.randn(5)
    f_a = torch.randn(2, 6)
    field_a = proj(torch.tensor([1.0, 0.0, 0.0]), t_g, f_a, f_v[3])
    field_v = proj(torch.tensor([0.0, 1.0, 0.0]), t_g, f_a, f_v[3])
    out_a = stack(f_v, f_se, v_dis, field_a)
    out_v = stack(f_v, f_se, v_dis, field_v)
    assert float((out_a[2].v_fused - out_v[2].v_fused).abs().max()) > 1e-6


def test_stack_gradients_through_bias():
    torch.manual_seed(9)
    stack, channels, grids = make_stack()
    stack = stack.double()
    proj = BiasProjector(d=8, text_dim=5, audio_dim=6, c4=channels[3]).double()
    f_v, f_se, v_dis = rand_inputs(channels, grids, dtype=torch.float64)
    t_g = torch.randn(5, dtype=torch.float64)
    f_a = torch.randn(2, 6, dtype=torch.float64)
    p_m = torch.tensor([0.3, 0.3, 0.4], dtype=torch.float64)

    def loss_fn():
        field = proj(p_m, t_g, f_a, f_v[3])
        outs = stack(f_v, f_se, v_dis, field)
        return sum((o.v_fused**2).mean() + (o.s_fused**2).mean() for o in outs)

    params = {
        "gamma_p": proj.gamma_p,
        "proj_text.weight": proj.proj_text.weight,
        "proj_visual.weight": proj.proj_visual.weight,
        "stage3.attn_s1.k_proj.weight": stack.stages[2].attn_s1.k_proj.weight,
        "stage1.proj_in.weight": stack.stages[0].proj_in.weight,
        "modulate0.weight": stack.modulate[0].proj.weight,
    }
    check_gradients(loss_fn, params, coords=2)
