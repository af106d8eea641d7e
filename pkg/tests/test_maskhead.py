import numpy as np
import pytest
import torch

from primed.maskhead import MaskDecoder, PromptBank, PromptMaker, inject_prompts

CHANNELS = (4, 6, 8, 10)
GRIDS = [(8, 8), (4, 4), (2, 2), (1, 1)]
CANVAS = (32, 32)
D = 8


def make_parts(seed=0):
    torch.manual_seed(seed)
    bank = PromptBank(D, prompt_hw=4, num_sparse=3)
    makers = [PromptMaker(D, CHANNELS[n], D, prompt_hw=4, num_sparse=3) for n in range(3)]
    decoder = MaskDecoder(D, CHANNELS, GRIDS, CANVAS, num_heads=2)
    return bank, makers, decoder


def rand_fused(t=2, l=3, seed=1):
    gen = torch.Generator().manual_seed(seed)
    maps = [torch.randn(t, CHANNELS[n], *GRIDS[n], generator=gen) for n in range(3)]
    sems = [torch.randn(t, t + l, D, generator=gen) for _ in range(3)]
    return maps, sems


def test_zero_initialized_prompt_makers_leave_bases():
    bank, makers, _ = make_parts()
    maps, sems = rand_fused()
    with torch.no_grad():
        bank.dense.add_(torch.randn_like(bank.dense))
        bank.sparse.add_(torch.randn_like(bank.sparse))
        for m in makers:
            m.conv.weight.zero_()
            m.lin.weight.zero_()
    for n in range(3):
        d_inc, s_inc = makers[n](maps[n], sems[n])
        np.testing.assert_array_equal(d_inc.detach().numpy(), 0)
        np.testing.assert_array_equal(s_inc.detach().numpy(), 0)
        e_d, e_s = inject_prompts(bank, d_inc, s_inc)
        for t in range(2):
            np.testing.assert_array_equal(e_d[t].detach().numpy(), bank.dense.detach().numpy())
            np.testing.assert_array_equal(e_s[t].detach().numpy(), bank.sparse.detach().numpy())


def test_sparse_rows_identical_broadcast():
    _, makers, _ = make_parts()
    maps, sems = rand_fused()
    _, s_inc = makers[0](maps[0], sems[0])
    assert s_inc.shape == (2, 3, D)
    for t in range(2):
        for row in range(1, 3):
            np.testing.assert_array_equal(
                s_inc[t, row].detach().numpy(), s_inc[t, 0].detach().numpy()
            )


def test_dense_increment_scales_linearly():
    _, makers, _ = make_parts()
    maps, sems = rand_fused()
    d1, _ = makers[1](maps[1], sems[1])
    d2, _ = makers[1](2.0 * maps[1], sems[1])
    np.testing.assert_allclose(d2.detach().numpy(), 2.0 * d1.detach().numpy(), rtol=1e-5)


def test_decode_shape_and_determinism():
    bank, makers, decoder = make_parts()
    maps, sems = rand_fused()
    prompts = [inject_prompts(bank, *makers[n](maps[n], sems[n])) for n in range(3)]
    mask1, pyramid = decoder(maps, prompts)
    mask2, _ = decoder(maps, prompts)
    assert mask1.logits.shape == (2, 32, 32)
    assert [p.shape[-1] for p in pyramid] == [2, 4, 8]
    assert torch.equal(mask1.logits, mask2.logits)
    probs = mask1.probabilities
    assert float(probs.min()) > 0.0 and float(probs.max()) < 1.0


def test_saturated_output_projection_gives_full_mask():
    bank, makers, decoder = make_parts()
    maps, sems = rand_fused()
    prompts = [inject_prompts(bank, *makers[n](maps[n], sems[n])) for n in range(3)]
    with torch.no_grad():
        decoder.out.weight.zero_()
        decoder.out.bias.fill_(50.0)
    mask, _ = decoder(maps, prompts)
    assert float(mask.probabilities.min()) > 0.999
    np.testing.assert_array_equal(mask.binary.numpy(), 1)


def test_injection_order_is_live():
    bank, makers, decoder = make_parts(seed=3)
    maps, sems = rand_fused(seed=4)
    prompts = [inject_prompts(bank, *makers[n](maps[n], sems[n])) for n in range(3)]
    normal, _ = decoder(maps, prompts)
    swapped, _ = decoder(maps, prompts[::-1])
    assert float((normal.logits - swapped.logits).abs().max()) > 1e-6


def test_injection_additivity_continuity():
    bank, makers, decoder = make_parts(seed=5)
    maps, sems = rand_fused(seed=6)
    incs = [makers[n](maps[n], sems[n]) for n in range(3)]
    base_prompts = [
        inject_prompts(bank, torch.zeros_like(d), torch.zeros_like(s)) for d, s in incs
    ]
    base, _ = decoder(maps, base_prompts)
    gaps = []
    for scale in (1.0, 0.1, 0.01):
        prompts = [inject_prompts(bank, scale * d, scale * s) for d, s in incs]
        out, _ = decoder(maps, prompts)
        gaps.append(float((out.logits - base.logits).abs().max()))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.1 * gaps[0] + 1e-9


def test_decoder_rejects_missing_stage():
    bank, makers, decoder = make_parts()
    maps, sems = rand_fused()
    prompts = [inject_prompts(bank, *makers[n](maps[n], sems[n])) for n in range(3)]
    with pytest.raises(ValueError):
        decoder(maps[:2], prompts)
    with pytest.raises(ValueError):
        decoder(maps, prompts[:2])


def test_binary_threshold_convention():
    from primed.maskhead import MaskLogits

    logits = torch.tensor([[[-0.1, 0.0], [0.1, 5.0]]])
    mask = MaskLogits(logits=logits)
    np.testing.assert_array_equal(mask.binary.numpy(), [[[0, 0], [1, 1]]])
