import itertools
import math

import numpy as np
import pytest
import torch

from fdcheck import check_gradients
from primed.objectives import LossWeights, SemanticProjection, sasa_loss, seg_loss, total_loss


def identity_projection(d: int) -> SemanticProjection:
    proj = SemanticProjection(d).double()
    with torch.no_grad():
        proj.lin.weight.copy_(torch.eye(d, dtype=torch.float64))
        proj.lin.bias.zero_()
    return proj


# ------------------------------------------------------------------- seg


def test_seg_loss_perfect_prediction():
    gt = torch.zeros(2, 8, 8)
    gt[:, 2:5, 2:5] = 1.0
    logits = torch.where(gt > 0, torch.tensor(50.0), torch.tensor(-50.0))
    assert float(seg_loss(logits, gt)) < 1e-6


def test_seg_loss_uniform_logits_half_foreground():
    n = 64 * 64
    gt = torch.zeros(1, 64, 64, dtype=torch.float64)
    gt[:, :32, :] = 1.0  # half foreground
    logits = torch.zeros(1, 64, 64, dtype=torch.float64)
    val = float(seg_loss(logits, gt))
    # BCE = ln 2; Dice = 1 - (0.5 n + 1) / (n + 1) -> total ~ 1.1931 at large n
    expect = math.log(2.0) + 1.0 - (0.5 * n + 1.0) / (n + 1.0)
    assert val == pytest.approx(expect, abs=1e-9)
    assert val == pytest.approx(1.1931, abs=2e-3)


def test_seg_loss_empty_gt_confident_background():
    gt = torch.zeros(3, 6, 6)
    logits = torch.full((3, 6, 6), -50.0)
    assert float(seg_loss(logits, gt)) < 1e-6


def test_seg_loss_permutation_equivariant():
    gen = torch.Generator().manual_seed(0)
    logits = torch.randn(2, 5, 5, generator=gen, dtype=torch.float64)
    gt = (torch.rand(2, 5, 5, generator=gen) > 0.6).double()
    base = float(seg_loss(logits, gt))
    perm = torch.randperm(25, generator=gen)
    lp = logits.reshape(2, -1)[:, perm].reshape(2, 5, 5)
    gp = gt.reshape(2, -1)[:, perm].reshape(2, 5, 5)
    assert float(seg_loss(lp, gp)) == pytest.approx(base, rel=1e-12)


def test_seg_loss_validates_inputs():
    with pytest.raises(ValueError):
        seg_loss(torch.full((1, 2, 2), float("nan")), torch.zeros(1, 2, 2))
    with pytest.raises(ValueError):
        seg_loss(torch.zeros(1, 2, 2), torch.full((1, 2, 2), 0.5))


def test_seg_loss_gradient():
    gen = torch.Generator().manual_seed(1)
    logits = torch.randn(2, 4, 4, generator=gen, dtype=torch.float64, requires_grad=True)
    gt = (torch.rand(2, 4, 4, generator=gen) > 0.5).double()

    def loss_fn():
        return seg_loss(logits, gt)

    check_gradients(loss_fn, {"logits": logits}, coords=4)


# ------------------------------------------------------------------- sasa


def _uniform_case(grid: int, fg_rows: int, d: int = 6):
    """Every grid token identical: all similarities equal."""
    f_fpn = torch.ones(1, d, grid, grid, dtype=torch.float64)
    gt = torch.zeros(1, grid, grid, dtype=torch.float64)
    gt[0, :fg_rows] = 1.0
    f_se = torch.randn(1, 3, d, dtype=torch.float64, generator=torch.Generator().manual_seed(2))
    return f_fpn, gt, f_se


@pytest.mark.parametrize("k", [1, 5, 10])
def test_sasa_equal_similarity_closed_form(k):
    proj = identity_projection(6)
    f_fpn, gt, f_se = _uniform_case(grid=8, fg_rows=4)
    loss = sasa_loss(f_fpn, gt, f_se, proj, grid=8, top_k=k, tau=0.07)
    assert float(loss) == pytest.approx(math.log(1 + k), abs=1e-6)


def test_sasa_separated_case_is_tiny():
    d = 4
    proj = identity_projection(d)
    grid = 6
    u = torch.zeros(d, dtype=torch.float64)
    u[0] = 1.0
    f_fpn = torch.zeros(1, d, grid, grid, dtype=torch.float64)
    gt = torch.zeros(1, grid, grid, dtype=torch.float64)
    gt[0, :3] = 1.0
    f_fpn[0, :, :3, :] = u.view(d, 1, 1)
    f_fpn[0, :, 3:, :] = -u.view(d, 1, 1)
    f_se = u.view(1, 1, d).repeat(1, 2, 1)
    loss = sasa_loss(f_fpn, gt, f_se, proj, grid=grid, top_k=10, tau=0.07)
    assert 0.0 <= float(loss) < 1e-9


def test_sasa_skip_rules():
    proj = identity_projection(4)
    f_fpn = torch.randn(2, 4, 4, 4, dtype=torch.float64)
    f_se = torch.randn(2, 3, 4, dtype=torch.float64)
    empty = torch.zeros(2, 4, 4, dtype=torch.float64)
    assert float(sasa_loss(f_fpn, empty, f_se, proj, grid=4)) == 0.0
    allfg = torch.ones(2, 4, 4, dtype=torch.float64)
    assert float(sasa_loss(f_fpn, allfg, f_se, proj, grid=4)) == 0.0
    # one valid frame dominates the mean when the other is empty
    half = torch.zeros(2, 4, 4, dtype=torch.float64)
    half[0, :2] = 1.0
    mixed = sasa_loss(f_fpn, half, f_se, proj, grid=4)
    solo = sasa_loss(f_fpn[:1], half[:1], f_se[:1], proj, grid=4)
    assert float(mixed) == pytest.approx(float(solo), rel=1e-12)


def test_sasa_nonnegative_random():
    gen = torch.Generator().manual_seed(3)
    proj = identity_projection(5)
    for _ in range(10):
        f_fpn = torch.randn(2, 5, 6, 6, generator=gen, dtype=torch.float64)
        f_se = torch.randn(2, 4, 5, generator=gen, dtype=torch.float64)
        gt = (torch.rand(2, 6, 6, generator=gen) > 0.5).double()
        assert float(sasa_loss(f_fpn, gt, f_se, proj, grid=6)) >= 0.0


def test_sasa_hard_negatives_maximize_loss():
    gen = torch.Generator().manual_seed(4)
    d, grid, k = 5, 4, 3
    proj = identity_projection(d)
    f_fpn = torch.randn(1, d, grid, grid, generator=gen, dtype=torch.float64)
    f_se = torch.randn(1, 2, d, generator=gen, dtype=torch.float64)
    gt = torch.zeros(1, grid, grid, dtype=torch.float64)
    gt[0, :2] = 1.0  # 8 fg, 8 bg tokens
    lib = float(sasa_loss(f_fpn, gt, f_se, proj, grid=grid, top_k=k, tau=0.07))

    tokens = f_fpn[0].reshape(d, -1).T
    tokens = tokens / tokens.norm(dim=-1, keepdim=True)
    anchor = f_se[0].mean(dim=0)
    anchor = anchor / anchor.norm()
    flat = gt[0].reshape(-1) > 0.5
    fg = tokens[flat]
    bg = tokens[~flat]
    proto = fg.mean(dim=0)
    proto = proto / proto.norm()
    pos = math.exp(float(anchor @ proto) / 0.07)
    phis = [math.exp(float(anchor @ z) / 0.07) for z in bg]
    best = 0.0
    for subset in itertools.combinations(range(len(phis)), k):
        val = math.log(pos + sum(phis[i] for i in subset)) - math.log(pos)
        best = max(best, val)
        assert val <= lib + 1e-9
    assert lib == pytest.approx(best, rel=1e-9)


def test_sasa_gradient():
    gen = torch.Generator().manual_seed(5)
    d = 4
    proj = SemanticProjection(d).double()
    f_fpn = torch.randn(2, d, 4, 4, generator=gen, dtype=torch.float64, requires_grad=True)
    f_se = torch.randn(2, 3, d, generator=gen, dtype=torch.float64, requires_grad=True)
    gt = torch.zeros(2, 4, 4, dtype=torch.float64)
    gt[:, :2] = 1.0

    def loss_fn():
        return sasa_loss(f_fpn, gt, f_se, proj, grid=4, top_k=3, tau=0.07)

    params = {"f_fpn": f_fpn, "f_se": f_se, **{f"proj.{k}": v for k, v in proj.named_parameters()}}
    check_gradients(loss_fn, params, coords=3)


# ------------------------------------------------------------------- total


def test_total_loss_combinations():
    mk = lambda v: torch.tensor(float(v), dtype=torch.float64)
    seg = mk(0.7)
    assert float(total_loss(seg, mk(9), mk(9), mk(9), LossWeights(0, 0, 0))) == float(seg)
    assert float(total_loss(mk(1), mk(1), mk(1), mk(1), LossWeights(5, 1, 1))) == 8.0
    val = total_loss(mk(0.2), mk(0.1), mk(0.3), mk(0.05), LossWeights(5, 1, 1))
    assert float(val) == pytest.approx(1.05, abs=1e-9)


def test_total_loss_validation():
    mk = lambda v: torch.tensor(float(v))
    with pytest.raises(ValueError):
        total_loss(mk(-0.5), mk(0), mk(0), mk(0), LossWeights())
    with pytest.raises(ValueError):
        total_loss(mk(float("inf")), mk(0), mk(0), mk(0), LossWeights())
    with pytest.raises(ValueError):
        total_loss(mk(1), mk(1), mk(1), mk(1), LossWeights(lambda_sasa=-1))
