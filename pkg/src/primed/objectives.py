"""Training losses: segmentation, spatial contrastive alignment, total objective."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class LossWeights:
    lambda_sasa: float = 5.0
    lambda_kl: float = 1.0
    lambda_orth: float = 1.0

    def validate(self) -> None:
        if min(self.lambda_sasa, self.lambda_kl, self.lambda_orth) < 0:
            raise ValueError("loss weights must be non-negative")


def seg_loss(logits: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Pixel-mean binary cross-entropy plus frame-mean soft Dice."""
    if not torch.isfinite(logits).all():
        raise ValueError("non-finite logits")
    gt = gt.to(logits.dtype)
    if not ((gt == 0) | (gt == 1)).all():
        raise ValueError("ground truth must be binary")
    bce = F.binary_cross_entropy_with_logits(logits, gt, reduction="mean")
    p = torch.sigmoid(logits)
    num = 2.0 * (p * gt).sum(dim=(1, 2)) + 1.0
    den = p.sum(dim=(1, 2)) + gt.sum(dim=(1, 2)) + 1.0
    dice = (1.0 - num / den).mean()
    return bce + dice


class SemanticProjection(nn.Module):
    """Single linear map shared by grid tokens and the semantic anchor."""

    def __init__(self, d: int):
        super().__init__()
        self.lin = nn.Linear(d, d)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.lin(x)


def sasa_loss(
    f_fpn: torch.Tensor,
    gt: torch.Tensor,
    f_se: torch.Tensor,
    proj: SemanticProjection,
    grid: int = 64,
    top_k: int = 10,
    tau: float = 0.07,
) -> torch.Tensor:
    """Contrast the per-frame semantic anchor against the foreground prototype
    and the top-k anchor-most-similar background grid tokens.

    f_fpn: T x d x h x w pyramid map; gt: T x H x W; f_se: T x N x d.
    Frames without foreground are skipped; an empty background yields 0.
    """
    t = f_fpn.shape[0]
    feat = F.interpolate(f_fpn, size=(grid, grid), mode="bilinear", align_corners=False)
    y = F.interpolate(gt.to(f_fpn.dtype).unsqueeze(1), size=(grid, grid), mode="nearest")
    y = y.squeeze(1).reshape(t, -1)
    tokens = proj(feat.flatten(2).transpose(1, 2))
    tokens = tokens / tokens.norm(dim=-1, keepdim=True).clamp_min(1e-12)
    anchor = proj(f_se.mean(dim=1))
    anchor = anchor / anchor.norm(dim=-1, keepdim=True).clamp_min(1e-12)

    losses = []
    for i in range(t):
        fg = y[i] > 0.5
        if not bool(fg.any()):
            continue
        proto = tokens[i][fg].mean(dim=0)
        proto = proto / proto.norm().clamp_min(1e-12)
        pos = (anchor[i] * proto).sum() / tau
        bg = ~fg
        if bool(bg.any()):
            sims = tokens[i][bg] @ anchor[i]
            # stable descending sort keeps the lowest flat index among ties
            order = torch.sort(sims, descending=True, stable=True).indices
            neg = sims[order[: min(top_k, sims.shape[0])]] / tau
            losses.append(torch.logsumexp(torch.cat([pos.unsqueeze(0), neg]), dim=0) - pos)
        else:
            losses.append(pos - pos)  # no negatives: exactly zero, keeps the graph
    if not losses:
        return f_fpn.new_zeros(())
    return torch.stack(losses).mean()


def total_loss(
    seg: torch.Tensor,
    sasa: torch.Tensor,
    kl: torch.Tensor,
    orth: torch.Tensor,
    weights: LossWeights,
) -> torch.Tensor:
    weights.validate()
    for name, comp in (("seg", seg), ("sasa", sasa), ("kl", kl), ("orth", orth)):
        val = float(comp.detach())
        if not (val == val and abs(val) != float("inf")):
            raise ValueError(f"{name} loss is not finite")
        # every component is non-negative up to float rounding near zero
        if val < -1e-6:
            raise ValueError(f"{name} loss is negative ({val})")
    return seg + weights.lambda_sasa * sasa + weights.lambda_kl * kl + weights.lambda_orth * orth
