"""Prompted mask decoding over the fused stages.

Per stage, a dense map increment (conv + pool over the fused visual map) and a
sparse token increment (linear + token mean over the fused semantics) are added
elementwise onto learned base prompt embeddings.  Three decoder blocks then run
coarse to fine, each upsampling, merging the matching fused stage map, reading
the sparse tokens through cross-attention, and adding the resized dense map;
the top-stage prompts enter the earliest block.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .layers import MultiheadAttention


@dataclass
class MaskLogits:
    logits: torch.Tensor  # T x H x W

    @property
    def probabilities(self) -> torch.Tensor:
        return torch.sigmoid(self.logits)

    @property
    def binary(self) -> torch.Tensor:
        return (self.logits > 0).to(torch.uint8)  # sigmoid(x) > 0.5 iff x > 0


class PromptBank(nn.Module):
    """Learned base prompt embeddings, zero-initialized."""

    def __init__(self, d: int, prompt_hw: int = 16, num_sparse: int = 4):
        super().__init__()
        self.dense = nn.Parameter(torch.zeros(d, prompt_hw, prompt_hw))
        self.sparse = nn.Parameter(torch.zeros(num_sparse, d))


class PromptMaker(nn.Module):
    """Per-stage dense/sparse prompt increments from the fused outputs."""

    def __init__(self, d: int, c_in: int, sem_dim: int, prompt_hw: int, num_sparse: int):
        super().__init__()
        self.prompt_hw = prompt_hw
        self.num_sparse = num_sparse
        self.conv = nn.Conv2d(c_in, d, kernel_size=1, bias=False)
        self.lin = nn.Linear(sem_dim, d, bias=False)

    def forward(self, v_fused: torch.Tensor, s_fused: torch.Tensor):
        dense = F.adaptive_avg_pool2d(self.conv(v_fused), self.prompt_hw)  # T x d x P x P
        pooled = self.lin(s_fused).mean(dim=1)  # T x d
        sparse = pooled.unsqueeze(1).expand(-1, self.num_sparse, -1)  # T x N_s x d
        return dense, sparse


def inject_prompts(bank: PromptBank, dense_inc: torch.Tensor, sparse_inc: torch.Tensor):
    """Elementwise addition of increments onto the shared bases."""
    return bank.dense.unsqueeze(0) + dense_inc, bank.sparse.unsqueeze(0) + sparse_inc


class MaskDecoder(nn.Module):
    """Three-block coarse-to-fine decoder over the fused stage maps.

    Block k consumes stage 3-k: the highest stage is injected first.  Exposes
    its intermediate maps so losses can pick a retained pyramid level.
    """

    def __init__(
        self,
        d: int,
        channels: tuple[int, int, int, int],
        grids: list[tuple[int, int]],
        canvas: tuple[int, int],
        num_heads: int,
    ):
        super().__init__()
        self.canvas = canvas
        seed_h, seed_w = grids[2][0] // 2, grids[2][1] // 2
        if seed_h < 1 or seed_w < 1:
            raise ValueError("stage-3 grid too small to seed the decoder")
        self.seed = nn.Parameter(0.02 * torch.randn(d, seed_h, seed_w))
        self.merge = nn.ModuleList(
            nn.Conv2d(channels[n], d, kernel_size=3, padding=1, bias=False) for n in (2, 1, 0)
        )
        self.attn = nn.ModuleList(MultiheadAttention(d, num_heads) for _ in range(3))
        self.norm = nn.ModuleList(nn.LayerNorm(d) for _ in range(3))
        self.out = nn.Conv2d(d, 1, kernel_size=1)

    def forward(
        self,
        fused_maps: list[torch.Tensor],
        prompts: list[tuple[torch.Tensor, torch.Tensor]],
    ) -> tuple[MaskLogits, list[torch.Tensor]]:
        """fused_maps/prompts are stage-ordered [1, 2, 3]; returns (logits, block maps)."""
        if len(fused_maps) != 3 or len(prompts) != 3:
            raise ValueError("decoder needs exactly three fused stages and prompt pairs")
        t = fused_maps[0].shape[0]
        x = self.seed.unsqueeze(0).expand(t, -1, -1, -1)
        pyramid = []
        for k, stage in enumerate((2, 1, 0)):
            dense, sparse = prompts[stage]
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = x + self.merge[k](fused_maps[stage])
            tok = x.flatten(2).transpose(1, 2)
            tok = self.norm[k](tok + self.attn[k](tok, sparse, sparse))
            x = tok.transpose(1, 2).reshape(x.shape)
            x = x + F.interpolate(dense, size=x.shape[-2:], mode="bilinear", align_corners=False)
            pyramid.append(x)
        logits = self.out(x)
        logits = F.interpolate(logits, size=self.canvas, mode="bilinear", align_corners=False)
        if not torch.isfinite(logits).all():
            raise ValueError("non-finite mask logits")
        return MaskLogits(logits=logits.squeeze(1)), pyramid
