"""Stage-wise cross-modal fusion with a prior-weighted attention bias.

Each stage runs two rounds of bidirectional cross-attention between the
stage's visual tokens and the semantic flow; the second round first lets both
branches read the shared distilled tokens.  At the top stage a logit-space
bias field, built from prior-weighted visual-text and visual-audio
similarities, is added wherever visual tokens act as attention keys.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .layers import MultiheadAttention, sinusoidal_positions_2d

BIAS_CLAMP = 1e-4

# alias: the biased-attention primitive is the shared MHCA with a key bias
BiasedAttention = MultiheadAttention


@dataclass
class BiasField:
    p_hat: torch.Tensor  # T x M4 unified scores, clamped into (0, 1)
    b_m: torch.Tensor  # T x M4 logit-space bias
    grid: tuple[int, int]  # (H4, W4)
    t_g: torch.Tensor
    a_g: torch.Tensor
    f_v: torch.Tensor  # T x M4 x d projected stage-4 tokens
    degenerate: bool  # a global vector had zero norm (similarity forced neutral)


def _safe_unit(x: torch.Tensor) -> tuple[torch.Tensor, bool]:
    norm = x.norm(dim=-1, keepdim=True)
    return x / norm.clamp_min(1e-12), bool((norm < 1e-12).any())


class BiasProjector(nn.Module):
    """Builds the prior-weighted bias field over stage-4 positions."""

    def __init__(self, d: int, text_dim: int, audio_dim: int, c4: int):
        super().__init__()
        self.proj_text = nn.Linear(text_dim, d)
        self.proj_audio = nn.Linear(audio_dim, d)
        self.proj_visual = nn.Linear(c4, d)
        self.gamma_p = nn.Parameter(torch.tensor(1.0))

    def forward(
        self, p_m: torch.Tensor, t_g: torch.Tensor, f_a: torch.Tensor, f_v4: torch.Tensor
    ) -> BiasField:
        h4, w4 = f_v4.shape[-2:]
        t_proj = self.proj_text(t_g)
        a_proj = self.proj_audio(f_a).mean(dim=0)
        v_proj = self.proj_visual(f_v4.flatten(2).transpose(1, 2))  # T x M4 x d
        t_unit, t_deg = _safe_unit(t_proj)
        a_unit, a_deg = _safe_unit(a_proj)
        v_unit, _ = _safe_unit(v_proj)
        sim_vis = (v_unit @ t_unit + 1.0) / 2.0
        sim_aud = (v_unit @ a_unit + 1.0) / 2.0
        p_hat = p_m[1] * sim_vis + p_m[0] * sim_aud + p_m[2] * sim_vis * sim_aud
        p_hat = p_hat.clamp(BIAS_CLAMP, 1.0 - BIAS_CLAMP)
        b_m = self.gamma_p * torch.log(p_hat / (1.0 - p_hat))
        return BiasField(
            p_hat=p_hat,
            b_m=b_m,
            grid=(h4, w4),
            t_g=t_proj,
            a_g=a_proj,
            f_v=v_proj,
            degenerate=t_deg or a_deg,
        )


def resize_bias(field: BiasField, grid: tuple[int, int]) -> torch.Tensor:
    """Nearest-neighbor resample of the bias map onto another stage grid."""
    h4, w4 = field.grid
    maps = field.b_m.view(-1, 1, h4, w4)
    out = F.interpolate(maps, size=grid, mode="nearest")
    return out.flatten(1)


@dataclass
class StageFusionOutput:
    v_fused: torch.Tensor  # T x C_n x H_n x W_n
    s_fused: torch.Tensor  # T x (T+L) x d


class CBCFStage(nn.Module):
    """One fusion stage over a fixed visual grid.

    The bias, when given, is added only in attention sub-blocks whose keys are
    this stage's visual tokens; a per-query constant would cancel under the
    softmax, and the score field is undefined over distilled tokens.
    """

    def __init__(self, d: int, c_in: int, grid: tuple[int, int], d0: int, num_heads: int):
        super().__init__()
        self.grid = grid
        # 3x3 projection: tokens carry local context, which attention alone lacks
        self.proj_in = nn.Conv2d(c_in, d, kernel_size=3, padding=1)
        self.unproj = nn.Linear(d, c_in)
        self.proj_dis = nn.Linear(d0, d)
        self.register_buffer("pos", sinusoidal_positions_2d(grid[0], grid[1], d))
        self.pos_scale = nn.Parameter(torch.tensor(0.25))
        self.attn_v1 = MultiheadAttention(d, num_heads)
        self.attn_s1 = MultiheadAttention(d, num_heads)
        self.attn_vd = MultiheadAttention(d, num_heads)
        self.attn_sd = MultiheadAttention(d, num_heads)
        self.attn_v2 = MultiheadAttention(d, num_heads)
        self.attn_s2 = MultiheadAttention(d, num_heads)
        self.norms = nn.ModuleList([nn.LayerNorm(d) for _ in range(6)])

    def forward(
        self,
        v_map: torch.Tensor,
        s_tokens: torch.Tensor,
        v_dis: torch.Tensor | None,
        key_bias: torch.Tensor | None = None,
    ) -> StageFusionOutput:
        t, c, h, w = v_map.shape
        if (h, w) != self.grid:
            raise ValueError(f"stage expects grid {self.grid}, got {(h, w)}")
        v = self.proj_in(v_map).flatten(2).transpose(1, 2) + self.pos_scale * self.pos
        s = s_tokens
        # round 1: bidirectional, both directions read the round's inputs
        v1 = self.norms[0](v + self.attn_v1(v, s, s))
        s1 = self.norms[1](s + self.attn_s1(s, v, v, key_bias=key_bias))
        # round 2: both branches first read the distilled tokens
        if v_dis is not None:
            dis = self.proj_dis(v_dis)
            v1 = self.norms[2](v1 + self.attn_vd(v1, dis, dis))
            s1 = self.norms[3](s1 + self.attn_sd(s1, dis, dis))
        v2 = self.norms[4](v1 + self.attn_v2(v1, s1, s1))
        s2 = self.norms[5](s1 + self.attn_s2(s1, v1, v1, key_bias=key_bias))
        v_fused = self.unproj(v2).transpose(1, 2).reshape(t, c, h, w)
        return StageFusionOutput(v_fused=v_fused, s_fused=s2)


class DownModulate(nn.Module):
    """2x2 average pool plus 1x1 channel projection feeding the next stage."""

    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.proj = nn.Conv2d(c_in, c_out, kernel_size=1)

    def forward(self, v_fused: torch.Tensor) -> torch.Tensor:
        return self.proj(F.avg_pool2d(v_fused, kernel_size=2))


class CBCFStack(nn.Module):
    """Stages 1..3 run in order; each earlier stage modulates the next input."""

    def __init__(
        self,
        d: int,
        channels: tuple[int, int, int, int],
        grids: list[tuple[int, int]],
        d0: int,
        num_heads: int,
    ):
        super().__init__()
        self.stages = nn.ModuleList(
            CBCFStage(d, channels[n], grids[n], d0, num_heads) for n in range(3)
        )
        self.modulate = nn.ModuleList(
            DownModulate(channels[n], channels[n + 1]) for n in range(2)
        )

    def forward(
        self,
        f_v: list[torch.Tensor],
        f_se: torch.Tensor,
        v_dis: torch.Tensor | None,
        bias: BiasField | None,
    ) -> list[StageFusionOutput]:
        outputs = []
        v_in, s_in = f_v[0], f_se
        for n in range(3):
            key_bias = None
            if n == 2 and bias is not None:
                key_bias = resize_bias(bias, self.stages[2].grid)
            out = self.stages[n](v_in, s_in, v_dis, key_bias=key_bias)
            outputs.append(out)
            if n < 2:
                v_in = f_v[n + 1] + self.modulate[n](out.v_fused)
                s_in = out.s_fused
        return outputs
