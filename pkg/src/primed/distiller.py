"""Distills the top visual stage into K compact global tokens.

Learnable seed tokens cross-attend to the projected stage-4 feature tokens and
are refined by a residual MLP.  No normalization layers appear anywhere on
this path, so the orthogonality structure imposed afterwards survives.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .layers import MultiheadAttention

GS_EPS = 1e-6


class TokenDistiller(nn.Module):
    def __init__(self, c4: int, d0: int, num_tokens: int, num_heads: int = 4):
        super().__init__()
        if num_tokens <= 0:
            raise ValueError("need at least one distilled token")
        self.num_tokens = num_tokens
        self.proj = nn.Linear(c4, d0)
        self.seeds = nn.Parameter(torch.randn(num_tokens, d0) / d0**0.5)
        self.attn = MultiheadAttention(d0, num_heads)
        self.mlp = nn.Sequential(nn.Linear(d0, 4 * d0), nn.GELU(), nn.Linear(4 * d0, d0))

    def forward(self, f_v4: torch.Tensor) -> torch.Tensor:
        """f_v4: T x C4 x H4 x W4 -> raw distilled tokens T x K x d0."""
        t = f_v4.shape[0]
        feat = self.proj(f_v4.flatten(2).transpose(1, 2))  # T x M4 x d0
        seeds = self.seeds.unsqueeze(0).expand(t, -1, -1)
        v_hat = seeds + self.attn(seeds, feat, feat)
        return v_hat + self.mlp(v_hat)


def orthogonalize(tokens: torch.Tensor, eps: float = GS_EPS) -> tuple[torch.Tensor, torch.Tensor]:
    """Classical Gram-Schmidt over the K rows of each frame, rows unit-normalized.

    Fully differentiable on the regular path.  If a residual collapses below
    ``eps`` the row is replaced by the first standard basis vector that stays
    independent of the rows before it, and the frame is flagged degenerate.

    Returns (orthonormal tokens T x K x d, degenerate flags T bool).
    """
    t, k, d = tokens.shape
    degenerate = torch.zeros(t, dtype=torch.bool, device=tokens.device)
    basis: list[torch.Tensor] = []
    for j in range(k):
        v = tokens[:, j, :]
        for q in basis:
            v = v - (v * q).sum(dim=-1, keepdim=True) * q
        norms = v.norm(dim=-1)
        bad = norms < eps
        if bad.any():
            degenerate |= bad
            rows = []
            for fi in range(t):
                if not bad[fi]:
                    rows.append(v[fi])
                    continue
                repl = None
                for m in range(d):
                    e = torch.zeros(d, dtype=tokens.dtype, device=tokens.device)
                    e[m] = 1.0
                    for q in basis:
                        e = e - (e * q[fi]).sum() * q[fi]
                    if e.norm() > 0.5:
                        repl = e
                        break
                if repl is None:
                    raise ValueError("cannot build fallback basis vector")
                rows.append(repl)
            v = torch.stack(rows)
        v = v / v.norm(dim=-1, keepdim=True)
        basis.append(v)
    return torch.stack(basis, dim=1), degenerate


def orth_loss_flagged(tokens: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Mean squared off-diagonal cosine between token rows, in [0, 1].

    Rows are unit-normalized first; an all-zero row is kept as the zero vector
    (contributing zero products) and flagged.
    """
    t, k, _ = tokens.shape
    if k < 2:
        raise ValueError("orthogonality loss needs at least two tokens")
    norms = tokens.norm(dim=-1, keepdim=True)
    zero_rows = (norms.squeeze(-1) == 0).any(dim=-1)
    v = tokens / norms.clamp_min(1e-12)
    gram = v @ v.transpose(1, 2)
    off = gram * (1.0 - torch.eye(k, dtype=tokens.dtype, device=tokens.device))
    per_frame = (off**2).sum(dim=(1, 2)) / (k * (k - 1))
    return per_frame.mean(), zero_rows


def orth_loss(tokens: torch.Tensor) -> torch.Tensor:
    return orth_loss_flagged(tokens)[0]
