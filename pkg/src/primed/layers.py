"""Shared neural building blocks: attention with optional key bias, FFN, 2D positions."""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

OUT_PROJ_INIT_GAIN = 0.1


class MultiheadAttention(nn.Module):
    """Multi-head attention whose logits accept an additive per-key bias.

    The bias is broadcast over queries and heads before the softmax, so a
    per-query constant can never change the output while a per-key bias
    steers the competition between keys.
    """

    def __init__(self, dim: int, num_heads: int, kv_dim: int | None = None):
        super().__init__()
        if dim % num_heads != 0:
            raise ValueError(f"dim {dim} not divisible by heads {num_heads}")
        kv_dim = dim if kv_dim is None else kv_dim
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(kv_dim, dim)
        self.v_proj = nn.Linear(kv_dim, dim)
        self.out_proj = nn.Linear(dim, dim)
        # damp the initial attention contribution: residual branches start near identity
        with torch.no_grad():
            self.out_proj.weight.mul_(OUT_PROJ_INIT_GAIN)

    def forward(
        self,
        q: torch.Tensor,
        k: torch.Tensor,
        v: torch.Tensor,
        key_bias: torch.Tensor | None = None,
        key_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """q: B x Nq x dim, k/v: B x Nk x kv_dim, key_bias: (B x) Nk, key_mask: (B x) Nk bool."""
        b, nq, _ = q.shape
        nk = k.shape[1]
        h = self.num_heads
        qh = self.q_proj(q).view(b, nq, h, self.head_dim).transpose(1, 2)
        kh = self.k_proj(k).view(b, nk, h, self.head_dim).transpose(1, 2)
        vh = self.v_proj(v).view(b, nk, h, self.head_dim).transpose(1, 2)
        logits = qh @ kh.transpose(-2, -1) / math.sqrt(self.head_dim)
        if not torch.isfinite(logits).all():
            raise ValueError("non-finite attention logits")
        if key_bias is not None:
            bias = key_bias.reshape(-1, nk) if key_bias.dim() > 1 else key_bias.expand(b, nk)
            logits = logits + bias.view(b, 1, 1, nk)
        if key_mask is not None:
            mask = key_mask.reshape(-1, nk) if key_mask.dim() > 1 else key_mask.expand(b, nk)
            logits = logits.masked_fill(~mask.view(b, 1, 1, nk), float("-inf"))
        attn = torch.softmax(logits, dim=-1)
        out = (attn @ vh).transpose(1, 2).reshape(b, nq, h * self.head_dim)
        return self.out_proj(out)


class FeedForward(nn.Module):
    def __init__(self, dim: int, expansion: int = 4):
        super().__init__()
        self.fc1 = nn.Linear(dim, expansion * dim)
        self.fc2 = nn.Linear(expansion * dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(F.gelu(self.fc1(x)))


class TransformerBlock(nn.Module):
    """One post-norm self-attention block: LN(x + MHSA(x)) then LN(x + FFN(x))."""

    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        self.attn = MultiheadAttention(dim, num_heads)
        self.norm1 = nn.LayerNorm(dim)
        self.ffn = FeedForward(dim)
        self.norm2 = nn.LayerNorm(dim)

    def forward(self, x: torch.Tensor, key_mask: torch.Tensor | None = None) -> torch.Tensor:
        x = self.norm1(x + self.attn(x, x, x, key_mask=key_mask))
        return self.norm2(x + self.ffn(x))


def sinusoidal_positions_2d(h: int, w: int, dim: int) -> torch.Tensor:
    """Fixed 2D sine/cosine position features, shape (h*w, dim)."""
    if dim % 4 != 0:
        raise ValueError("position dim must divide by 4")
    quarter = dim // 4
    freq = torch.exp(-math.log(100.0) * torch.arange(quarter, dtype=torch.float64) / max(quarter - 1, 1))
    ys = torch.arange(h, dtype=torch.float64) / max(h - 1, 1)
    xs = torch.arange(w, dtype=torch.float64) / max(w - 1, 1)
    ya = ys[:, None] * freq[None, :] * math.pi * 2
    xa = xs[:, None] * freq[None, :] * math.pi * 2
    out = torch.zeros(h, w, dim, dtype=torch.float64)
    out[..., 0 * quarter : 1 * quarter] = torch.sin(ya)[:, None, :]
    out[..., 1 * quarter : 2 * quarter] = torch.cos(ya)[:, None, :]
    out[..., 2 * quarter : 3 * quarter] = torch.sin(xa)[None, :, :]
    out[..., 3 * quarter : 4 * quarter] = torch.cos(xa)[None, :, :]
    return out.reshape(h * w, dim).to(torch.float32)
