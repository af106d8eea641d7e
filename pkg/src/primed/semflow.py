"""Semantic flow generation: modality prior, audio/text fusion, cached memory.

Audio and text features are projected into a shared width, refined jointly by
one self-attention block, and the audio rows are then contrasted against a
running mean of their own past (the cached memory) before both sequences are
broadcast into the unified per-frame semantic flow.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .layers import TransformerBlock

KL_CLAMP = 1e-8


@dataclass
class ModalityPrior:
    z: torch.Tensor  # 3 logits
    p: torch.Tensor  # [p_audio, p_visual, p_joint], softmax of z


class ModalityPriorDecoder(nn.Module):
    """Two linear layers with a ReLU mapping the global text token to 3 logits."""

    def __init__(self, text_dim: int, hidden: int = 128):
        super().__init__()
        self.fc1 = nn.Linear(text_dim, hidden)
        self.fc2 = nn.Linear(hidden, 3)

    def forward(self, t_g: torch.Tensor) -> ModalityPrior:
        if not torch.isfinite(t_g).all():
            raise ValueError("non-finite global text token")
        z = self.fc2(F.relu(self.fc1(t_g)))
        return ModalityPrior(z=z, p=torch.softmax(z, dim=-1))


def kl_loss(p_m: torch.Tensor, p_tilde: torch.Tensor) -> torch.Tensor:
    """KL(p_tilde || p_m) with the 0*log(0/q)=0 convention; p_m clamped at 1e-8."""
    p = torch.clamp(p_m, min=KL_CLAMP)
    terms = torch.where(
        p_tilde > 0,
        p_tilde * (torch.log(torch.clamp(p_tilde, min=KL_CLAMP)) - torch.log(p)),
        torch.zeros_like(p_tilde),
    )
    return terms.sum()


class SemanticFusion(nn.Module):
    """Project audio/text into the shared width and refine them jointly.

    The two sequences are concatenated audio-first, run through one post-norm
    self-attention block, and split back apart.
    """

    def __init__(self, d: int, audio_dim: int, text_dim: int, num_heads: int = 4):
        super().__init__()
        self.proj_audio = nn.Linear(audio_dim, d)
        self.proj_text = nn.Linear(text_dim, d)
        self.block = TransformerBlock(d, num_heads)

    def forward(
        self,
        f_a: torch.Tensor,
        f_t: torch.Tensor,
        text_mask: torch.Tensor | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        t, l = f_a.shape[0], f_t.shape[0]
        if t == 0 or l == 0:
            raise ValueError("need at least one audio and one text token")
        x = torch.cat([self.proj_audio(f_a), self.proj_text(f_t)], dim=0)
        key_mask = None
        if text_mask is not None:
            key_mask = torch.cat([torch.ones(t, dtype=torch.bool, device=x.device), text_mask])
        x = self.block(x.unsqueeze(0), key_mask=key_mask).squeeze(0)
        return x[:t], x[t:]


def temporal_enhance(s_a: torch.Tensor, beta: float) -> tuple[torch.Tensor, torch.Tensor]:
    """Cached-memory enhancement, computed for all frames in one prefix-sum pass.

    c_a[0] = 0 and c_a[i] = mean(s_a[:i]); the enhanced sequence is
    (beta+1) * s_a - beta * c_a.
    """
    t, d = s_a.shape
    prefix = torch.cumsum(s_a, dim=0)
    denom = torch.arange(1, t, device=s_a.device, dtype=s_a.dtype).unsqueeze(1)
    c_a = torch.cat([s_a.new_zeros(1, d), prefix[:-1] / denom]) if t > 1 else s_a.new_zeros(t, d)
    return c_a, (beta + 1.0) * s_a - beta * c_a


def build_flow(s_a_hat: torch.Tensor, s_t: torch.Tensor) -> torch.Tensor:
    """Broadcast the concatenated token sequence along time: T x (T+L) x d."""
    t = s_a_hat.shape[0]
    tokens = torch.cat([s_a_hat, s_t], dim=0)
    return tokens.unsqueeze(0).expand(t, -1, -1)
