"""Full segmentation pipeline: semantic flow -> distilled tokens -> fusion -> mask.

The model consumes pre-encoded feature bundles (4-stage visual hierarchy,
audio rows, text rows) and produces mask logits plus every intermediate the
losses and the ablation instrumentation need.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn

from . import semflow
from .cbcf import BiasField, BiasProjector, CBCFStack, StageFusionOutput
from .distiller import TokenDistiller, orth_loss_flagged, orthogonalize
from .maskhead import MaskDecoder, MaskLogits, PromptBank, PromptMaker, inject_prompts
from .objectives import LossWeights, SemanticProjection, sasa_loss, seg_loss, total_loss


@dataclass
class AblationToggles:
    use_prior: bool = True
    use_distiller: bool = True
    use_sparse: bool = True
    use_dense: bool = True
    use_sasa: bool = True
    use_orth: bool = True
    use_cached_memory: bool = True


@dataclass
class ModelConfig:
    canvas: tuple[int, int] = (64, 64)
    channels: tuple[int, int, int, int] = (32, 64, 128, 256)
    stage_hw: list[tuple[int, int]] | None = None  # default: canvas/4 halving per stage
    d: int = 64
    d0: int = 64
    num_tokens: int = 4
    heads: int = 4
    num_sparse: int = 4
    prompt_hw: int = 16
    text_dim: int = 64
    audio_dim: int = 64
    mpd_hidden: int = 128
    beta: float = 1.0
    gs_at_inference: bool = True  # keep Gram-Schmidt on outside training
    toggles: AblationToggles = field(default_factory=AblationToggles)

    def grids(self) -> list[tuple[int, int]]:
        if self.stage_hw is not None:
            return [tuple(hw) for hw in self.stage_hw]
        h, w = self.canvas
        return [(h // (4 * 2**n), w // (4 * 2**n)) for n in range(4)]


@dataclass
class ForwardOutput:
    prior: semflow.ModalityPrior | None
    s_a: torch.Tensor
    c_a: torch.Tensor
    s_a_hat: torch.Tensor
    f_se: torch.Tensor
    v_dis_raw: torch.Tensor | None
    v_dis: torch.Tensor | None
    gs_degenerate: torch.Tensor | None
    bias: BiasField | None
    stages: list[StageFusionOutput]
    increments: list[tuple[torch.Tensor, torch.Tensor]]
    mask: MaskLogits
    pyramid: list[torch.Tensor]


@dataclass
class LossConfig:
    weights: LossWeights = field(default_factory=LossWeights)
    sasa_grid: int = 64
    top_k: int = 10
    tau: float = 0.07


class PrimedModel(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        grids = cfg.grids()
        self.mpd = semflow.ModalityPriorDecoder(cfg.text_dim, cfg.mpd_hidden)
        self.fusion = semflow.SemanticFusion(cfg.d, cfg.audio_dim, cfg.text_dim, cfg.heads)
        self.distiller = TokenDistiller(cfg.channels[3], cfg.d0, cfg.num_tokens, cfg.heads)
        self.bias_proj = BiasProjector(cfg.d, cfg.text_dim, cfg.audio_dim, cfg.channels[3])
        self.stack = CBCFStack(cfg.d, cfg.channels, grids, cfg.d0, cfg.heads)
        self.prompt_bank = PromptBank(cfg.d, cfg.prompt_hw, cfg.num_sparse)
        self.prompt_makers = nn.ModuleList(
            PromptMaker(cfg.d, cfg.channels[n], cfg.d, cfg.prompt_hw, cfg.num_sparse)
            for n in range(3)
        )
        self.decoder = MaskDecoder(cfg.d, cfg.channels, grids, cfg.canvas, cfg.heads)
        self.sasa_proj = SemanticProjection(cfg.d)

    def forward(
        self,
        f_v: list[torch.Tensor],
        f_a: torch.Tensor,
        f_t: torch.Tensor,
        trace: dict | None = None,
    ) -> ForwardOutput:
        """f_v: 4 stage maps (T x C_n x H_n x W_n); f_a: T x d_A; f_t: L x d_T (valid rows)."""
        tg = f_t[0]
        toggles = self.cfg.toggles

        prior = self.mpd(tg) if toggles.use_prior else None
        s_a, s_t = self.fusion(f_a, f_t)
        if toggles.use_cached_memory:
            c_a, s_a_hat = semflow.temporal_enhance(s_a, self.cfg.beta)
        else:
            c_a, s_a_hat = torch.zeros_like(s_a), s_a
        f_se = semflow.build_flow(s_a_hat, s_t)

        v_dis_raw = v_dis = gs_degenerate = None
        if toggles.use_distiller:
            v_dis_raw = self.distiller(f_v[3])
            if self.training or self.cfg.gs_at_inference:
                v_dis, gs_degenerate = orthogonalize(v_dis_raw)
            else:
                v_dis = v_dis_raw

        bias = None
        if toggles.use_prior:
            bias = self.bias_proj(prior.p, tg, f_a, f_v[3])

        stages = self.stack(f_v[:3], f_se, v_dis, bias)

        increments = []
        prompts = []
        for n, out in enumerate(stages):
            dense_inc, sparse_inc = self.prompt_makers[n](out.v_fused, out.s_fused)
            if not toggles.use_dense:
                dense_inc = torch.zeros_like(dense_inc)
            if not toggles.use_sparse:
                sparse_inc = torch.zeros_like(sparse_inc)
            increments.append((dense_inc, sparse_inc))
            prompts.append(inject_prompts(self.prompt_bank, dense_inc, sparse_inc))

        mask, pyramid = self.decoder([out.v_fused for out in stages], prompts)

        result = ForwardOutput(
            prior=prior,
            s_a=s_a,
            c_a=c_a,
            s_a_hat=s_a_hat,
            f_se=f_se,
            v_dis_raw=v_dis_raw,
            v_dis=v_dis,
            gs_degenerate=gs_degenerate,
            bias=bias,
            stages=stages,
            increments=increments,
            mask=mask,
            pyramid=pyramid,
        )
        if trace is not None:
            trace.update(
                s_a=s_a.detach(),
                c_a=c_a.detach(),
                s_a_hat=s_a_hat.detach(),
                bias=bias,
                increments=[(d.detach(), s.detach()) for d, s in increments],
                v_dis=None if v_dis is None else v_dis.detach(),
            )
        return result

    def losses(
        self,
        out: ForwardOutput,
        gt: torch.Tensor,
        soft_label: torch.Tensor,
        loss_cfg: LossConfig,
    ) -> dict[str, torch.Tensor]:
        toggles = self.cfg.toggles
        zero = out.mask.logits.new_zeros(())
        seg = seg_loss(out.mask.logits, gt)
        sasa = zero
        if toggles.use_sasa:
            sasa = sasa_loss(
                out.pyramid[2],
                gt,
                out.f_se,
                self.sasa_proj,
                grid=loss_cfg.sasa_grid,
                top_k=loss_cfg.top_k,
                tau=loss_cfg.tau,
            )
        kl = semflow.kl_loss(out.prior.p, soft_label) if out.prior is not None else zero
        orth = zero
        if toggles.use_orth and out.v_dis_raw is not None:
            orth = orth_loss_flagged(out.v_dis_raw)[0]
        total = total_loss(seg, sasa, kl, orth, loss_cfg.weights)
        return {"seg": seg, "sasa": sasa, "kl": kl, "orth": orth, "total": total}
