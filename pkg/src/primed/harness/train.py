"""Training loop: full-pipeline forward, weighted objective, schedule, logging.

Per epoch the loop logs the mean of every loss component plus validation J as
one JSON line, and writes a byte-stable checkpoint.  With ``deterministic``
set, (config, seed) fixes the whole trajectory bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch.optim import AdamW
from torch.optim.lr_scheduler import LambdaLR

from .. import evalkit
from ..arrayio import canonical_json
from ..model import LossConfig, ModelConfig, PrimedModel
from ..synthscene import (
    VISUAL_CHANNELS,
    load_manifest,
    load_sample,
    manifest_entries,
    read_soft_labels_jsonl,
)
from .checkpoint import save_checkpoint
from .config import RunConfig, config_to_dict
from .figures import plot_training_curves


def setup_determinism(seed: int, deterministic: bool) -> None:
    torch.manual_seed(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True)


@dataclass
class TensorSample:
    sid: str
    split: str
    template: str
    f_v: list[torch.Tensor]
    f_a: torch.Tensor
    f_t: torch.Tensor  # valid rows only
    gt: torch.Tensor  # T x H x W uint8
    soft_p: torch.Tensor


def tensorize(root, entry, sigma=None, soft_labels=None) -> TensorSample:
    b = load_sample(root, entry, sigma=sigma, soft_labels=soft_labels)
    return TensorSample(
        sid=entry["id"],
        split=entry["split"],
        template=entry["template"],
        f_v=[torch.from_numpy(x) for x in b.f_v],
        f_a=torch.from_numpy(b.f_a),
        f_t=torch.from_numpy(b.f_t[: b.text_len]),
        gt=torch.from_numpy(b.gt_masks),
        soft_p=torch.from_numpy(np.asarray(b.soft_label.p, dtype=np.float32)),
    )


def build_model(cfg: RunConfig, canvas: int) -> PrimedModel:
    mc = ModelConfig(
        canvas=(canvas, canvas),
        channels=VISUAL_CHANNELS,
        d=cfg.model.d,
        d0=cfg.model.d0,
        num_tokens=cfg.model.num_tokens,
        heads=cfg.model.heads,
        num_sparse=cfg.model.num_sparse,
        prompt_hw=cfg.model.prompt_hw,
        mpd_hidden=cfg.model.mpd_hidden,
        beta=cfg.beta,
        gs_at_inference=cfg.model.gs_at_inference,
        toggles=cfg.ablation,
    )
    return PrimedModel(mc)


def loss_config(cfg: RunConfig) -> LossConfig:
    return LossConfig(
        weights=cfg.loss.weights(),
        sasa_grid=cfg.loss.sasa_grid,
        top_k=cfg.loss.top_k,
        tau=cfg.loss.tau,
    )


def make_scheduler(optimizer, total_steps: int, warmup_frac: float, start_factor: float):
    warmup = max(int(math.ceil(warmup_frac * total_steps)), 1)

    def factor(step: int) -> float:
        if step < warmup:
            return start_factor + (1.0 - start_factor) * step / warmup
        span = max(total_steps - warmup, 1)
        return 0.5 * (1.0 + math.cos(math.pi * (step - warmup) / span))

    return LambdaLR(optimizer, factor)


def quick_val_j(model: PrimedModel, samples: list[TensorSample]) -> float:
    """Mean per-sample region overlap on a held-out list, in percent."""
    if not samples:
        return float("nan")
    model.eval()
    js = []
    with torch.no_grad():
        for s in samples:
            out = model(s.f_v, s.f_a, s.f_t)
            pred = out.mask.binary.numpy()
            gt = s.gt.numpy()
            js.append(np.mean([evalkit.jaccard(p, g) for p, g in zip(pred, gt)]))
    model.train()
    return 100.0 * float(np.mean(js))


def train(cfg: RunConfig, out_dir: str | Path) -> dict:
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    setup_determinism(cfg.seed, cfg.deterministic)

    manifest = load_manifest(cfg.dataset)
    canvas = manifest["canvas"]
    soft_labels = read_soft_labels_jsonl(cfg.soft_labels) if cfg.soft_labels else None
    train_samples = [
        tensorize(cfg.dataset, e, soft_labels=soft_labels)
        for e in manifest_entries(manifest, "train")
    ]
    if not train_samples:
        raise ValueError(f"dataset {cfg.dataset} has no train split")
    val_samples = [tensorize(cfg.dataset, e) for e in manifest_entries(manifest, "val")]

    model = build_model(cfg, canvas)
    model.train()
    lc = loss_config(cfg)
    bias_params = list(model.bias_proj.parameters())
    bias_ids = {id(p) for p in bias_params}
    main_params = [p for p in model.parameters() if id(p) not in bias_ids]
    opt = AdamW(
        [
            {"params": main_params},
            {"params": bias_params, "lr": cfg.optim.lr * cfg.optim.bias_lr_mult},
        ],
        lr=cfg.optim.lr,
        betas=(cfg.optim.beta1, cfg.optim.beta2),
        weight_decay=cfg.optim.weight_decay,
    )
    total_steps = cfg.optim.epochs * len(train_samples)
    sched = make_scheduler(opt, total_steps, cfg.optim.warmup_frac, cfg.optim.warmup_start_factor)

    ckpt_config = {"run": config_to_dict(cfg), "canvas": canvas, "num_frames": manifest["num_frames"]}
    records = []
    log_path = out / "log.jsonl"
    final_ckpt = out / "ckpt-final.ckpt"
    with open(log_path, "w") as log:
        for epoch in range(1, cfg.optim.epochs + 1):
            order = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence([cfg.seed, 101, epoch]))
            ).permutation(len(train_samples))
            sums = {"seg": 0.0, "sasa": 0.0, "kl": 0.0, "orth": 0.0, "total": 0.0}
            for step, idx in enumerate(order):
                s = train_samples[int(idx)]
                fwd = model(s.f_v, s.f_a, s.f_t)
                losses = model.losses(fwd, s.gt, s.soft_p, lc)
                total = losses["total"]
                if not torch.isfinite(total):
                    dump = {k: float(v.detach()) for k, v in losses.items()}
                    dump.update(epoch=epoch, step=step, sample=s.sid)
                    (out / "nan_dump.json").write_text(canonical_json(dump) + "\n")
                    raise RuntimeError(f"non-finite loss at epoch {epoch} step {step}: {dump}")
                opt.zero_grad()
                total.backward()
                if cfg.optim.grad_clip > 0:
                    torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.optim.grad_clip)
                opt.step()
                sched.step()
                for k in sums:
                    sums[k] += float(losses[k].detach())
            n = len(train_samples)
            record = {k: sums[k] / n for k in ("seg", "sasa", "kl", "orth", "total")}
            record["epoch"] = epoch
            record["val_J"] = quick_val_j(model, val_samples) if val_samples else None
            records.append(record)
            log.write(
                canonical_json(
                    {k: record[k] for k in ("epoch", "seg", "sasa", "kl", "orth", "total", "val_J")}
                )
                + "\n"
            )
            log.flush()
            save_checkpoint(
                out / f"ckpt-epoch{epoch:03d}.ckpt",
                model.state_dict(),
                opt.state_dict(),
                epoch,
                ckpt_config,
            )
    save_checkpoint(final_ckpt, model.state_dict(), opt.state_dict(), cfg.optim.epochs, ckpt_config)
    plot_training_curves(records, out / "training_curves.png")
    return {"records": records, "checkpoint": final_ckpt, "log": log_path}
