"""Checkpoint evaluation: inference on a split, metric aggregation, report files.

Writes the report JSON, a per-sample CSV, and a metrics figure side by side;
optionally dumps predicted masks in the dataset's binary codec.
"""

from __future__ import annotations

import csv
from pathlib import Path

import torch

from .. import evalkit
from ..arrayio import save_array
from ..synthscene import load_manifest, manifest_entries
from .checkpoint import load_checkpoint, load_model_state
from .config import config_from_dict
from .figures import plot_metric_report
from .train import build_model, setup_determinism, tensorize


def evaluate(
    ckpt_path: str | Path,
    data_dir: str | Path,
    split: str = "val",
    template: str | None = None,
    report_path: str | Path | None = None,
    dump_masks: bool = False,
    tolerance_px: int = 1,
) -> dict[str, evalkit.MetricReport]:
    """Run inference and aggregate metrics; ``split`` may be a name or ``all``."""
    ckpt = load_checkpoint(ckpt_path)
    cfg = config_from_dict(ckpt["config"]["run"])
    manifest = load_manifest(data_dir)
    if manifest["canvas"] != ckpt["config"]["canvas"]:
        raise ValueError(
            f"dataset canvas {manifest['canvas']} does not match "
            f"checkpoint canvas {ckpt['config']['canvas']}"
        )
    setup_determinism(cfg.seed, cfg.deterministic)
    model = build_model(cfg, manifest["canvas"])
    load_model_state(model, ckpt["model"])
    model.eval()

    entries = manifest_entries(manifest, None if split == "all" else split, template)
    if not entries:
        raise ValueError(f"no samples for split={split!r} template={template!r}")

    out_dir = Path(report_path).parent if report_path else None
    if dump_masks and out_dir is not None:
        (out_dir / "masks").mkdir(parents=True, exist_ok=True)

    rows = []
    with torch.no_grad():
        for entry in entries:
            s = tensorize(data_dir, entry)
            out = model(s.f_v, s.f_a, s.f_t)
            pred = out.mask.binary.numpy()
            metrics = evalkit.sample_metrics(pred, s.gt.numpy(), tolerance_px)
            rows.append({"id": s.sid, "split": s.split, **metrics})
            if dump_masks and out_dir is not None:
                save_array(out_dir / "masks" / f"{s.sid}.bin", pred)

    reports = evalkit.aggregate_report(rows)
    if report_path is not None:
        report_path = Path(report_path)
        report_path.parent.mkdir(parents=True, exist_ok=True)
        evalkit.write_report(report_path, reports)
        _write_csv(report_path.with_suffix(".csv"), rows)
        plot_metric_report(reports, report_path.with_suffix(".png"))
    return reports


def _write_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "split", "J", "F", "S", "s_capped"])
        for r in rows:
            writer.writerow(
                [r["id"], r["split"], f"{100.0 * r['J']:.4f}", f"{100.0 * r['F']:.4f}", f"{r['S']:.6f}", int(r["s_capped"])]
            )
