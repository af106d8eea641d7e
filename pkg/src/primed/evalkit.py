"""Segmentation metrics (region J, boundary F, null-split S) and reports.

Boundary F follows the DAVIS-style recipe: 4-neighbor boundaries, matched
within a euclidean dilation radius; precision and recall over boundary pixels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


def jaccard(pred: np.ndarray, gt: np.ndarray) -> float:
    """Intersection over union of two binary masks; both empty counts as 1."""
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    p = pred.astype(bool)
    g = gt.astype(bool)
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, g).sum() / union)


def mask_boundary(mask: np.ndarray) -> np.ndarray:
    """Foreground pixels with a 4-neighbor outside the mask (image border counts)."""
    m = mask.astype(bool)
    pad = np.pad(m, 1, constant_values=False)
    interior = pad[:-2, 1:-1] & pad[2:, 1:-1] & pad[1:-1, :-2] & pad[1:-1, 2:]
    return m & ~interior


def _disk_offsets(tol: int) -> list[tuple[int, int]]:
    return [
        (dy, dx)
        for dy in range(-tol, tol + 1)
        for dx in range(-tol, tol + 1)
        if dy * dy + dx * dx <= tol * tol
    ]


def dilate(mask: np.ndarray, tol: int) -> np.ndarray:
    """Binary dilation by a euclidean disk of radius ``tol`` pixels."""
    if tol <= 0:
        return mask.astype(bool)
    h, w = mask.shape
    out = np.zeros_like(mask, dtype=bool)
    src = mask.astype(bool)
    for dy, dx in _disk_offsets(tol):
        ys = slice(max(dy, 0), h + min(dy, 0))
        yd = slice(max(-dy, 0), h + min(-dy, 0))
        xs = slice(max(dx, 0), w + min(dx, 0))
        xd = slice(max(-dx, 0), w + min(-dx, 0))
        out[yd, xd] |= src[ys, xs]
    return out


def boundary_f(pred: np.ndarray, gt: np.ndarray, tolerance_px: int = 1) -> float:
    """Boundary F-measure with dilation matching; both masks empty gives 1."""
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    pb = mask_boundary(pred)
    gb = mask_boundary(gt)
    n_p, n_g = int(pb.sum()), int(gb.sum())
    if n_p == 0 and n_g == 0:
        return 1.0
    precision = float((pb & dilate(gb, tolerance_px)).sum() / n_p) if n_p else 0.0
    recall = float((gb & dilate(pb, tolerance_px)).sum() / n_g) if n_g else 0.0
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def s_metric(pred: np.ndarray) -> tuple[float, bool]:
    """sqrt(foreground / background pixels), frame-meaned.

    An all-foreground frame is capped at sqrt(total pixels) and flagged.
    """
    frames = pred if pred.ndim == 3 else pred[None]
    vals = []
    capped = False
    for fr in frames:
        fg = int(fr.astype(bool).sum())
        bg = fr.size - fg
        if bg == 0:
            vals.append(float(np.sqrt(fr.size)))
            capped = True
        else:
            vals.append(float(np.sqrt(fg / bg)))
    return float(np.mean(vals)), capped


def sample_metrics(pred: np.ndarray, gt: np.ndarray, tolerance_px: int = 1) -> dict:
    """Per-sample J/F/S: frame metrics averaged over the clip (fractions)."""
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    js = [jaccard(p, g) for p, g in zip(pred, gt)]
    fs = [boundary_f(p, g, tolerance_px) for p, g in zip(pred, gt)]
    s, capped = s_metric(pred)
    return {"J": float(np.mean(js)), "F": float(np.mean(fs)), "S": s, "s_capped": capped}


@dataclass
class MetricReport:
    split: str
    J: float  # percent
    F: float  # percent
    JF: float  # percent, (J + F) / 2 of the aggregates
    S: float
    per_sample: list = field(default_factory=list)  # (id, J%, F%, S)
    degenerate_jf: bool = False  # region metrics meaningless (null split)

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "J": self.J,
            "F": self.F,
            "JF": self.JF,
            "S": self.S,
            "degenerate_jf": self.degenerate_jf,
            "per_sample": [list(row) for row in self.per_sample],
        }

    @staticmethod
    def from_dict(d: dict) -> "MetricReport":
        return MetricReport(
            split=d["split"],
            J=d["J"],
            F=d["F"],
            JF=d["JF"],
            S=d["S"],
            degenerate_jf=d.get("degenerate_jf", False),
            per_sample=[tuple(row) for row in d["per_sample"]],
        )


def aggregate_report(rows: list[dict]) -> dict[str, MetricReport]:
    """Aggregate per-sample rows ({id, split, J, F, S} with J/F as fractions).

    Returns one report per split (values in percent) plus a ``mix`` report
    averaging the seen and unseen split means when both are present.
    """
    by_split: dict[str, list[dict]] = {}
    for row in rows:
        by_split.setdefault(row["split"], []).append(row)
    reports = {}
    for split, items in by_split.items():
        j = 100.0 * float(np.mean([r["J"] for r in items]))
        f = 100.0 * float(np.mean([r["F"] for r in items]))
        reports[split] = MetricReport(
            split=split,
            J=j,
            F=f,
            JF=(j + f) / 2.0,
            S=float(np.mean([r["S"] for r in items])),
            per_sample=[(r["id"], 100.0 * r["J"], 100.0 * r["F"], r["S"]) for r in items],
            degenerate_jf=(split == "null"),
        )
    if "seen" in reports and "unseen" in reports:
        j = (reports["seen"].J + reports["unseen"].J) / 2.0
        f = (reports["seen"].F + reports["unseen"].F) / 2.0
        reports["mix"] = MetricReport(
            split="mix",
            J=j,
            F=f,
            JF=(j + f) / 2.0,
            S=(reports["seen"].S + reports["unseen"].S) / 2.0,
            per_sample=[],
        )
    return reports


def write_report(path, reports: dict[str, MetricReport]) -> None:
    payload = {split: rep.to_dict() for split, rep in sorted(reports.items())}
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def read_report(path) -> dict[str, MetricReport]:
    with open(path) as fh:
        payload = json.load(fh)
    return {split: MetricReport.from_dict(d) for split, d in payload.items()}
