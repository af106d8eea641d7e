"""Ablation sweeps: train each variant over shared seeds, tabulate the metrics.

The sweep spec is a YAML mapping::

    seeds: [0, 1, 2]
    eval: {split: val, template: audio-dominant}
    variants:
      - {name: full, overrides: {}}
      - {name: no_prior, overrides: {ablation.use_prior: false}}

Every variant trains once per seed; the table reports mean and spread of
J/F/S on the evaluation subset, as JSON, CSV, aligned text, and a figure.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import yaml

from .ablate_io import table_to_csv, table_to_text
from .config import RunConfig, apply_overrides, config_from_dict, config_to_dict
from .evaluate import evaluate
from .figures import plot_ablation
from .train import train


def load_sweep(path: str | Path) -> dict:
    with open(path) as fh:
        spec = yaml.safe_load(fh)
    return validate_sweep(spec)


def validate_sweep(spec: dict) -> dict:
    if not isinstance(spec, dict):
        raise ValueError("sweep spec must be a mapping")
    unknown = set(spec) - {"seeds", "eval", "variants"}
    if unknown:
        raise ValueError(f"unknown sweep keys {sorted(unknown)}")
    seeds = spec.get("seeds", [0, 1, 2])
    if not seeds or not all(isinstance(s, int) for s in seeds):
        raise ValueError("sweep seeds must be a non-empty list of integers")
    ev = dict(spec.get("eval", {"split": "val"}))
    ev.setdefault("split", "val")
    ev.setdefault("template", None)
    variants = spec.get("variants")
    if not variants:
        raise ValueError("sweep needs at least one variant")
    names = [v.get("name") for v in variants]
    if len(set(names)) != len(names) or not all(names):
        raise ValueError("variant names must be unique and non-empty")
    for v in variants:
        extra = set(v) - {"name", "overrides"}
        if extra:
            raise ValueError(f"unknown variant keys {sorted(extra)} in {v.get('name')!r}")
    return {"seeds": list(seeds), "eval": ev, "variants": variants}


def ablate(base_cfg: RunConfig, sweep: dict, out_dir: str | Path) -> dict:
    sweep = validate_sweep(sweep)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    split = sweep["eval"]["split"]
    template = sweep["eval"]["template"]

    rows = []
    for variant in sweep["variants"]:
        cfg_v = apply_overrides(base_cfg, variant.get("overrides") or {})
        per_seed = {}
        for seed in sweep["seeds"]:
            data = config_to_dict(cfg_v)
            data["seed"] = seed
            cfg_run = config_from_dict(data)
            run_dir = out / variant["name"] / f"seed{seed}"
            result = train(cfg_run, run_dir)
            reports = evaluate(
                result["checkpoint"],
                cfg_run.dataset,
                split=split,
                template=template,
                report_path=run_dir / "report.json",
            )
            rep = reports[split]
            per_seed[str(seed)] = {"J": rep.J, "F": rep.F, "S": rep.S}
        row = {"name": variant["name"], "per_seed": per_seed}
        for key in ("J", "F", "S"):
            vals = np.array([per_seed[str(s)][key] for s in sweep["seeds"]])
            row[f"{key}_mean"] = float(vals.mean())
            row[f"{key}_std"] = float(vals.std())
        rows.append(row)

    table = {"eval": sweep["eval"], "seeds": sweep["seeds"], "rows": rows}
    (out / "ablation.json").write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")
    (out / "ablation.csv").write_text(table_to_csv(table))
    (out / "ablation.txt").write_text(table_to_text(table))
    plot_ablation(table, out / "ablation.png")
    return table
