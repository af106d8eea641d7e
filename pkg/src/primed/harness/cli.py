"""Command line entry points: gen, train, eval, ablate."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import yaml

from ..synthscene import GenerationConfig, gen_dataset
from ..synthscene.dataset import gen_config_from_dict
from .ablate import ablate, load_sweep
from .config import load_config
from .evaluate import evaluate
from .train import train


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument(
        "--deterministic",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="force deterministic execution on/off",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="primed")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a synthetic dataset")
    p_gen.add_argument("--config", type=Path, default=None, help="generation config YAML")
    p_gen.add_argument("--out", type=Path, required=True, help="output dataset directory")
    _add_common(p_gen)

    p_train = sub.add_parser("train", help="train a model")
    p_train.add_argument("--config", type=Path, required=True, help="run config YAML")
    p_train.add_argument("--out", type=Path, required=True, help="output run directory")
    _add_common(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--ckpt", type=Path, required=True)
    p_eval.add_argument("--data", type=Path, required=True)
    p_eval.add_argument("--split", default="val", help="split name or 'all'")
    p_eval.add_argument("--template", default=None, help="restrict to one referring template")
    p_eval.add_argument("--report", type=Path, required=True, help="report JSON path")
    p_eval.add_argument("--dump-masks", action="store_true", help="write predicted masks")
    _add_common(p_eval)

    p_abl = sub.add_parser("ablate", help="run an ablation sweep")
    p_abl.add_argument("--config", type=Path, required=True, help="base run config YAML")
    p_abl.add_argument("--sweep", type=Path, required=True, help="sweep spec YAML")
    p_abl.add_argument("--out", type=Path, required=True)
    _add_common(p_abl)

    return parser


def _load_run_config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.deterministic is not None:
        cfg.deterministic = args.deterministic
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "gen":
        if args.config is not None:
            with open(args.config) as fh:
                gcfg = gen_config_from_dict(yaml.safe_load(fh) or {})
        else:
            gcfg = GenerationConfig()
        if args.seed is not None:
            gcfg.seed = args.seed
        manifest = gen_dataset(gcfg, args.out)
        print(f"wrote {len(manifest['samples'])} samples to {args.out}")
        return 0

    if args.command == "train":
        cfg = _load_run_config(args)
        result = train(cfg, args.out)
        last = result["records"][-1]
        print(f"trained {len(result['records'])} epochs; final total {last['total']:.4f}")
        print(f"checkpoint: {result['checkpoint']}")
        return 0

    if args.command == "eval":
        reports = evaluate(
            args.ckpt,
            args.data,
            split=args.split,
            template=args.template,
            report_path=args.report,
            dump_masks=args.dump_masks,
        )
        for split in sorted(reports):
            rep = reports[split]
            flag = " (J/F degenerate)" if rep.degenerate_jf else ""
            print(
                f"{split}: J {rep.J:.2f}  F {rep.F:.2f}  J&F {rep.JF:.2f}  S {rep.S:.4f}{flag}"
            )
        return 0

    if args.command == "ablate":
        cfg = _load_run_config(args)
        table = ablate(cfg, load_sweep(args.sweep), args.out)
        print((Path(args.out) / "ablation.txt").read_text())
        return 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
