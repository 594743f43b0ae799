"""Command line front end.

    dmsr train  DATA --out DIR [--config FILE|PRESET] [--seed N] [--scale R]
    dmsr infer  CKPT IMAGE --out DIR [--bit-depth {8,16}]
    dmsr eval   CKPT DATA  --out DIR
    dmsr ablate DATA --out DIR [--config FILE|PRESET] [--seed N] [--scale R]
    dmsr check-grad [MODULE] [--list]

``--config`` accepts either a JSON file or a preset name.  Exit status is
nonzero when a command fails, including any gradient check above
tolerance.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import gradcheck
from .network import PRESETS, preset
from .tensor import ConfigError
from .train import TrainConfig, ablate, evaluate, infer, train


def _add_run_args(p, out_required=True):
    p.add_argument("--config", default=None, metavar="FILE|PRESET",
                   help="JSON config file or preset name "
                        f"({', '.join(sorted(PRESETS))}); default desk")
    p.add_argument("--seed", type=_u64, default=0,
                   help="run seed (unsigned 64-bit)")
    p.add_argument("--scale", type=int, choices=(2, 4), default=None,
                   help="super-resolution factor; overrides the config")
    p.add_argument("--out", required=out_required, metavar="DIR",
                   help="output directory")


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return value


def load_train_config(arg) -> TrainConfig:
    if arg is None:
        return TrainConfig()
    if arg in PRESETS:
        return TrainConfig(model=preset(arg))
    path = Path(arg)
    if not path.is_file():
        raise ConfigError(f"--config '{arg}' is neither a preset "
                          f"({', '.join(sorted(PRESETS))}) nor a file")
    return TrainConfig.from_json(path.read_text())


def _resolve(args) -> TrainConfig:
    cfg = load_train_config(args.config)
    if args.scale is not None:
        cfg = replace(cfg, model=replace(cfg.model, scale=args.scale))
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dmsr",
        description="MRI super-resolution with state-space scanning and "
                    "deformable convolution")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model on a directory of images")
    p.add_argument("data", help="directory of PNG/PGM images")
    p.add_argument("--resume", default=None, metavar="CKPT",
                   help="checkpoint to continue from")
    _add_run_args(p)

    p = sub.add_parser("infer", help="super-resolve one image")
    p.add_argument("checkpoint")
    p.add_argument("image")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--bit-depth", type=int, choices=(8, 16), default=16)

    p = sub.add_parser("eval", help="PSNR/SSIM report over a directory")
    p.add_argument("checkpoint")
    p.add_argument("data")
    p.add_argument("--out", required=True, metavar="DIR")

    p = sub.add_parser("ablate", help="train and score component ablations")
    p.add_argument("data")
    _add_run_args(p)

    p = sub.add_parser("check-grad",
                       help="compare analytic gradients to finite "
                            "differences")
    p.add_argument("module", nargs="?", default=None,
                   help="restrict to one module (default: all)")
    p.add_argument("--list", action="store_true", dest="list_only",
                   help="list registered checks and exit")
    return parser


def _cmd_train(args) -> int:
    cfg = _resolve(args)
    summary = train(cfg, args.data, args.out, seed=args.seed,
                    resume=args.resume)
    print(f"trained {summary['steps']} steps on {summary['pairs']} pairs; "
          f"total {summary['first_total']:.6f} -> "
          f"{summary['last_total']:.6f}")
    print(f"checkpoint: {summary['checkpoint']}")
    return 0


def _cmd_infer(args) -> int:
    result = infer(args.checkpoint, args.image, args.out,
                   bit_depth=args.bit_depth)
    print(f"wrote {result['output']} (x{result['scale']})")
    return 0


def _cmd_eval(args) -> int:
    report = evaluate(args.checkpoint, args.data, args.out)
    print((Path(args.out) / "table.txt").read_text(), end="")
    return 0 if report["rows"] else 1


def _cmd_ablate(args) -> int:
    cfg = _resolve(args)
    ablate(cfg, args.data, args.out, seed=args.seed)
    print((Path(args.out) / "ablation_table.txt").read_text(), end="")
    return 0


def _cmd_check_grad(args) -> int:
    if args.list_only:
        for module, op in gradcheck.list_checks(args.module):
            print(f"{module}.{op}")
        return 0
    if args.module:
        results = {args.module: gradcheck.run_module(args.module)}
    else:
        results = gradcheck.run_all()
    worst = 0.0
    failed = 0
    for module in sorted(results):
        for op, err in sorted(results[module].items()):
            ok = err < gradcheck.TOLERANCE
            failed += not ok
            worst = max(worst, err)
            print(f"{module:>10}  {op:<32} max rel err {err:10.3e}  "
                  f"[{'ok' if ok else 'FAIL'}]")
    n = sum(len(v) for v in results.values())
    print(f"{n} checks, {failed} failures, worst {worst:.3e} "
          f"(tolerance {gradcheck.TOLERANCE:g})")
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {
        "train": _cmd_train,
        "infer": _cmd_infer,
        "eval": _cmd_eval,
        "ablate": _cmd_ablate,
        "check-grad": _cmd_check_grad,
    }[args.command]
    try:
        return handler(args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"dmsr {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
