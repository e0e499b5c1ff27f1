"""Command-line entry point: ``sapda {run,ablate,sweep-beta,sweep-classes,check}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import checks
from .config import ENV_PREFIX, VALID_KEYS, ConfigError, load
from .experiments import run_experiment
from .trainer import TrainingAborted

KIND_FOR = {
    "run": "single",
    "ablate": "ablation",
    "sweep-beta": "beta-sweep",
    "sweep-classes": "class-sweep",
}


def _common(p):
    p.add_argument("--config", help="flat key = value manifest file")
    p.add_argument("--seed", type=int, help="run a single seed")
    p.add_argument("--seeds", help="comma-separated seed list")
    p.add_argument("--out", help="parent directory for the experiment directory")
    p.add_argument("--iters", type=int, help="total training iterations")
    p.add_argument("--interval", type=int, help="iterations between weight updates")
    p.add_argument("--beta", type=float, help="cluster loss weight")
    p.add_argument("--mode", help="training mode")
    p.add_argument("--jobs", type=int, help="parallel worker processes")
    p.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    p.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any manifest key (repeatable)",
    )
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sapda",
        description="Self-adaptive partial domain adaptation on synthetic benchmarks.",
        epilog=f"Manifest keys: {', '.join(VALID_KEYS)}. "
        f"Environment overrides use {ENV_PREFIX}<KEY>, e.g. {ENV_PREFIX}ITERATIONS=500.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("run", "train one mode over the seed list"),
        ("ablate", "train every ablation mode"),
        ("sweep-beta", "sweep the cluster loss weight"),
        ("sweep-classes", "sweep the number of target classes"),
    ):
        _common(sub.add_parser(name, help=helptext))
    chk = sub.add_parser("check", help="run the invariant suite")
    chk.add_argument("--seed", type=int, default=0)
    return parser


def overrides_from(args):
    out = {"kind": KIND_FOR[args.command]}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    flag_map = {
        "seeds": args.seeds,
        "seeds_single": args.seed,
        "out": args.out,
        "iterations": args.iters,
        "interval": args.interval,
        "beta": args.beta,
        "mode": args.mode,
        "jobs": args.jobs,
    }
    for k, v in flag_map.items():
        if v is None:
            continue
        out["seeds" if k == "seeds_single" else k] = v
    if args.no_figures:
        out["figures"] = "false"
    return out


def run_checks(seed):
    results = checks.run_all(seed)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}  {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "check":
        return run_checks(args.seed)
    try:
        manifest = load(args.config, overrides_from(args))
        out = run_experiment(manifest)
    except ConfigError as exc:
        print(f"sapda: configuration error: {exc}", file=sys.stderr)
        return 2
    except PermissionError as exc:
        print(f"sapda: {exc}", file=sys.stderr)
        return 2
    except TrainingAborted as exc:
        print(f"sapda: training aborted: {exc}", file=sys.stderr)
        return 1
    summary = json.loads((out / "summary.json").read_text())
    print(f"wrote {out}")
    for c in summary["conditions"]:
        print(
            f"{c['condition']:<28} mean={c['mean_accuracy']:.4f} "
            f"std={c['std_accuracy']:.4f} k*={c['final_k_star']}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
