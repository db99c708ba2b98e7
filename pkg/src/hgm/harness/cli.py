"""Command line entry point: ``hgm {train,eval,perturb,compare-flat,export}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..errors import HgmError
from .config import load_config


def _parser():
    p = argparse.ArgumentParser(prog="hgm", description="Train and evaluate the three-level control stack.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, default=None, help="TOML run configuration")
        sp.add_argument("--seed", type=int, default=None, help="override run.seed")
        sp.add_argument("--out", type=Path, default=None, help="run directory (overrides run.out)")
        return sp

    common(sub.add_parser("train", help="staged training: gain checks, locomotion, planner"))
    for name, text in (("eval", "baseline evaluation of trained checkpoints"),
                       ("perturb", "evaluation under every configured perturbation scenario")):
        sp = common(sub.add_parser(name, help=text))
        sp.add_argument("--episodes", type=int, default=None, help="episodes per scenario")
        sp.add_argument("--checkpoints", type=Path, default=None, help="defaults to <out>/checkpoints")
    sp = common(sub.add_parser("compare-flat", help="hierarchy against a parameter-matched flat policy"))
    sp.add_argument("--budget", type=int, default=None, help="environment steps for both architectures")
    sp.add_argument("--seeds", type=int, nargs="+", default=None)
    common(sub.add_parser("export", help="CSV bundle from a run directory's logs"))
    return p


def _config(args):
    overrides = {}
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    if args.out is not None:
        overrides["run.out"] = str(args.out)
    return load_config(args.config, overrides)


def run(argv=None):
    args = _parser().parse_args(argv)
    cfg = _config(args)
    out = Path(cfg.run.out)
    if args.command == "train":
        from .pipeline import pipeline_train

        art = pipeline_train(cfg, out)
        last = art.planner_curve[-1] if art.planner_curve else {}
        return {"run_dir": str(out), "config_hash": art.config_hash, "planner_final": last}
    if args.command in ("eval", "perturb"):
        from .evaluate import evaluate

        names = ["baseline"] if args.command == "eval" else list(cfg.eval.scenarios)
        ckpt = args.checkpoints or out / "checkpoints"
        return evaluate(cfg, ckpt, args.episodes, names, out)
    if args.command == "compare-flat":
        from .compare import compare_flat

        rep = compare_flat(cfg, args.budget, args.seeds, out)
        return {"budget": rep["budget"], "seeds": rep["seeds"]}
    if args.command == "export":
        from .export import export_run

        return {"bundle": str(export_run(out))}
    raise AssertionError(args.command)


def main(argv=None):
    try:
        result = run(argv)
    except HgmError as exc:
        print(f"hgm: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(result, sort_keys=True, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
