"""Hierarchy versus a parameter-matched flat policy at the same environment-step budget."""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

from ..errors import ConfigError
from ..loco import write_curve
from ..planner import evaluate_planner
from ..tensorio import load_tensors
from .config import config_hash
from .flat import FlatEnv, evaluate_flat, hierarchy_param_count, match_flat_config, train_flat
from .pipeline import load_checkpoints, pipeline_train, read_curve
from .stack import planner_env, schedule_of

COMPARE_FIELDS = ("seed", "step", "hier_return", "hier_success", "flat_return", "flat_success")


def hierarchy_budget(cfg):
    """Environment steps (mid ticks) the staged pipeline consumes."""
    return cfg.loco.budget + schedule_of(cfg).ratio_mid_per_high * cfg.planner.budget


def _fit_budget(cfg, budget):
    if budget is None or budget == hierarchy_budget(cfg):
        return cfg
    ratio = schedule_of(cfg).ratio_mid_per_high
    rest = budget - cfg.loco.budget
    if rest < 0 or rest % ratio:
        raise ConfigError(f"budget {budget} cannot be split as {cfg.loco.budget} locomotion steps plus whole "
                          f"planner steps of {ratio}")
    return replace(cfg, planner=replace(cfg.planner, budget=rest // ratio))


def _hier_run(cfg, run_dir):
    """Train the stack, or reuse a finished run made with the identical config."""
    ckpt = run_dir / "checkpoints"
    curve_path = run_dir / "hier_curve.csv"
    try:
        _, meta = load_tensors(ckpt / "planner.hgmt")
        reusable = meta.get("config_hash") == config_hash(cfg) and curve_path.exists()
    except (FileNotFoundError, ValueError):
        reusable = False
    if not reusable:
        pipeline_train(cfg, run_dir)
    loco, q, _ = load_checkpoints(cfg, ckpt)
    return loco, q, read_curve(curve_path)


def compare_flat(cfg, budget=None, seeds=None, out=None, final_episodes=None):
    """Learning curves on a shared step axis and final success of both architectures."""
    cfg = _fit_budget(cfg.validate(), budget)
    if cfg.run.task != 1:
        raise ConfigError("the flat comparison is defined on task 1")
    budget = hierarchy_budget(cfg)
    seeds = [cfg.run.seed] if seeds is None else list(seeds)
    out = Path(out or cfg.run.out)
    n_final = cfg.eval.n_episodes if final_episodes is None else final_episodes
    rows, per_seed = [], []
    for seed in seeds:
        scfg = replace(cfg, run=replace(cfg.run, seed=seed))
        loco, q, hier_curve = _hier_run(scfg, out / f"hier_seed{seed}")
        target = hierarchy_param_count(loco, q)
        fcfg = match_flat_config(target, FlatEnv(scfg).state_dim)
        steps = [r["step"] for r in hier_curve]
        flat = train_flat(scfg, fcfg, budget, seed, steps)
        write_curve(out / f"flat_curve_seed{seed}.csv", flat.curve)
        by_step = {r["step"]: r for r in flat.curve}
        for h in hier_curve:
            f = by_step[h["step"]]
            rows.append({"seed": seed, "step": h["step"], "hier_return": h["eval_return"],
                         "hier_success": h["success_rate"], "flat_return": f["eval_return"],
                         "flat_success": f["success_rate"]})
        env = planner_env(scfg, loco.policy)
        hier_ret, hier_succ = evaluate_planner(env, q, n_final, cfg.eval.seed)
        flat_ret, flat_succ = evaluate_flat(FlatEnv(scfg), flat.nets.policy, flat.sac, n_final, cfg.eval.seed)
        per_seed.append({
            "seed": seed, "hier_params": target, "flat_params": fcfg.param_count, "flat_hidden": list(fcfg.hidden),
            "param_mismatch": fcfg.mismatch, "hier_final_return": hier_ret, "hier_final_success": hier_succ,
            "flat_final_return": flat_ret, "flat_final_success": flat_succ,
        })
    write_curve(out / "compare.csv", rows, COMPARE_FIELDS)
    report = {"budget": budget, "config_hash": config_hash(cfg), "seeds": per_seed, "curve": rows}
    (out / "compare.json").write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    return report


def past_half(rows, budget):
    return [r for r in rows if r["step"] > budget / 2]
