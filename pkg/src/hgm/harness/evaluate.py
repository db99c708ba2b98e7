"""Evaluation of trained checkpoints under the perturbation scenarios.

Every episode becomes one JSON line; reports are rebuilt from those lines so
nothing in a report depends on state outside the log.
"""

from __future__ import annotations

import json
from collections import Counter
from pathlib import Path

from ..core import EpisodeLog
from ..planner import run_episode
from ..world import scenario
from .config import config_hash
from .pipeline import JsonlWriter, load_checkpoints
from .stack import planner_env


def episode_seed(cfg, episode):
    return cfg.eval.seed + episode


def evaluate(cfg, checkpoints, n_episodes=None, perturbations=None, out=None, trace=True):
    """Run the greedy stack; return the report and write ``eval.jsonl`` (plus traces) under ``out``.

    ``trace`` also stores the pelvis path of episode 0 in every scenario and the
    full command stream of the baseline's episode 0.
    """
    cfg.validate()
    n = cfg.eval.n_episodes if n_episodes is None else int(n_episodes)
    names = list(cfg.eval.scenarios if perturbations is None else perturbations)
    loco, q, _ = load_checkpoints(cfg, checkpoints)
    run = Path(out or cfg.run.out)
    chash = config_hash(cfg)
    log = JsonlWriter(run / "eval.jsonl")
    traj = JsonlWriter(run / "trajectories.jsonl") if trace else None
    records = []
    for name in names:
        pert = None if name == "baseline" else scenario(name, cfg.run.task)
        env = planner_env(cfg, loco.policy, perturbation=pert, jitter=cfg.eval.jitter)
        for ep in range(n):
            seed = episode_seed(cfg, ep)
            ep_log = None
            if trace and ep == 0:
                env.on_mid = _recorder(traj, name)
                if name == "baseline":
                    ep_log = EpisodeLog()
            else:
                env.on_mid = None
            ret, ok, cause, actions = run_episode(env, q, seed, log=ep_log)
            rec = {
                "scenario": name, "episode": ep, "seed": seed, "return": ret, "success": bool(ok), "cause": cause,
                "actions": [env.catalog[a][0] for a in actions], "ticks": env.ticks,
                "friction_coeff": float(env.sim.world.friction_coeff), "config_hash": chash,
            }
            log.write(rec)
            records.append(rec)
            if ep_log is not None:
                ep_log.to_jsonl(run / "timescale.jsonl")
        env.on_mid = None
    report = build_report(records, names if n > 0 else [])
    report["config_hash"] = chash
    (run / "eval_report.json").write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    return report


def _recorder(writer, name):
    def on_mid(sim):
        w = sim.world
        writer.write({"scenario": name, "tick": int(w.tick), "x": float(w.q[0]), "y": float(w.q[1]),
                      "yaw": float(w.q[2])})

    return on_mid


def build_report(records, names=None):
    """Per-scenario success rate, mean return and termination causes."""
    names = list(dict.fromkeys(names if names is not None else [r["scenario"] for r in records]))
    out = {"scenarios": {}}
    for name in names:
        rs = [r for r in records if r["scenario"] == name]
        if not rs:
            continue
        out["scenarios"][name] = {
            "n": len(rs),
            "success_rate": sum(r["success"] for r in rs) / len(rs),
            "mean_return": sum(r["return"] for r in rs) / len(rs),
            "causes": dict(sorted(Counter(str(r["cause"]) for r in rs).items())),
        }
    return out


def read_jsonl(path):
    path = Path(path)
    with path.open() as fh:
        return [json.loads(line) for line in fh if line.strip()]


def report_from_log(path):
    """Rebuild the evaluation report from ``eval.jsonl`` alone."""
    return build_report(read_jsonl(path))
