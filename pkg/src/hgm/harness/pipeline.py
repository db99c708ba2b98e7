"""Staged training, lowest level first: gain checks, locomotion, then the planner."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import MissingCheckpoint, NonFiniteLoss, SimulationDiverged, StageFailed
from ..loco import LocomotionEnv, SacNets, train_locomotion, write_curve
from ..lowlevel import overshoot, settling_time, step_response
from ..planner import QPair, evaluate_planner, train_planner
from ..tensorio import load_tensors, save_tensors
from ..world import reset_world
from .config import config_hash, physics_hash, write_snapshot
from .stack import (gains_of, loco_train_config, loco_world_config, planner_env, planner_train_config, sac_config, schedule_of,
                    world_config)

# Step sizes for the gain checks: metres for base x/y, radians elsewhere.
STEP_SIZES = (0.1, 0.1, 0.1, 0.2, 0.2, 0.2, 0.2, 0.2)
SETTLING_BAND = 0.02
MAX_OVERSHOOT = 0.02
STEP_DURATION = 2.0

CURVE_FIELDS = ("step", "eval_return", "success_rate")


@dataclass
class Artifacts:
    run_dir: Path
    config_hash: str
    physics_hash: str
    stage1: list = field(default_factory=list)
    loco_curve: list = field(default_factory=list)
    planner_curve: list = field(default_factory=list)
    hier_curve: list = field(default_factory=list)
    loco_nets: SacNets | None = None
    q_nets: QPair | None = None

    @property
    def checkpoints(self):
        return self.run_dir / "checkpoints"


class JsonlWriter:
    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("")

    def write(self, record):
        with self.path.open("a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------- stage 1


def check_gains(cfg):
    """Step response of every joint under the configured gains, in the task world."""
    wc_world = reset_world(cfg.run.task, "nominal", cfg.run.seed, world_config(cfg))
    robot = wc_world.cfg.robot
    gains = gains_of(cfg, robot)
    out = []
    for j, size in enumerate(STEP_SIZES):
        q0 = float(wc_world.q[j])
        delta = size if q0 + size <= robot.upper[j] - 0.05 else -size
        try:
            t, trace, target = step_response(wc_world, j, delta, STEP_DURATION, gains)
            ts = settling_time(t, trace, target, q0, SETTLING_BAND)
            os_ = overshoot(trace, target, q0)
        except SimulationDiverged:
            ts, os_ = math.inf, math.inf
        ok = math.isfinite(ts) and os_ <= MAX_OVERSHOOT
        out.append({"joint": j, "delta": delta, "settling_time": ts, "overshoot": os_, "ok": ok})
    return out


# ---------------------------------------------------------------- checkpoints


def _meta(cfg, kind, nets_meta):
    return {"kind": kind, "config_hash": config_hash(cfg), "physics_hash": physics_hash(cfg), "seed": cfg.run.seed,
            "task": cfg.run.task, "nets": nets_meta}


def save_loco(path, cfg, nets):
    return save_tensors(path, nets.to_tensors(), _meta(cfg, "loco", nets.meta()))


def save_planner(path, cfg, q):
    tensors = {**q.q1.to_tensors("q1."), **q.q2.to_tensors("q2.")}
    return save_tensors(path, tensors, _meta(cfg, "planner", {"q1": q.q1.meta(), "q2": q.q2.meta()}))


def load_checkpoints(cfg, ckpt_dir):
    """(loco nets, Q pair, metas); refuses files missing or trained under other physics."""
    from ..errors import ConfigError
    from ..nn import MlpNet

    ckpt_dir = Path(ckpt_dir)
    paths = {k: ckpt_dir / f"{k}.hgmt" for k in ("loco", "planner")}
    for k, p in paths.items():
        if not p.exists():
            raise MissingCheckpoint(f"{k} checkpoint not found at {p}")
    lt, lm = load_tensors(paths["loco"])
    pt, pm = load_tensors(paths["planner"])
    want = physics_hash(cfg)
    for name, m in (("loco", lm), ("planner", pm)):
        if m.get("physics_hash") != want:
            raise ConfigError(f"{name} checkpoint was trained with physics hash {m.get('physics_hash')}, "
                              f"config has {want}")
    loco = SacNets.from_tensors(lt, lm["nets"], sac_config(cfg))
    q = QPair(MlpNet.from_tensors(pt, pm["nets"]["q1"], "q1."), MlpNet.from_tensors(pt, pm["nets"]["q2"], "q2."))
    q.reset_optimisers(cfg.planner.lr)
    return loco, q, {"loco": lm, "planner": pm}


# ---------------------------------------------------------------- pipeline


def hierarchical_env_steps(cfg, planner_steps):
    """Environment steps (mid ticks) consumed once the planner has taken ``planner_steps``."""
    return cfg.loco.budget + schedule_of(cfg).ratio_mid_per_high * planner_steps


def pipeline_train(cfg, out=None, eval_seed=777):
    """Train the stack from the bottom up and write every artifact under the run directory."""
    cfg.validate()
    run = Path(out or cfg.run.out)
    ckpt = run / "checkpoints"
    ckpt.mkdir(parents=True, exist_ok=True)
    write_snapshot(cfg, run / "config.snapshot")
    chash, phash = config_hash(cfg), physics_hash(cfg)
    log = JsonlWriter(run / "train.jsonl")
    art = Artifacts(run, chash, phash)

    def note(stage, event, **info):
        log.write({"stage": stage, "event": event, "config_hash": chash, **info})

    # stage 1: low-level tracking
    art.stage1 = check_gains(cfg)
    for row in art.stage1:
        note(1, "step_response", **{k: (v if not isinstance(v, float) or math.isfinite(v) else None)
                                    for k, v in row.items()})
    bad = [r["joint"] for r in art.stage1 if not r["ok"]]
    if bad:
        note(1, "failed", joints=bad)
        raise StageFailed(1, f"step response out of tolerance on joints {bad}")
    note(1, "passed")

    # stage 2: locomotion (manipulation is solver based and needs no training)
    seed = cfg.run.seed
    ltc = loco_train_config(cfg)
    wc = world_config(cfg)
    loco_env = LocomotionEnv(ltc, world_cfg=loco_world_config(cfg), gains=gains_of(cfg, wc.robot))
    hier_env = planner_env(cfg, None)
    pcfg = planner_train_config(cfg)
    q0 = QPair.create(hier_env.state_dim, hier_env.n_actions, np.random.default_rng(seed), pcfg.hidden, pcfg.lr)

    def on_loco_eval(step, nets):
        # task-level score of the stack so far: current locomotion, untrained planner
        hier_env.mid.loco.net = nets.policy
        ret, succ = evaluate_planner(hier_env, q0, cfg.planner.eval_episodes, eval_seed)
        art.hier_curve.append({"step": step, "eval_return": ret, "success_rate": succ})

    try:
        res = train_locomotion(ltc, cfg.loco.budget, seed, run / "loco_curve.csv", env=loco_env, on_eval=on_loco_eval)
    except (NonFiniteLoss, SimulationDiverged) as exc:
        note(2, "failed", error=str(exc))
        raise StageFailed(2, str(exc)) from exc
    art.loco_curve, art.loco_nets = res.curve, res.nets
    save_loco(ckpt / "loco.hgmt", cfg, res.nets)
    note(2, "passed", curve=res.curve)

    # stage 3: planner against the frozen lower levels
    env = planner_env(cfg, res.nets.policy)
    ev = planner_env(cfg, res.nets.policy)
    try:
        pres = train_planner(env, pcfg, cfg.planner.budget, seed, run / "planner_curve.csv", eval_env=ev,
                             eval_seed=eval_seed)
    except (NonFiniteLoss, SimulationDiverged) as exc:
        note(3, "failed", error=str(exc))
        raise StageFailed(3, str(exc)) from exc
    art.planner_curve, art.q_nets = pres.curve, pres.q
    save_planner(ckpt / "planner.hgmt", cfg, pres.q)
    for row in pres.curve:
        art.hier_curve.append({"step": hierarchical_env_steps(cfg, row["step"]), "eval_return": row["eval_return"],
                               "success_rate": row["success_rate"]})
    write_curve(run / "hier_curve.csv", art.hier_curve, CURVE_FIELDS)
    note(3, "passed", curve=pres.curve)
    write_manifest(run, chash)
    return art


def write_manifest(run, chash):
    """Config hash and content digest of every artifact in the run directory."""
    run = Path(run)
    files = sorted(p for p in run.rglob("*") if p.is_file() and p.name != "manifest.json")
    entries = {str(p.relative_to(run)): file_digest(p) for p in files}
    path = run / "manifest.json"
    path.write_text(json.dumps({"config_hash": chash, "files": entries}, sort_keys=True, indent=2) + "\n")
    return path


def read_curve(path):
    path = Path(path)
    if not path.exists():
        return []
    with path.open() as fh:
        return [{k: (int(v) if k == "step" else float(v)) for k, v in row.items()} for row in csv.DictReader(fh)]
