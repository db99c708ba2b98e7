"""Run configuration: one TOML file, every key known, validated before any run."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..core import make_schedule
from ..errors import ConfigError


@dataclass
class RunSection:
    task: int = 1
    seed: int = 0
    out: str = "runs/default"


@dataclass
class ScheduleSection:
    freq_high: float = 0.5
    freq_mid: float = 25.0
    freq_low: float = 500.0


@dataclass
class WorldSection:
    friction_coeff: float = 1.0
    contact_stiffness: float = 2.0e4
    grasp_radius: float = 0.05
    door_open_time: float = 2.0
    door_open_fraction: float = 0.8
    joint_nominal_tol: float = 0.1
    sway_amplitude: float = 0.03
    gait_frequency: float = 0.8


@dataclass
class GainsSection:
    kp1: list = field(default_factory=lambda: [1600.0, 1600.0, 100.0, 200.0, 20.0, 20.0, 20.0, 20.0])
    kd1: list = field(default_factory=list)  # empty: critical damping from the inertias
    kp2: float = 1.0
    kd2: float = 0.001


@dataclass
class MpcSection:
    tf: float = 1.0
    n_steps: int = 25
    p_bound: float = 0.6
    v_bound: float = 2.0
    a_bound: float = 10.0


@dataclass
class SacSection:
    alpha: float = 0.2
    gamma: float = 0.99
    lr: float = 3e-4
    batch_size: int = 128
    target_smoothing: float = 0.005
    hidden: list = field(default_factory=lambda: [64, 64])


@dataclass
class LocoSection:
    budget: int = 200_000
    episode_steps: int = 150
    target_radius: float = 3.0
    success_radius: float = 0.15
    warmup_steps: int = 2000
    eval_every: int = 20_000
    eval_episodes: int = 10


@dataclass
class PlannerSection:
    budget: int = 50_000
    gamma: float = 0.95
    lr: float = 1e-3
    batch_size: int = 64
    hidden: list = field(default_factory=lambda: [64, 64])
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.5
    updates_per_step: int = 4
    warmup: int = 200
    varied_fraction: float = 0.5
    episode_ticks: int = 20
    eval_every: int = 500
    eval_episodes: int = 10


@dataclass
class RewardsSection:
    task1: list = field(default_factory=lambda: [1.0, 0.1, 1.0, 2.0, 2.0, 5.0])
    task2: float = 1.0
    task3: list = field(default_factory=lambda: [1.0, 5.0, 10.0])
    w_imitation: float = 0.5
    w_task: float = 0.5
    imitation: list = field(default_factory=lambda: [0.5, 0.4, 0.1])  # joint, pose, contact
    task_terms: list = field(default_factory=lambda: [0.15, 0.25, 0.5, 0.1])  # pose, goal, vel, torque


@dataclass
class EvalSection:
    n_episodes: int = 50
    scenarios: list = field(default_factory=lambda: ["baseline", "push", "friction", "incline", "lesion", "obstacle"])
    jitter: float = 0.05
    seed: int = 1000


@dataclass
class FlatSection:
    budget: int = 300_000
    eval_every: int = 25_000
    eval_episodes: int = 10
    warmup_steps: int = 5000


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    world: WorldSection = field(default_factory=WorldSection)
    gains: GainsSection = field(default_factory=GainsSection)
    mpc: MpcSection = field(default_factory=MpcSection)
    sac: SacSection = field(default_factory=SacSection)
    loco: LocoSection = field(default_factory=LocoSection)
    planner: PlannerSection = field(default_factory=PlannerSection)
    rewards: RewardsSection = field(default_factory=RewardsSection)
    eval: EvalSection = field(default_factory=EvalSection)
    flat: FlatSection = field(default_factory=FlatSection)

    def to_dict(self):
        return dataclasses.asdict(self)

    def validate(self):
        validate(self)
        return self

    def digest(self, sections=None):
        return config_hash(self, sections)


# Sections whose values change the physics, the controllers or the trained policies' meaning.
PHYSICS_SECTIONS = ("schedule", "world", "gains", "mpc")


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a table")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    kwargs = {}
    for name, value in data.items():
        f = known[name]
        default = f.default_factory() if f.default is dataclasses.MISSING else f.default
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}" if where else name)
        else:
            kwargs[name] = _coerce(value, default, f"{where}.{name}")
    return cls(**kwargs)


def _coerce(value, default, where):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list")
        return list(value)
    return value


def from_dict(data):
    cfg = _build(RunConfig, data, "")
    return validate(cfg)


def load_config(path=None, overrides=None):
    """Read a TOML file (or a JSON snapshot) and validate it."""
    data = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        text = path.read_text()
        try:
            data = json.loads(text) if text.lstrip().startswith("{") else tomllib.loads(text)
        except (ValueError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    for dotted, value in (overrides or {}).items():
        section, key = dotted.split(".", 1)
        data.setdefault(section, {})[key] = value
    return from_dict(data)


def validate(cfg):
    r = cfg.run
    if r.task not in (1, 2, 3):
        raise ConfigError(f"run.task must be 1, 2 or 3, got {r.task}")
    s = cfg.schedule
    try:
        make_schedule(s.freq_high, s.freq_mid, s.freq_low)
    except ValueError as exc:
        raise ConfigError(f"schedule: {exc}") from exc
    w = cfg.world
    if w.friction_coeff <= 0:
        raise ConfigError("world.friction_coeff must be positive")
    if not 0 < w.door_open_fraction <= 1:
        raise ConfigError("world.door_open_fraction must lie in (0, 1]")
    for name in ("contact_stiffness", "grasp_radius", "door_open_time", "sway_amplitude", "gait_frequency"):
        if getattr(w, name) <= 0:
            raise ConfigError(f"world.{name} must be positive")
    g = cfg.gains
    if len(g.kp1) != 8 or (g.kd1 and len(g.kd1) != 8):
        raise ConfigError("gains.kp1 and gains.kd1 need one entry per actuated joint (8)")
    if min(g.kp1) <= 0 or (g.kd1 and min(g.kd1) < 0) or g.kp2 < 0 or g.kd2 < 0:
        raise ConfigError("gains must be non-negative, kp1 positive")
    m = cfg.mpc
    if m.tf <= 0 or m.n_steps < 2 or min(m.p_bound, m.v_bound, m.a_bound) <= 0:
        raise ConfigError("mpc: tf > 0, n_steps >= 2 and positive bounds required")
    if not 0 < cfg.sac.gamma < 1 or cfg.sac.alpha < 0 or cfg.sac.lr <= 0:
        raise ConfigError("sac: gamma in (0, 1), alpha >= 0 and lr > 0 required")
    p = cfg.planner
    if not 0 < p.gamma < 1 or not 0 <= p.eps_end <= p.eps_start <= 1 or not 0 < p.eps_fraction <= 1:
        raise ConfigError("planner: gamma in (0, 1) and 0 <= eps_end <= eps_start <= 1 required")
    if not 0 <= p.varied_fraction <= 1:
        raise ConfigError("planner.varied_fraction must lie in [0, 1]")
    for name in ("budget",):
        for sec in (cfg.loco, cfg.planner, cfg.flat):
            if getattr(sec, name) < 0:
                raise ConfigError("budgets must be non-negative")
    rw = cfg.rewards
    if len(rw.task1) != 6 or len(rw.task3) != 3 or len(rw.imitation) != 3 or len(rw.task_terms) != 4:
        raise ConfigError("rewards: wrong number of weights")
    from ..world.perturb import SCENARIOS

    bad = sorted(set(cfg.eval.scenarios) - set(SCENARIOS))
    if bad:
        raise ConfigError(f"eval.scenarios: unknown {bad}")
    return cfg


def canonical_json(data):
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(cfg, sections=None):
    data = cfg.to_dict()
    if sections is not None:
        data = {k: data[k] for k in sections}
    return hashlib.sha256(canonical_json(data).encode()).hexdigest()[:16]


def physics_hash(cfg):
    d = cfg.to_dict()
    data = {k: d[k] for k in PHYSICS_SECTIONS}
    data["task"] = d["run"]["task"]
    return hashlib.sha256(canonical_json(data).encode()).hexdigest()[:16]


def write_snapshot(cfg, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n")
    return path
