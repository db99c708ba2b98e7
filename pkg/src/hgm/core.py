"""Structure of the three-level control hierarchy.

The low-level tick is the only physical clock. Mid and high levels are derived
counters: a level's command is held (zero-order hold) until its next tick, and
every level conditions on the observation left behind by the previous low tick.
Within one tick levels are evaluated high -> mid -> low.
"""

from __future__ import annotations

import hashlib
import json
from collections.abc import Mapping
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import FactorisationViolation, NonIntegerRatio, UnknownChannel

LEVELS = ("high", "loco", "manip", "low")


@dataclass(frozen=True)
class HierarchySchedule:
    freq_high: float
    freq_mid: float
    freq_low: float
    ratio_mid_per_high: int
    ratio_low_per_mid: int

    @property
    def dt(self):
        return 1.0 / self.freq_low

    @property
    def low_per_high(self):
        return self.ratio_mid_per_high * self.ratio_low_per_mid


def _exact_ratio(fast, slow, what):
    r = Fraction(str(fast)) / Fraction(str(slow))
    if r.denominator != 1:
        raise NonIntegerRatio(f"{what}: {fast} / {slow} = {float(r):g} is not an integer")
    return int(r)


def make_schedule(freq_high, freq_mid, freq_low):
    if min(freq_high, freq_mid, freq_low) <= 0:
        raise ValueError("frequencies must be positive")
    if not freq_low >= freq_mid >= freq_high:
        raise ValueError("frequencies must satisfy low >= mid >= high")
    return HierarchySchedule(
        float(freq_high),
        float(freq_mid),
        float(freq_low),
        _exact_ratio(freq_mid, freq_high, "mid/high"),
        _exact_ratio(freq_low, freq_mid, "low/mid"),
    )


# Which command fields each task populates.
TASK_FIELDS = {
    1: ("pelvis_target", "left_hand_target", "right_hand_target"),
    2: ("pelvis_target",),
    3: ("left_hand_target", "right_hand_target", "torso_yaw_target"),
}


def command_width(task, spatial_dim=2):
    """Width of the high-level action vector for ``task``.

    ``spatial_dim=3`` gives the full-scale widths (9, 3 and 7).
    """
    return sum(1 if f == "torso_yaw_target" else spatial_dim for f in TASK_FIELDS[task])


@dataclass
class LevelCommand:
    pelvis_target: np.ndarray | None = None
    left_hand_target: np.ndarray | None = None
    right_hand_target: np.ndarray | None = None
    torso_yaw_target: float | None = None
    issued_at_tick: int = 0

    def populated(self):
        return tuple(name for name in TASK_FIELDS[1] + ("torso_yaw_target",) if getattr(self, name) is not None)

    def check_task(self, task):
        want = set(TASK_FIELDS[task])
        have = set(self.populated())
        if want != have:
            raise ValueError(f"task {task} command must populate {sorted(want)}, got {sorted(have)}")

    def vector(self):
        parts = []
        for name in ("pelvis_target", "left_hand_target", "right_hand_target", "torso_yaw_target"):
            value = getattr(self, name)
            if value is not None:
                parts.append(np.atleast_1d(np.asarray(value, dtype=np.float64)))
        return np.concatenate(parts) if parts else np.zeros(0)


@dataclass
class MidCommand:
    joint_targets: np.ndarray
    issued_at_tick: int = 0

    def check_limits(self, lower, upper, tol=1e-12):
        q = self.joint_targets
        if np.any(q < np.asarray(lower) - tol) or np.any(q > np.asarray(upper) + tol):
            raise ValueError("joint target outside configured limits")


# Channel catalogue. Categories drive the factorisation invariants.
EVENT_CHANNELS = frozenset({
    "passed_table", "joints_nominal", "box_in_hands", "box_on_table", "door_open", "at_goal",
    "ball_past_goal_line", "box_on_conveyor", "button_pushed",
})
OBJECT_CHANNELS = frozenset({
    "box_pos", "ball_pos", "pelvis_rel_table", "box_rel_lh", "box_rel_rh", "door_angle", "obstacle_pos",
})
ACTUATION_CHANNELS = frozenset({"joint_torque", "torque_rate", "motor_current"})


@dataclass(frozen=True)
class FactorisationSpec:
    allow: Mapping = field(default_factory=dict)

    def channels(self, level):
        return tuple(self.allow.get(level, ()))

    def validate(self):
        loco = set(self.channels("loco"))
        bad = loco & (EVENT_CHANNELS | OBJECT_CHANNELS)
        if bad:
            raise FactorisationViolation(f"locomotion allow-list exposes task channels {sorted(bad)}")
        high = set(self.channels("high")) & ACTUATION_CHANNELS
        if high:
            raise FactorisationViolation(f"high-level allow-list exposes actuation channels {sorted(high)}")
        return self


class FilteredObservation(Mapping):
    """Read-only view holding exactly one level's allow-listed channels."""

    def __init__(self, level, items):
        self.level = level
        self._items = dict(items)
        self._order = tuple(self._items)

    def __getitem__(self, name):
        try:
            return self._items[name]
        except KeyError:
            raise FactorisationViolation(f"level {self.level!r} may not read channel {name!r}") from None

    def __iter__(self):
        return iter(self._order)

    def __len__(self):
        return len(self._order)

    def __contains__(self, name):
        return name in self._items

    def vector(self):
        if not self._order:
            return np.zeros(0)
        return np.concatenate([np.atleast_1d(np.asarray(self._items[k], dtype=np.float64)) for k in self._order])

    def digest(self):
        return hashlib.sha1(self.vector().tobytes()).hexdigest()


def route_observation(spec, level, full_obs):
    """Project ``full_obs`` onto the allow-list of ``level`` (declared order)."""
    items = []
    for name in spec.channels(level):
        if name not in full_obs:
            raise UnknownChannel(name)
        items.append((name, full_obs[name]))
    return FilteredObservation(level, items)


class EpisodeLog:
    """Command stream of one run; one record per issued command."""

    def __init__(self, keep_states=False):
        self.records = []
        self.keep_states = keep_states
        self.states = []
        self.events = []

    def command(self, tick, level, vector, obs):
        self.records.append({
            "tick": int(tick),
            "level": level,
            "command": [float(x) for x in np.atleast_1d(vector)],
            "obs_hash": obs.digest() if obs is not None else None,
        })

    def note(self, tick, kind, **info):
        self.events.append({"tick": int(tick), "event": kind, **info})

    def count(self, level):
        return sum(1 for r in self.records if r["level"] == level)

    def lines(self):
        for r in self.records:
            yield json.dumps(r, sort_keys=True)
        for e in self.events:
            yield json.dumps(e, sort_keys=True)

    def to_jsonl(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        text = "".join(line + "\n" for line in self.lines())
        path.write_text(text)
        return path

    def __len__(self):
        return len(self.records)


@dataclass
class RunResult:
    log: EpisodeLog | None
    high_ticks: int
    stopped: str | None = None


class Hierarchy:
    """Nested-loop executor.

    ``planner.act(obs, rng) -> LevelCommand``;
    ``mid.act(loco_obs, manip_obs, command, rng) -> MidCommand``;
    ``low.act(obs, mid_command) -> current vector``.
    The simulator supplies ``tick``, ``observe(high_cmd, mid_cmd)`` and
    ``step(currents)``.
    """

    def __init__(self, schedule, planner, mid, low, sim, spec, log=None, rng=None, stop=None):
        spec.validate()
        self.schedule = schedule
        self.planner = planner
        self.mid = mid
        self.low = low
        self.sim = sim
        self.spec = spec
        self.log = log
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.stop = stop
        self.high_command = None
        self.mid_command = None
        # The compiled loop reproduces ImpedanceController exactly; other low levels run tick by tick.
        self.fast_low = hasattr(sim, "run_held") and type(low).__name__ == "ImpedanceController"

    def high_tick(self, command=None):
        """Advance one high-level period; returns a stop cause or ``None``.

        ``command`` overrides the planner (used by the planner's own trainer,
        which chooses the action outside the loop).
        """
        sim, spec, log = self.sim, self.spec, self.log
        obs = route_observation(spec, "high", sim.observe(self.high_command, self.mid_command))
        if command is None:
            command = self.planner.act(obs, self.rng)
        command.issued_at_tick = sim.tick
        self.high_command = command
        if log is not None:
            log.command(sim.tick, "high", command.vector(), obs)
        for _ in range(self.schedule.ratio_mid_per_high):
            full = sim.observe(command, self.mid_command)
            loco_obs = route_observation(spec, "loco", full)
            manip_obs = route_observation(spec, "manip", full)
            mid_cmd = self.mid.act(loco_obs, manip_obs, command, self.rng)
            mid_cmd.issued_at_tick = sim.tick
            self.mid_command = mid_cmd
            if log is not None:
                log.command(sim.tick, "mid", mid_cmd.joint_targets, loco_obs)
            if log is None and self.fast_low:
                # unlogged runs hand the whole mid period to the compiled loop
                sim.run_held(mid_cmd.joint_targets, self.low.gains, self.schedule.ratio_low_per_mid)
            else:
                self._low_ticks(command, mid_cmd)
            if self.stop is not None:
                cause = self.stop(sim)
                if cause is not None:
                    if log is not None:
                        log.note(sim.tick, "stop", cause=cause)
                    return cause
        return None

    def _low_ticks(self, command, mid_cmd):
        sim, spec, log = self.sim, self.spec, self.log
        for _ in range(self.schedule.ratio_low_per_mid):
            low_obs = route_observation(spec, "low", sim.observe(command, mid_cmd))
            current = self.low.act(low_obs, mid_cmd)
            if log is not None:
                log.command(sim.tick, "low", current, low_obs)
            sim.step(current)
            if log is not None and log.keep_states:
                log.states.append(sim.state_vector())

    def run(self, n_high_ticks):
        for k in range(n_high_ticks):
            cause = self.high_tick()
            if cause is not None:
                return RunResult(self.log, k + 1, cause)
        return RunResult(self.log, n_high_ticks, None)


def run_hierarchy(schedule, planner, mid, low, world, n_high_ticks, seed, spec, log=None, stop=None):
    """Run ``n_high_ticks`` high-level periods of the full stack and return the log."""
    log = log if log is not None else EpisodeLog()
    runner = Hierarchy(schedule, planner, mid, low, world, spec, log=log, rng=np.random.default_rng(seed), stop=stop)
    result = runner.run(n_high_ticks)
    return result.log
