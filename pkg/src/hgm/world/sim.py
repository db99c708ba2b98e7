"""Simulator facade used by the hierarchy: actuation, clocks and observations."""

from __future__ import annotations

import csv
import math
from collections.abc import Mapping
from pathlib import Path

import numpy as np

from . import kernel
from .config import N_JOINTS
from .events import EventFlags, detect_events
from .kinematics import hand_positions, hands_in_torso, rot
from .perturb import push_force
from .physics import step_physics


def contact_loads(yaw, amplitude):
    """Virtual foot loads (left, right) in [0, 1] from the base sway angle."""
    left = min(1.0, max(0.0, 0.5 + 0.5 * yaw / amplitude))
    return np.array([left, 1.0 - left])


class Observation(Mapping):
    """Lazily evaluated, labelled channels of one instant."""

    def __init__(self, producers):
        self._producers = producers
        self._cache = {}

    def __getitem__(self, name):
        if name not in self._cache:
            self._cache[name] = self._producers[name]()
        return self._cache[name]

    def __iter__(self):
        return iter(self._producers)

    def __len__(self):
        return len(self._producers)

    def __contains__(self, name):
        return name in self._producers


class Simulator:
    """One world instance plus the motor model.

    The low level sends motor currents. Realised torque slews at
    ``motor_constant * I`` and saturates at the torque limit; a lesioned
    actuator produces nothing.
    """

    def __init__(self, world, record=False):
        self.world = world
        self.record = record
        self.rows = []
        self._flags = None
        self._flags_tick = -1

    @property
    def tick(self):
        return self.world.tick

    @property
    def cfg(self):
        return self.world.cfg

    def flags(self):
        if self._flags_tick != self.world.tick:
            self._flags = detect_events(self.world)
            self._flags_tick = self.world.tick
        return self._flags

    def actuate(self, current):
        w = self.world
        st = kernel.Static.of(w.cfg)
        cur = np.asarray(current, dtype=np.float64)
        kernel.actuate(cur, w.tau, w.tau_rate, w.current, w.actuator_mask, st.torque_limit, st.current_limit, st.p)
        return w.tau

    def step(self, current):
        tau = self.actuate(current)
        ext = push_force(self.world)
        step_physics(self.world, tau, ext, inplace=True)
        if self.record:
            self.rows.append(self.dump_row())

    def run_held(self, target, gains, n_ticks):
        """``n_ticks`` under the standard impedance controller, one compiled call."""
        if self.record:
            for _ in range(n_ticks):
                self.step(kernel.control(np.asarray(target, dtype=np.float64), self.world.q, self.world.qd,
                                         self.world.tau, self.world.tau_rate, gains.kp1, gains.kd1, gains.kp2,
                                         gains.kd2, kernel.Static.of(self.cfg).torque_limit,
                                         kernel.Static.of(self.cfg).current_limit))
            return n_ticks
        return kernel.run_held(self.world, target, gains, n_ticks)

    def state_vector(self):
        return self.world.vector()

    def observe(self, high_cmd=None, mid_cmd=None):
        w = self.world
        cfg = w.cfg
        lay = w.layout

        def pelvis_target():
            tgt = w.home if high_cmd is None or high_cmd.pelvis_target is None else high_cmd.pelvis_target
            return rot(-w.q[2], np.asarray(tgt) - w.q[0:2])

        def hands_world():
            lh, rh = hand_positions(w)
            return np.concatenate([lh, rh])

        def box_rel(arm):
            if w.box_pos is None:
                return np.zeros(2)
            return w.box_pos - hand_positions(w)[arm]

        def table_rel():
            if lay.delivery is None:
                return np.zeros(2)
            return lay.delivery.center - w.q[0:2]

        p = {
            # proprioceptive / locomotion
            "pelvis_target": pelvis_target,
            "base_yaw": lambda: np.array([w.q[2]]),
            "base_lin_vel": lambda: rot(-w.q[2], w.qd[0:2]),
            "base_ang_vel": lambda: np.array([w.qd[2]]),
            "contact_load": lambda: contact_loads(w.q[2], cfg.sway_amplitude),
            "leg_joint_pos": lambda: w.q[0:3].copy(),
            "gait_phase": lambda: w.gait_phase,
            # manipulation
            "arm_joint_pos": lambda: w.q[4:8].copy(),
            "arm_joint_vel": lambda: w.qd[4:8].copy(),
            "hand_pos_torso": lambda: np.concatenate(hands_in_torso(w)),
            "torso_yaw": lambda: np.array([w.q[3]]),
            # low level
            "joint_pos": lambda: w.q.copy(),
            "joint_vel": lambda: w.qd.copy(),
            "joint_torque": lambda: w.tau.copy(),
            "torque_rate": lambda: w.tau_rate.copy(),
            "motor_current": lambda: w.current.copy(),
            # task / high level
            "pelvis_pos": lambda: w.q[0:2].copy(),
            "hand_pos": hands_world,
            "box_pos": lambda: np.zeros(2) if w.box_pos is None else w.box_pos.copy(),
            "ball_pos": lambda: np.zeros(2) if w.ball_pos is None else w.ball_pos.copy(),
            "pelvis_rel_table": table_rel,
            "box_rel_lh": lambda: box_rel(0),
            "box_rel_rh": lambda: box_rel(1),
            "door_angle": lambda: np.array([w.door_angle]),
            "obstacle_pos": lambda: w.obstacle_pos.ravel().copy(),
        }
        for name in EventFlags.__dataclass_fields__:
            p[name] = (lambda n=name: np.array([float(getattr(self.flags(), n))]))
        return Observation(p)

    def dump_row(self):
        w = self.world
        f = self.flags().as_dict()
        row = {"tick": w.tick, "x": w.q[0], "y": w.q[1], "yaw": w.q[2]}
        for j in range(N_JOINTS):
            row[f"q{j}"] = w.q[j]
            row[f"tau{j}"] = w.tau[j]
        row.update({k: int(v) for k, v in f.items()})
        return row

    def dump_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        if not self.rows:
            header = list(self.dump_row().keys())
            rows = []
        else:
            header = list(self.rows[0].keys())
            rows = self.rows
        with path.open("w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=header)
            wr.writeheader()
            for r in rows:
                wr.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})
        return path
