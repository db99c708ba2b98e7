"""Joint impedance control and the inner motor-current loop (500 Hz)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch


@dataclass(frozen=True)
class ImpedanceGains:
    kp1: np.ndarray
    kd1: np.ndarray
    kp2: np.ndarray
    kd2: np.ndarray

    def __post_init__(self):
        n = None
        for name in ("kp1", "kd1", "kp2", "kd2"):
            v = np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64))
            object.__setattr__(self, name, v)
            if n is None:
                n = v.shape
            elif v.shape != n:
                raise DimensionMismatch(f"gain {name} has shape {v.shape}, expected {n}")
            if np.any(v < 0) or not np.all(np.isfinite(v)):
                raise ValueError(f"gain {name} must be finite and non-negative")

    @property
    def n(self):
        return len(self.kp1)


def default_gains(robot):
    """Per-joint gains, near critical damping for the surrogate inertias."""
    m = robot.base_mass
    kp1 = np.array([1600.0, 1600.0, 100.0, 200.0, 20.0, 20.0, 20.0, 20.0])
    inertia = np.array([m, m, robot.base_inertia, robot.torso_inertia] + [robot.arm_inertia] * 4)
    kd1 = 2.0 * np.sqrt(kp1 * inertia)
    return ImpedanceGains(kp1=kp1, kd1=kd1, kp2=np.full(8, 1.0), kd2=np.full(8, 0.001))


@dataclass
class JointFeedback:
    q: np.ndarray
    q_dot: np.ndarray
    tau_measured: np.ndarray
    tau_dot: np.ndarray

    def __post_init__(self):
        for name in ("q", "q_dot", "tau_measured", "tau_dot"):
            setattr(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64)))


def _check(n, *arrays):
    for a in arrays:
        if np.shape(a) != (n,):
            raise DimensionMismatch(f"expected length {n}, got shape {np.shape(a)}")


def impedance_torque(q_d, fb, g, limit=None):
    """tau_d = Kp1 (q_d - q) - Kd1 q_dot, clamped to ``limit`` when given."""
    q_d = np.atleast_1d(np.asarray(q_d, dtype=np.float64))
    _check(g.n, q_d, fb.q, fb.q_dot)
    tau = g.kp1 * (q_d - fb.q) - g.kd1 * fb.q_dot
    if limit is not None:
        lim = np.broadcast_to(np.asarray(limit, dtype=np.float64), tau.shape)
        tau = np.clip(tau, -lim, lim)
    return tau


def current_command(tau_d, fb, g, limit=None):
    """I = Kp2 (tau_d - tau) - Kd2 tau_dot, clamped to ``limit`` when given."""
    tau_d = np.atleast_1d(np.asarray(tau_d, dtype=np.float64))
    _check(g.n, tau_d, fb.tau_measured, fb.tau_dot)
    i = g.kp2 * (tau_d - fb.tau_measured) - g.kd2 * fb.tau_dot
    if limit is not None:
        lim = np.broadcast_to(np.asarray(limit, dtype=np.float64), i.shape)
        i = np.clip(i, -lim, lim)
    return i


class ImpedanceController:
    """Low-level policy: joint targets in, motor currents out."""

    def __init__(self, gains, robot):
        self.gains = gains
        self.robot = robot
        self.torque_limit = np.asarray(robot.torque_limit)
        self.current_limit = np.asarray(robot.current_limit)

    def feedback(self, obs):
        return JointFeedback(obs["joint_pos"], obs["joint_vel"], obs["joint_torque"], obs["torque_rate"])

    def act(self, obs, mid_cmd):
        fb = self.feedback(obs)
        tau_d = impedance_torque(mid_cmd.joint_targets, fb, self.gains, self.torque_limit)
        return current_command(tau_d, fb, self.gains, self.current_limit)


def joint_energy(q, qd, q_d, kp, inertia):
    return 0.5 * kp * (q_d - q) ** 2 + 0.5 * inertia * qd**2


def simulate_joint(q_d, q0, qd0, kp, kd, inertia, dt, n_steps, iters=50):
    """Single impedance-tracked joint (double integrator), implicit midpoint rule.

    The torque comes from ``impedance_torque`` at the midpoint state, solved by
    fixed-point iteration. The midpoint rule preserves the spring energy
    exactly, so the stored energy can only fall through damping.
    Returns arrays of q and q_dot, both of length ``n_steps + 1``.
    """
    g = ImpedanceGains(kp1=[kp], kd1=[kd], kp2=[0.0], kd2=[0.0])
    qs = np.empty(n_steps + 1)
    vs = np.empty(n_steps + 1)
    q, v = float(q0), float(qd0)
    qs[0], vs[0] = q, v
    for k in range(n_steps):
        q1, v1 = q, v
        for _ in range(iters):
            qm, vm = 0.5 * (q + q1), 0.5 * (v + v1)
            fb = JointFeedback([qm], [vm], [0.0], [0.0])
            acc = float(impedance_torque([q_d], fb, g)[0]) / inertia
            nq, nv = q + dt * vm, v + dt * acc
            done = abs(nq - q1) < 1e-15 and abs(nv - v1) < 1e-15
            q1, v1 = nq, nv
            if done:
                break
        q, v = q1, v1
        qs[k + 1], vs[k + 1] = q, v
    return qs, vs


def step_response(world, joint, delta, duration=2.0, gains=None):
    """Track a step of ``delta`` on one joint in the full simulator.

    Every other joint holds its initial position. Returns (times, q trace,
    target).
    """
    from .core import MidCommand
    from .world.sim import Simulator

    sim = Simulator(world.copy())
    ctrl = ImpedanceController(gains or default_gains(world.cfg.robot), world.cfg.robot)
    target = sim.world.q.copy()
    target[joint] += delta
    cmd = MidCommand(target)
    n = int(round(duration / world.cfg.dt))
    trace = np.empty(n + 1)
    trace[0] = sim.world.q[joint]
    for k in range(n):
        sim.step(ctrl.act(sim.observe(), cmd))
        trace[k + 1] = sim.world.q[joint]
    return world.cfg.dt * np.arange(n + 1), trace, float(target[joint])


def settling_time(times, trace, target, start, band=0.02):
    """First time after which the trace stays within ``band`` of the step size."""
    tol = band * abs(target - start)
    outside = np.nonzero(np.abs(trace - target) > tol)[0]
    if len(outside) == 0:
        return 0.0
    last = outside[-1]
    return math.inf if last == len(trace) - 1 else float(times[last + 1])


def overshoot(trace, target, start):
    step = target - start
    if step == 0:
        return 0.0
    return max(0.0, float(np.max((trace - target) * np.sign(step))) / abs(step))
