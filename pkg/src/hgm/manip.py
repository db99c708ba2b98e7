"""Minimum-jerk MPC for the hands, plus two-link inverse kinematics.

Each Cartesian axis is a triple integrator driven by piecewise-constant jerk.
The discretised problem is a strictly convex QP with Hessian ``dt * I``,
handed to quadprog's dual active-set solver.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
import quadprog

from .errors import Infeasible, SolverFailure


MONOTONE_SLACK = 1e-12  # round-off allowance on the monotone rows


@dataclass(frozen=True)
class MinJerkProblem:
    p0: float
    pf: float
    v0: float = 0.0
    a0: float = 0.0
    vf: float = 0.0
    af: float = 0.0
    tf: float = 1.0
    p_bounds: tuple = (-math.inf, math.inf)
    v_bounds: tuple = (-math.inf, math.inf)
    a_bounds: tuple = (-math.inf, math.inf)
    n_steps: int = 25
    monotone: int = 0  # +1 / -1 forbids knot positions from stepping down / up

    def __post_init__(self):
        if not self.tf > 0:
            raise ValueError("tf must be positive")
        if self.n_steps < 2:
            raise ValueError("n_steps must be at least 2")

    @property
    def dt(self):
        return self.tf / self.n_steps


@dataclass
class JerkTrajectory:
    jerk_inputs: np.ndarray
    positions: np.ndarray  # n_steps + 1 samples, including the initial state
    velocities: np.ndarray
    accelerations: np.ndarray
    objective_value: float
    iterations: int = 0
    dt: float = 0.0

    @property
    def times(self):
        return self.dt * np.arange(len(self.positions))


def transition(dt):
    """Exact constant-jerk update ``x' = A x + B u`` for x = (p, v, a)."""
    A = np.array([[1.0, dt, dt * dt / 2], [0.0, 1.0, dt], [0.0, 0.0, 1.0]])
    B = np.array([dt**3 / 6, dt * dt / 2, dt])
    return A, B


def rollout(x0, u, dt):
    A, B = transition(dt)
    xs = np.empty((len(u) + 1, 3))
    xs[0] = x0
    for k, uk in enumerate(u):
        xs[k + 1] = A @ xs[k] + B * uk
    return xs


def _affine_maps(x0, n, dt):
    """States as ``x_k = free[k] + G[k] @ u`` for k = 0..n."""
    phi, G = _plan_maps(n, dt)
    return phi @ np.asarray(x0, dtype=np.float64), G


@functools.lru_cache(maxsize=64)
def _plan_maps(n, dt):
    A, B = transition(dt)
    phi = np.empty((n + 1, 3, 3))
    G = np.zeros((n + 1, 3, n))
    phi[0] = np.eye(3)
    for k in range(n):
        phi[k + 1] = A @ phi[k]
        G[k + 1] = A @ G[k]
        G[k + 1][:, k] = B
    return phi, G


@functools.lru_cache(maxsize=64)
def _bound_rows(n, dt, lo, hi):
    """Inequality rows ``C u >= d0 + D x0`` for the box bounds at steps 1..n-1."""
    phi, G = _plan_maps(n, dt)
    rows, base, dep = [], [], []
    for k in range(1, n):
        for i in range(3):
            if math.isfinite(lo[i]):
                rows.append(G[k][i])
                base.append(lo[i])
                dep.append(-phi[k][i])
            if math.isfinite(hi[i]):
                rows.append(-G[k][i])
                base.append(-hi[i])
                dep.append(phi[k][i])
    if not rows:
        return np.zeros((0, n)), np.zeros(0), np.zeros((0, 3))
    return np.array(rows), np.array(base), np.array(dep)


def _inside(x, lo, hi, tol=1e-9):
    return lo - tol <= x <= hi + tol


def solve_qp(E, f, C, d, max_iter=500):
    """Minimise ``0.5 |u|^2`` subject to ``E u = f`` and ``C u >= d``.

    Returns (u, iterations) from quadprog's dual active-set method.
    """
    n = E.shape[1]
    A = np.vstack([E, C]).T
    b = np.concatenate([f, d])
    try:
        u, _, _, iters, _, _ = quadprog.solve_qp(np.eye(n), np.zeros(n), A, b, E.shape[0])
    except ValueError as exc:
        if "inconsistent" in str(exc):
            raise Infeasible("constraint set is empty") from None
        raise SolverFailure(str(exc)) from None
    if iters[0] > max_iter:
        raise SolverFailure(f"active-set solver took {iters[0]} iterations (limit {max_iter})")
    return u, int(iters[0])


def solve_min_jerk(prob, max_iter=500):
    """Discretised optimum of ``0.5 * int u^2`` under the box constraints."""
    lo = (prob.p_bounds[0], prob.v_bounds[0], prob.a_bounds[0])
    hi = (prob.p_bounds[1], prob.v_bounds[1], prob.a_bounds[1])
    x0 = np.array([prob.p0, prob.v0, prob.a0], dtype=np.float64)
    xf = np.array([prob.pf, prob.vf, prob.af], dtype=np.float64)
    for name, x in (("initial", x0), ("terminal", xf)):
        for i in range(3):
            if not _inside(x[i], lo[i], hi[i]):
                raise Infeasible(f"{name} state {x.tolist()} violates bounds")
    n, dt = prob.n_steps, prob.dt
    free, G = _affine_maps(x0, n, dt)
    E = G[n]
    f = xf - free[n]
    C, d0, D = _bound_rows(n, dt, tuple(lo), tuple(hi))
    d = d0 + D @ x0
    if prob.monotone:
        s = float(np.sign(prob.monotone))
        # steps into knots 1..n-1; the last step is fixed by the terminal state
        C = np.vstack([C, s * (G[1:n, 0] - G[:n - 1, 0])])
        d = np.concatenate([d, -s * (free[1:n, 0] - free[:n - 1, 0]) - MONOTONE_SLACK])
    u, iters = solve_qp(E, f, C, d, max_iter=max_iter)
    xs = free + G @ u
    return JerkTrajectory(
        jerk_inputs=u,
        positions=xs[:, 0],
        velocities=xs[:, 1],
        accelerations=xs[:, 2],
        objective_value=0.5 * float(u @ u) * dt,
        iterations=iters,
        dt=dt,
    )


@dataclass(frozen=True)
class MpcConfig:
    tf: float = 1.0
    n_steps: int = 25
    p_bounds: tuple = (-0.6, 0.6)
    v_bounds: tuple = (-2.0, 2.0)
    a_bounds: tuple = (-10.0, 10.0)
    max_retries: int = 3


SETTLE_TOL = (1e-9, 1e-6, 1e-4)  # position, velocity, acceleration
FENCE_SLACK = 1e-10  # gives the fenced set an interior once the plan sits on the target


def mpc_step(current, target, cfg=MpcConfig()):
    """One receding-horizon step on one axis.

    ``current`` is (p, v, a). The target is projected into the position
    bounds and the start state clipped into the box before solving; only the
    first jerk input is applied. Returns the next (p, v, a).

    Planned positions may neither pass the target nor step away from it,
    since a fixed receding horizon otherwise overshoots by a few percent. The
    shifted previous plan always satisfies this, so from rest it stays
    feasible. Otherwise (moving the wrong way, or too fast) only the far side
    is fenced, then the plain box is used.
    """
    lo_p, hi_p = cfg.p_bounds
    pf = float(np.clip(target, lo_p, hi_p))
    p, v, a = (float(x) for x in current)
    p = float(np.clip(p, lo_p, hi_p))
    v = float(np.clip(v, *cfg.v_bounds))
    a = float(np.clip(a, *cfg.a_bounds))
    if abs(p - pf) <= SETTLE_TOL[0] and abs(v) <= SETTLE_TOL[1] and abs(a) <= SETTLE_TOL[2]:
        # at rest on the target up to round-off, where the fenced problem can turn infeasible
        return np.array([pf, 0.0, 0.0])
    up = pf >= p
    fenced = (lo_p, min(pf + FENCE_SLACK, hi_p)) if up else (max(pf - FENCE_SLACK, lo_p), hi_p)
    attempts = [(fenced, 1 if up else -1, 1), (fenced, 0, 1)]
    # only the plain box benefits from a longer horizon; it is lengthened at a fixed step
    attempts += [(cfg.p_bounds, 0, 2**k) for k in range(cfg.max_retries + 1)]
    traj = None
    for p_bounds, mono, scale in attempts:
        prob = MinJerkProblem(p0=p, pf=pf, v0=v, a0=a, tf=cfg.tf * scale, n_steps=cfg.n_steps * scale,
                              p_bounds=p_bounds, v_bounds=cfg.v_bounds, a_bounds=cfg.a_bounds, monotone=mono)
        try:
            traj = solve_min_jerk(prob)
            break
        except Infeasible:
            pass
    if traj is None:
        raise Infeasible(f"no feasible plan from {(p, v, a)} to {pf}")
    A, B = transition(cfg.tf / cfg.n_steps)
    nxt = A @ np.array([p, v, a]) + B * traj.jerk_inputs[0]
    nxt[0] = np.clip(nxt[0], lo_p, hi_p)
    return nxt


def ik_2link(target, link_lengths, limits=None, elbow_branch="down"):
    """Joint angles (q1, q2) of a planar two-link arm reaching ``target``.

    ``down`` takes the positive elbow angle. Unreachable targets are moved to
    the closest point of the reachable annulus along their ray; limit
    violations are then clamped, elbow first.
    """
    l1, l2 = float(link_lengths[0]), float(link_lengths[1])
    if l1 <= 0 or l2 <= 0:
        raise ValueError("link lengths must be positive")
    x, y = float(target[0]), float(target[1])
    r = math.hypot(x, y)
    r_min, r_max = abs(l1 - l2), l1 + l2
    if r < 1e-12:
        x, y, r = r_min if r_min > 0 else 0.0, 0.0, r_min
    elif r > r_max or r < r_min:
        rc = min(max(r, r_min), r_max)
        x, y, r = x * rc / r, y * rc / r, rc
    c2 = (r * r - l1 * l1 - l2 * l2) / (2 * l1 * l2)
    q2 = math.acos(min(1.0, max(-1.0, c2)))
    if elbow_branch == "up":
        q2 = -q2
    elif elbow_branch != "down":
        raise ValueError(f"unknown elbow branch {elbow_branch!r}")
    if limits is not None:
        q2 = min(max(q2, limits[1][0]), limits[1][1])
    q1 = math.atan2(y, x) - math.atan2(l2 * math.sin(q2), l1 + l2 * math.cos(q2))
    q1 = math.atan2(math.sin(q1), math.cos(q1))
    if limits is not None:
        q1 = min(max(q1, limits[0][0]), limits[0][1])
    return q1, q2


def _fk(q1, q2, l1, l2):
    return np.array([l1 * math.cos(q1) + l2 * math.cos(q1 + q2), l1 * math.sin(q1) + l2 * math.sin(q1 + q2)])


@dataclass
class _ArmState:
    ref: np.ndarray = field(default_factory=lambda: np.zeros((2, 3)))  # per axis (p, v, a), shoulder frame
    ready: bool = False


class ManipulationPolicy:
    """Hand targets to arm (and torso) joint targets at the mid-level rate.

    World-frame hand targets are expressed in the torso frame of the commanded
    pelvis position and torso yaw, then relative to each shoulder. Each hand
    follows a per-axis MPC reference that is re-seeded from the measured hand
    when the two drift apart by more than ``reseed_dist``.
    """

    def __init__(self, robot, mpc=MpcConfig(), home=(0.0, 0.0), reseed_dist=0.15):
        self.robot = robot
        self.mpc = mpc
        self.home = np.asarray(home, dtype=np.float64)
        self.reseed_dist = reseed_dist
        self.arms = [_ArmState(), _ArmState()]

    def reset(self):
        self.arms = [_ArmState(), _ArmState()]

    def _limits(self, arm):
        lo, hi = self.robot.lower, self.robot.upper
        j = 4 + 2 * arm
        return ((lo[j], hi[j]), (lo[j + 1], hi[j + 1]))

    def local_targets(self, command):
        origin = self.home if command.pelvis_target is None else np.asarray(command.pelvis_target, dtype=np.float64)
        yaw = 0.0 if command.torso_yaw_target is None else float(command.torso_yaw_target)
        c, s = math.cos(yaw), math.sin(yaw)
        out = []
        for arm, tgt in enumerate((command.left_hand_target, command.right_hand_target)):
            if tgt is None:
                out.append(np.asarray(self.robot.nominal_hands[arm], dtype=np.float64) - self.robot.shoulder_offsets[arm])
                continue
            d = np.asarray(tgt, dtype=np.float64) - origin
            local = np.array([c * d[0] + s * d[1], -s * d[0] + c * d[1]])
            out.append(local - np.asarray(self.robot.shoulder_offsets[arm]))
        return out

    def act(self, obs, command):
        """Return (arm joint targets (4,), torso yaw target)."""
        arm_q = np.asarray(obs["arm_joint_pos"], dtype=np.float64)
        l1, l2 = self.robot.link_lengths
        targets = self.local_targets(command)
        q_out = []
        for arm in (0, 1):
            st = self.arms[arm]
            measured = _fk(arm_q[2 * arm], arm_q[2 * arm + 1], l1, l2)
            if not st.ready or np.hypot(*(st.ref[:, 0] - measured)) > self.reseed_dist:
                st.ref = np.zeros((2, 3))
                st.ref[:, 0] = measured
                st.ready = True
            for axis in (0, 1):
                st.ref[axis] = mpc_step(st.ref[axis], targets[arm][axis], self.mpc)
            q_out.extend(ik_2link(st.ref[:, 0], (l1, l2), self._limits(arm), self.robot.elbow_branch[arm]))
        torso = 0.0 if command.torso_yaw_target is None else float(command.torso_yaw_target)
        torso = min(max(torso, self.robot.lower[3]), self.robot.upper[3])
        return np.array(q_out), torso
