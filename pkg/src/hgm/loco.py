"""Locomotion policy trained with Soft Actor-Critic (25 Hz).

The surrogate's "legs" are the three virtual base joints. The policy emits a
body-frame pelvis offset (dx, dy) and an absolute yaw target; the mid level
turns these into base joint targets for the impedance controller. The
imitation reference is a synthetic periodic sway with alternating foot loads.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import MidCommand
from .errors import NonFiniteLoss, PhaseOutOfRange
from .lowlevel import ImpedanceController, default_gains
from .manip import ManipulationPolicy
from .nn import AdamState, MlpNet, adam_step, soft_update
from .replay import ReplayBuffer
from .world.config import Layout, Rect, WorldConfig, _room_walls
from .world.events import nominal_arm_joints
from .world.sim import Simulator, contact_loads
from .world.state import WorldState

TWO_PI = 2.0 * math.pi
LOG_2PI = math.log(2.0 * math.pi)

# Channels fed to the policy network, in order.
NET_CHANNELS = ("pelvis_target", "base_yaw", "base_lin_vel", "base_ang_vel", "contact_load", "gait_phase")
# The full locomotion allow-list adds the base joint positions used to build targets.
LOCO_CHANNELS = NET_CHANNELS + ("leg_joint_pos",)


def rbf_kernel(x_hat, x, alpha):
    """exp(-alpha * |x_hat - x|^2); vectors use the squared Euclidean distance."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    d = np.asarray(x_hat, dtype=np.float64) - np.asarray(x, dtype=np.float64)
    return float(np.exp(-alpha * float(np.sum(d * d))))


@dataclass(frozen=True)
class ReferenceMotion:
    """Periodic sway reference: yaw = A sin(phase), loads follow the sway."""

    amplitude: float = 0.03
    contact_threshold: float = 0.1

    def at(self, phase):
        if not (0.0 <= phase < TWO_PI) or not math.isfinite(phase):
            raise PhaseOutOfRange(f"phase {phase} outside [0, 2*pi)")
        yaw = self.amplitude * math.sin(phase)
        loads = contact_loads(yaw, self.amplitude)
        return yaw, loads, loads > self.contact_threshold


@dataclass(frozen=True)
class LocoRewardWeights:
    w_imitation: float = 0.5
    w_task: float = 0.5
    joint: float = 0.5
    pose_imitation: float = 0.4
    contact: float = 0.1
    pose_task: float = 0.15
    goal: float = 0.25
    vel: float = 0.5
    torque: float = 0.1
    # kernel widths
    alpha_joint: float = 2000.0
    alpha_pose: float = 2.0
    alpha_pose_task: float = 4.0
    alpha_goal: float = 2.0
    alpha_vel: float = 4.0
    alpha_torque: float = 2.0
    # desired speed toward the target: gain * distance, capped
    vel_gain: float = 1.5
    vel_max: float = 0.6


def desired_velocity(rel, w):
    v = w.vel_gain * np.asarray(rel, dtype=np.float64)
    n = float(np.hypot(v[0], v[1]))
    return v * (w.vel_max / n) if n > w.vel_max else v


def locomotion_reward(obs, action, ref, phase, weights=LocoRewardWeights(), torque=None):
    """Weighted imitation plus task reward, each group a convex mix of kernels.

    ``obs`` holds the locomotion channels after the step; ``torque`` is the
    base actuation normalised by its limits (zero when omitted).
    """
    w = weights
    yaw_ref, loads_ref, contact_ref = ref.at(phase)
    loads = np.asarray(obs["contact_load"], dtype=np.float64)
    contact = loads > ref.contact_threshold
    r_joint = rbf_kernel(yaw_ref, action[2], w.alpha_joint)
    r_pose_i = rbf_kernel(loads_ref, loads, w.alpha_pose)
    r_contact = 1.0 if bool(np.all(contact == contact_ref)) else 0.0
    rel = np.asarray(obs["pelvis_target"], dtype=np.float64)
    r_pose_t = rbf_kernel(0.0, obs["base_ang_vel"], w.alpha_pose_task)
    r_goal = rbf_kernel(0.0, math.hypot(rel[0], rel[1]), w.alpha_goal)
    r_vel = rbf_kernel(desired_velocity(rel, w), obs["base_lin_vel"], w.alpha_vel)
    r_torque = rbf_kernel(0.0, np.zeros(3) if torque is None else torque, w.alpha_torque)
    imitation = w.joint * r_joint + w.pose_imitation * r_pose_i + w.contact * r_contact
    task = w.pose_task * r_pose_t + w.goal * r_goal + w.vel * r_vel + w.torque * r_torque
    return w.w_imitation * imitation + w.w_task * task


# ---------------------------------------------------------------- SAC


@dataclass(frozen=True)
class SacConfig:
    alpha: float = 0.2
    gamma: float = 0.99
    lr: float = 3e-4
    batch_size: int = 128
    target_smoothing: float = 0.005
    action_dim: int = 3
    state_dim: int = 10
    hidden: tuple = (64, 64)
    action_low: tuple = (-0.3, -0.3, -0.3)
    action_high: tuple = (0.3, 0.3, 0.3)
    log_std_range: tuple = (-5.0, 1.0)

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if len(self.action_low) != self.action_dim or len(self.action_high) != self.action_dim:
            raise ValueError("action bounds must match action_dim")

    @property
    def scale(self):
        return 0.5 * (np.asarray(self.action_high) - np.asarray(self.action_low))

    @property
    def centre(self):
        return 0.5 * (np.asarray(self.action_high) + np.asarray(self.action_low))


@dataclass
class SacNets:
    policy: MlpNet
    q: MlpNet
    v: MlpNet
    v_target: MlpNet
    opt_policy: AdamState = None
    opt_q: AdamState = None
    opt_v: AdamState = None

    @classmethod
    def create(cls, cfg, rng):
        h = list(cfg.hidden)
        pol = MlpNet.create([cfg.state_dim] + h + [2 * cfg.action_dim], rng, head="gaussian",
                            log_std_range=cfg.log_std_range, out_scale=0.1)
        q = MlpNet.create([cfg.state_dim + cfg.action_dim] + h + [1], rng)
        v = MlpNet.create([cfg.state_dim] + h + [1], rng)
        nets = cls(pol, q, v, v.copy())
        nets.reset_optimisers(cfg)
        return nets

    def reset_optimisers(self, cfg):
        self.opt_policy = AdamState.for_params(self.policy.params(), lr=cfg.lr)
        self.opt_q = AdamState.for_params(self.q.params(), lr=cfg.lr)
        self.opt_v = AdamState.for_params(self.v.params(), lr=cfg.lr)

    @property
    def num_params(self):
        return self.policy.num_params + self.q.num_params + self.v.num_params + self.v_target.num_params

    def to_tensors(self):
        t = {}
        for name in ("policy", "q", "v", "v_target"):
            t.update(getattr(self, name).to_tensors(name + "."))
        return t

    @classmethod
    def from_tensors(cls, tensors, meta, cfg):
        nets = cls(*(MlpNet.from_tensors(tensors, meta[n], n + ".") for n in ("policy", "q", "v", "v_target")))
        nets.reset_optimisers(cfg)
        return nets

    def meta(self):
        return {n: getattr(self, n).meta() for n in ("policy", "q", "v", "v_target")}


def _log1m_tanh2(u):
    """log(1 - tanh(u)^2), stable for large |u|."""
    return 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


def squash(u, cfg):
    return cfg.centre + cfg.scale * np.tanh(u)


def gaussian_log_prob(u, mean, log_std, cfg):
    """Log-density of the squashed action ``squash(u)`` (change of variables)."""
    z = (u - mean) / np.exp(log_std)
    logn = -0.5 * z * z - log_std - 0.5 * LOG_2PI
    corr = np.log(cfg.scale) + _log1m_tanh2(u)
    return np.sum(logn - corr, axis=-1)


def sample_action(policy, obs, cfg, mode="stochastic", rng=None):
    """Squashed-Gaussian action and its log-probability."""
    out = policy.forward(np.asarray(obs, dtype=np.float64))
    k = cfg.action_dim
    mean, log_std = out[..., :k], out[..., k:]
    if mode == "mean":
        u = mean
    elif mode == "stochastic":
        u = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    return squash(u, cfg), gaussian_log_prob(u, mean, log_std, cfg)


def sac_losses(nets, batch, cfg, eps):
    """Losses and parameter gradients for one batch with fixed noise ``eps``.

    Returns ((J_pi, J_Q, J_V), (g_policy, g_q, g_v)).
    """
    s, a, r, s2, done = batch
    n = s.shape[0]
    k = cfg.action_dim
    alpha = cfg.alpha

    # Q: Bellman residual against the smoothed value target.
    v_next = nets.v_target.forward(s2)[:, 0]
    y = r + cfg.gamma * (1.0 - done) * v_next
    q_data = nets.q.forward(np.concatenate([s, a], axis=1))[:, 0]
    dq = q_data - y
    j_q = 0.5 * float(np.mean(dq * dq))
    g_q, _ = nets.q.backward((dq / n)[:, None])

    # Reparameterised policy sample.
    out = nets.policy.forward(s)
    mean, log_std = out[:, :k], out[:, k:]
    std = np.exp(log_std)
    u = mean + std * eps
    a_new = squash(u, cfg)
    logp = gaussian_log_prob(u, mean, log_std, cfg)
    q_new = nets.q.forward(np.concatenate([s, a_new], axis=1))[:, 0]
    _, g_in = nets.q.backward(np.full((n, 1), 1.0 / n))
    dq_da = g_in[:, -k:] * n  # per-sample dQ/da

    # V: regress onto E[Q - alpha log pi].
    v = nets.v.forward(s)[:, 0]
    dv = v - (q_new - alpha * logp)
    j_v = 0.5 * float(np.mean(dv * dv))
    g_v, _ = nets.v.backward((dv / n)[:, None])

    # pi: E[alpha log pi - Q].
    j_pi = float(np.mean(alpha * logp - q_new))
    th = np.tanh(u)
    da_du = cfg.scale * (1.0 - th * th)
    dj_du = alpha * 2.0 * th - dq_da * da_du  # derivative through u, epsilon fixed
    g_mean = dj_du / n
    g_logstd = (dj_du * eps * std - alpha) / n
    g_pi, _ = nets.policy.backward(np.concatenate([g_mean, g_logstd], axis=1))

    # restore Q's cache to the data batch is unnecessary: grads were taken already
    return (j_pi, j_q, j_v), (g_pi, g_q, g_v)


def sac_update(nets, batch, cfg, rng):
    """One gradient step on each of J_pi, J_Q and J_V, then Polyak-smooth V_target."""
    eps = rng.standard_normal((batch[0].shape[0], cfg.action_dim))
    losses, (g_pi, g_q, g_v) = sac_losses(nets, batch, cfg, eps)
    if not all(math.isfinite(x) for x in losses):
        raise NonFiniteLoss(f"non-finite SAC loss {losses}")
    adam_step(nets.q.params(), g_q, nets.opt_q)
    adam_step(nets.v.params(), g_v, nets.opt_v)
    adam_step(nets.policy.params(), g_pi, nets.opt_policy)
    soft_update(nets.v_target, nets.v, cfg.target_smoothing)
    return losses


# ---------------------------------------------------------------- policies


def net_input(obs):
    return np.concatenate([np.atleast_1d(np.asarray(obs[c], dtype=np.float64)) for c in NET_CHANNELS])


class LocomotionPolicy:
    def __init__(self, policy_net, cfg, mode="mean"):
        self.net = policy_net
        self.cfg = cfg
        self.mode = mode

    def act(self, obs, rng=None):
        a, _ = sample_action(self.net, net_input(obs), self.cfg, self.mode, rng)
        return a


def base_targets(leg_q, action, robot):
    """Absolute base joint targets from a body-frame offset and yaw target."""
    x, y, yaw = (float(v) for v in leg_q)
    c, s = math.cos(yaw), math.sin(yaw)
    dx, dy = float(action[0]), float(action[1])
    tgt = np.array([x + c * dx - s * dy, y + s * dx + c * dy, float(action[2])])
    return np.clip(tgt, robot.lower[0:3], robot.upper[0:3])


class MidLevel:
    """Locomotion and manipulation policies side by side, one MidCommand out."""

    def __init__(self, loco, manip, robot):
        self.loco = loco
        self.manip = manip
        self.robot = robot

    def reset(self):
        if self.manip is not None:
            self.manip.reset()

    def act(self, loco_obs, manip_obs, command, rng=None):
        action = self.loco.act(loco_obs, rng)
        q = np.empty(8)
        q[0:3] = base_targets(loco_obs["leg_joint_pos"], action, self.robot)
        if self.manip is None:
            q[3] = 0.0
            q[4:8] = nominal_arm_joints(self.robot)
        else:
            arms, torso = self.manip.act(manip_obs, command)
            q[3] = torso
            q[4:8] = arms
        q = np.clip(q, self.robot.lower, self.robot.upper)
        return MidCommand(q)


# ---------------------------------------------------------------- training


def open_field_config(robot=None, half=5.0):
    bounds = Rect(-half, half, -half, half)
    lay = Layout(task=0, bounds=bounds, walls=_room_walls(bounds), start=(0.0, 0.0), waypoints={"start": (0.0, 0.0)})
    kw = {} if robot is None else {"robot": robot}
    return WorldConfig(task=0, layout=lay, **kw)


@dataclass(frozen=True)
class LocoTrainConfig:
    sac: SacConfig = field(default_factory=SacConfig)
    reward: LocoRewardWeights = field(default_factory=LocoRewardWeights)
    episode_steps: int = 150
    target_radius: float = 3.0
    success_radius: float = 0.15
    warmup_steps: int = 2000
    update_every: int = 1
    buffer_size: int = 200_000
    eval_every: int = 20_000
    eval_episodes: int = 10
    ratio_low_per_mid: int = 20


class LocomotionEnv:
    """Open floor, random pelvis target; arms hold the nominal pose."""

    def __init__(self, cfg=LocoTrainConfig(), world_cfg=None, gains=None):
        self.cfg = cfg
        self.world_cfg = world_cfg or open_field_config()
        self.robot = self.world_cfg.robot
        self.ctrl = ImpedanceController(gains or default_gains(self.robot), self.robot)
        self.ref = ReferenceMotion(self.world_cfg.sway_amplitude)
        self.sim = None
        self.target = np.zeros(2)
        self.steps = 0
        self._cmd = None

    def _obs(self):
        return self.sim.observe(self._cmd, None)

    def reset(self, rng):
        cfg = self.world_cfg
        q = np.zeros(8)
        q[4:8] = nominal_arm_joints(self.robot)
        w = WorldState(cfg=cfg, q=q, qd=np.zeros(8), friction_coeff=cfg.friction_coeff)
        w.phase = float(rng.uniform(0.0, TWO_PI))
        self.sim = Simulator(w)
        r = self.cfg.target_radius * math.sqrt(rng.uniform())
        th = rng.uniform(0.0, TWO_PI)
        self.target = np.array([r * math.cos(th), r * math.sin(th)])
        from .core import LevelCommand

        self._cmd = LevelCommand(pelvis_target=self.target)
        self.steps = 0
        return self._obs()

    def step(self, action):
        w = self.sim.world
        q = np.empty(8)
        q[0:3] = base_targets(w.q[0:3], action, self.robot)
        q[3] = 0.0
        q[4:8] = nominal_arm_joints(self.robot)
        self.sim.run_held(q, self.ctrl.gains, self.cfg.ratio_low_per_mid)
        self.steps += 1
        obs = self._obs()
        torque = w.tau[0:3] / np.asarray(self.robot.torque_limit[0:3])
        fell = self.fell()
        r = 0.0 if fell else locomotion_reward(obs, action, self.ref, w.phase, self.cfg.reward, torque)
        truncated = self.steps >= self.cfg.episode_steps
        return obs, r, fell, truncated

    def fell(self):
        w = self.sim.world
        c = w.cfg
        return bool(abs(w.q[2]) > c.fall_yaw or abs(w.qd[2]) > c.fall_spin or math.hypot(*w.qd[0:2]) > c.fall_speed)

    def distance(self):
        return float(np.hypot(*(self.sim.world.q[0:2] - self.target)))


def evaluate_locomotion(policy_net, cfg, n_episodes, seed, env=None):
    """Mean return and success rate of the deterministic policy."""
    env = env or LocomotionEnv(cfg)
    pol = LocomotionPolicy(policy_net, cfg.sac, mode="mean")
    rets, wins = [], 0
    for ep in range(n_episodes):
        rng = np.random.default_rng([seed, ep])
        obs = env.reset(rng)
        total = 0.0
        while True:
            obs, r, fell, trunc = env.step(pol.act(obs))
            total += r
            if fell or trunc:
                break
        rets.append(total)
        wins += int(not fell and env.distance() < cfg.success_radius)
    if n_episodes == 0:
        return 0.0, 0.0
    return float(np.mean(rets)), wins / n_episodes


@dataclass
class LocoTrainResult:
    nets: SacNets
    curve: list  # dicts: step, eval_return, success_rate

    @property
    def policy(self):
        return self.nets.policy


def train_locomotion(cfg=LocoTrainConfig(), budget=200_000, seed=0, curve_path=None, eval_seed=10_000, env=None,
                     on_eval=None):
    """SAC on the locomotion env for ``budget`` mid-level steps.

    ``on_eval(step, nets)`` runs at every evaluation point.
    """
    rng = np.random.default_rng(seed)
    nets = SacNets.create(cfg.sac, rng)
    curve = []
    if budget <= 0:
        if curve_path is not None:
            write_curve(curve_path, curve)
        return LocoTrainResult(nets, curve)
    env = env or LocomotionEnv(cfg)
    eval_env = LocomotionEnv(cfg, env.world_cfg, env.ctrl.gains)
    buf = ReplayBuffer(min(cfg.buffer_size, budget), cfg.sac.state_dim, cfg.sac.action_dim)
    obs = env.reset(rng)
    s = net_input(obs)
    low, high = np.asarray(cfg.sac.action_low), np.asarray(cfg.sac.action_high)
    for step in range(1, budget + 1):
        if step <= cfg.warmup_steps:
            a = rng.uniform(low, high)
        else:
            a, _ = sample_action(nets.policy, s, cfg.sac, "stochastic", rng)
        obs, r, fell, trunc = env.step(a)
        s2 = net_input(obs)
        buf.add(s, a, r, s2, fell)
        s = s2
        if fell or trunc:
            obs = env.reset(rng)
            s = net_input(obs)
        if step > cfg.warmup_steps and step % cfg.update_every == 0 and len(buf) >= cfg.sac.batch_size:
            sac_update(nets, buf.sample(cfg.sac.batch_size, rng), cfg.sac, rng)
        if step % cfg.eval_every == 0 or step == budget:
            ret, succ = evaluate_locomotion(nets.policy, cfg, cfg.eval_episodes, eval_seed, eval_env)
            curve.append({"step": step, "eval_return": ret, "success_rate": succ})
            if on_eval is not None:
                on_eval(step, nets)
    if curve_path is not None:
        write_curve(curve_path, curve)
    return LocoTrainResult(nets, curve)


def write_curve(path, rows, fields=("step", "eval_return", "success_rate")):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for r in rows:
            w.writerow([r[f] if isinstance(r[f], (int, np.integer)) else repr(float(r[f])) for f in fields])
    return path


def with_sac(cfg, **changes):
    return replace(cfg, sac=replace(cfg.sac, **changes))
