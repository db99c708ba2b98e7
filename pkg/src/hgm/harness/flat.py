"""Flat baseline: one SAC policy from the union of all level states straight to motor torques."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..loco import NET_CHANNELS, SacConfig, SacNets, sac_update, sample_action
from ..planner import HIGH_CHANNELS, check_termination, task_reward
from ..replay import ReplayBuffer
from ..world import Simulator, apply_perturbation, detect_events, kernel, reset_world
from .stack import LOW_CHANNELS, MANIP_CHANNELS, gains_of, schedule_of, task_weights, world_config

FLAT_CHANNELS = tuple(dict.fromkeys(HIGH_CHANNELS[1] + NET_CHANNELS + MANIP_CHANNELS + LOW_CHANNELS))
N_ACTUATORS = 8


def mlp_param_count(sizes):
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


def sac_param_count(state_dim, action_dim, hidden):
    h = list(hidden)
    pol = mlp_param_count([state_dim] + h + [2 * action_dim])
    q = mlp_param_count([state_dim + action_dim] + h + [1])
    v = mlp_param_count([state_dim] + h + [1])
    return pol + q + 2 * v


@dataclass(frozen=True)
class FlatBaselineConfig:
    state_dim: int
    action_dim: int
    hidden: tuple
    param_count: int
    target_count: int

    @property
    def mismatch(self):
        return abs(self.param_count - self.target_count) / self.target_count


def match_flat_config(target_count, state_dim, action_dim=N_ACTUATORS, tol=0.01, max_width=512):
    """Two hidden widths whose SAC parameter total lands closest to ``target_count``.

    Among candidates within ``tol`` the most nearly square one wins.
    """
    best = None
    for h1 in range(4, max_width + 1):
        for h2 in range(4, max_width + 1):
            n = sac_param_count(state_dim, action_dim, (h1, h2))
            err = abs(n - target_count) / target_count
            key = (err > tol, abs(h1 - h2) if err <= tol else err, err)
            if best is None or key < best[0]:
                best = (key, (h1, h2), n)
    _, hidden, n = best
    out = FlatBaselineConfig(state_dim, action_dim, hidden, n, int(target_count))
    if out.mismatch > tol:
        raise ValueError(f"no flat layout within {tol:.0%} of {target_count} parameters")
    return out


def hierarchy_param_count(loco_nets, q_pair):
    return loco_nets.num_params + q_pair.num_params


def flat_state(obs):
    return np.concatenate([np.atleast_1d(np.asarray(obs[c], dtype=np.float64)) for c in FLAT_CHANNELS])


class FlatEnv:
    """Task 1 at the mid rate; the action is a torque set-point per actuator, scaled to [-1, 1].

    Reward is the high-level task reward, sampled once per high period.
    """

    def __init__(self, cfg, perturbation=None, jitter=0.0):
        self.cfg = cfg
        self.world_cfg = world_config(cfg, 1)
        self.schedule = schedule_of(cfg)
        self.gains = gains_of(cfg, self.world_cfg.robot)
        self.torque_limit = np.asarray(self.world_cfg.robot.torque_limit, dtype=np.float64)
        self.weights = task_weights(cfg)
        self.perturbation = perturbation
        self.jitter = jitter
        self.max_steps = cfg.planner.episode_ticks * self.schedule.ratio_mid_per_high
        self.sim = None
        self.steps = 0

    @property
    def state_dim(self):
        return len(self.state()) if self.sim is not None else _flat_dim(self.world_cfg)

    def reset(self, seed, init_mode="nominal"):
        w = reset_world(1, init_mode, seed, self.world_cfg, jitter=self.jitter)
        if self.perturbation is not None:
            w = apply_perturbation(w, self.perturbation)
        self.sim = Simulator(w)
        self.steps = 0
        return self.state()

    def state(self):
        return flat_state(self.sim.observe())

    def step(self, action):
        tau_d = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0) * self.torque_limit
        kernel.run_held(self.sim.world, tau_d, self.gains, self.schedule.ratio_low_per_mid, torque_mode=True)
        self.steps += 1
        cause = check_termination(self.sim.world).cause
        if cause is not None:
            return self.state(), 0.0, True, {"cause": cause}
        r = 0.0
        if self.steps % self.schedule.ratio_mid_per_high == 0:
            r = task_reward(1, detect_events(self.sim.world), self.weights)
        info = {"cause": "time_limit" if self.steps >= self.max_steps else None}
        return self.state(), r, False, info

    def success(self):
        f = detect_events(self.sim.world)
        return bool(f.at_goal and f.box_on_table and f.door_open)


def _flat_dim(world_cfg):
    w = reset_world(1, "nominal", 0, world_cfg)
    return len(flat_state(Simulator(w).observe()))


def flat_sac_config(cfg, flat_cfg):
    """SAC settings for the flat policy; its discount matches the planner's per high period."""
    s = cfg.sac
    per_mid = cfg.planner.gamma ** (1.0 / schedule_of(cfg).ratio_mid_per_high)
    a = flat_cfg.action_dim
    return SacConfig(alpha=s.alpha, gamma=per_mid, lr=s.lr, batch_size=s.batch_size,
                     target_smoothing=s.target_smoothing, action_dim=a, state_dim=flat_cfg.state_dim,
                     hidden=tuple(flat_cfg.hidden), action_low=(-1.0,) * a, action_high=(1.0,) * a)


def evaluate_flat(env, policy, sac_cfg, n_episodes, seed):
    rets, wins = [], 0
    for ep in range(n_episodes):
        s = env.reset(seed * 100_003 + ep)
        total = 0.0
        while True:
            a, _ = sample_action(policy, s, sac_cfg, "mean")
            s, r, done, info = env.step(a)
            total += r
            if done or info["cause"] == "time_limit":
                break
        rets.append(total)
        wins += int(env.success())
    if n_episodes == 0:
        return 0.0, 0.0
    return float(np.mean(rets)), wins / n_episodes


@dataclass
class FlatTrainResult:
    nets: SacNets
    curve: list
    sac: SacConfig


def train_flat(cfg, flat_cfg, budget, seed, checkpoints, eval_seed=777, varied_fraction=None):
    """SAC for ``budget`` env steps; evaluates at every step count in ``checkpoints``."""
    rng = np.random.default_rng(seed)
    sac = flat_sac_config(cfg, flat_cfg)
    nets = SacNets.create(sac, rng)
    env, ev = FlatEnv(cfg), FlatEnv(cfg)
    frac = cfg.planner.varied_fraction if varied_fraction is None else varied_fraction
    marks = set(int(c) for c in checkpoints)
    curve = []

    def new_episode():
        mode = "varied" if rng.random() < frac else "nominal"
        return env.reset(int(rng.integers(2**31)), mode)

    if budget > 0:
        buf = ReplayBuffer(min(200_000, budget), sac.state_dim, sac.action_dim)
        s = new_episode()
        for step in range(1, budget + 1):
            if step <= cfg.flat.warmup_steps:
                a = rng.uniform(-1.0, 1.0, sac.action_dim)
            else:
                a, _ = sample_action(nets.policy, s, sac, "stochastic", rng)
            s2, r, done, info = env.step(a)
            buf.add(s, a, r, s2, done)
            s = s2
            if done or info["cause"] == "time_limit":
                s = new_episode()
            if step > cfg.flat.warmup_steps and len(buf) >= sac.batch_size:
                sac_update(nets, buf.sample(sac.batch_size, rng), sac, rng)
            if step in marks:
                ret, succ = evaluate_flat(ev, nets.policy, sac, cfg.flat.eval_episodes, eval_seed)
                curve.append({"step": step, "eval_return": ret, "success_rate": succ})
    elif 0 in marks:
        ret, succ = evaluate_flat(ev, nets.policy, sac, cfg.flat.eval_episodes, eval_seed)
        curve.append({"step": 0, "eval_return": ret, "success_rate": succ})
    return FlatTrainResult(nets, curve, sac)


def checkpoint_grid(budget, every):
    every = max(1, int(every))
    grid = list(range(every, budget + 1, every))
    if not grid or grid[-1] != budget:
        grid.append(budget)
    return grid
