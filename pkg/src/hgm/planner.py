"""High-level decision making: Double Q-learning over a discrete command catalog (0.5 Hz)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Hierarchy, LevelCommand, make_schedule
from .errors import NonFiniteLoss
from .nn import AdamState, MlpNet, adam_step
from .replay import ReplayBuffer
from .world.events import detect_events, self_collision
from .world.kinematics import rot
from .world.perturb import apply_perturbation
from .world.scenes import reset_world
from .world.sim import Simulator


def discount_horizon(gamma, freq_high=0.5):
    """Steps until the discount weight halves, and the same in seconds."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    steps = math.log(0.5) / math.log(gamma)
    return steps, steps / freq_high


@dataclass(frozen=True)
class TaskRewardWeights:
    task1: tuple = (1.0, 0.1, 1.0, 2.0, 2.0, 5.0)  # passed table, joints nominal, in hands, on table, door, goal
    task2: float = 1.0
    task3: tuple = (1.0, 5.0, 10.0)  # in hands, on conveyor, button pushed while on the belt


def task_reward(task, flags, weights=TaskRewardWeights(), sequenced=True):
    """Weighted flag sum for ``task``.

    With ``sequenced`` (used for training) the Task 1 sub-tasks count in
    order: walking on, opening the door and arriving only pay once the box is
    delivered. ``sequenced=False`` gives the plain weighted sum.
    """
    if task == 1:
        w = weights.task1
        done = flags.box_on_table or not sequenced
        terms = (flags.passed_table and done, flags.joints_nominal, flags.box_in_hands, flags.box_on_table,
                 flags.door_open and done, flags.at_goal and done and (flags.door_open or not sequenced))
        return float(sum(wi * float(t) for wi, t in zip(w, terms)))
    if task == 2:
        return weights.task2 * float(flags.ball_past_goal_line)
    if task == 3:
        w = weights.task3
        pushed_on_belt = flags.button_pushed and flags.box_on_conveyor
        return w[0] * float(flags.box_in_hands) + w[1] * float(flags.box_on_conveyor) + w[2] * float(pushed_on_belt)
    raise ValueError(f"unknown task {task}")


def max_task_reward(task, weights=TaskRewardWeights()):
    return {1: sum(weights.task1), 2: weights.task2, 3: sum(weights.task3)}[task]


@dataclass(frozen=True)
class Termination:
    cause: str | None = None

    @property
    def terminated(self):
        return self.cause is not None


def check_termination(world):
    """Early-termination cause for the current state, if any."""
    cfg = world.cfg
    b = world.layout.bounds
    x, y = world.q[0], world.q[1]
    if (abs(world.q[2]) > cfg.fall_yaw or abs(world.qd[2]) > cfg.fall_spin
            or math.hypot(world.qd[0], world.qd[1]) > cfg.fall_speed
            or not (b.xmin <= x <= b.xmax and b.ymin <= y <= b.ymax)):
        return Termination("fell")
    pen = world.penetration
    if pen.get("door", 0.0) > cfg.penetration_tol or pen.get("static", 0.0) > cfg.penetration_tol:
        return Termination("collision")
    if self_collision(world):
        return Termination("self_collision")
    return Termination(None)


# ---------------------------------------------------------------- action catalogs


def _hands_world(pelvis, yaw, hands):
    p = np.asarray(pelvis, dtype=np.float64)
    return tuple(p + rot(yaw, h) for h in hands)


def action_catalog(task, cfg):
    """Named LevelCommand templates for ``task`` (world-frame targets).

    Task 2 templates hold pelvis offsets relative to the ball; they are made
    absolute by :func:`resolve_action`.
    """
    lay = cfg.layout
    rp = cfg.robot
    if task == 1:
        wp = lay.waypoints
        nominal, grasp, opened = rp.nominal_hands, rp.grasp_hands, rp.open_hands
        press = (rp.nominal_hands[0], (0.5, 0.0))

        def t(name, where, hands):
            lh, rh = _hands_world(wp[where], 0.0, hands)
            return name, LevelCommand(pelvis_target=np.array(wp[where], dtype=np.float64), left_hand_target=lh,
                                      right_hand_target=rh)

        return [
            t("approach_box", "pickup", opened),
            t("grasp_box", "pickup", grasp),
            t("carry_to_table", "delivery", grasp),
            t("release_box", "delivery", opened),
            t("approach_button", "button", nominal),
            t("press_button", "button", press),
            t("door_front", "door", nominal),
            t("goal", "goal", nominal),
            t("start", "start", nominal),
            t("carry_to_goal", "goal", grasp),
            t("midway", "midway", nominal),
            t("beyond_door", "beyond_door", nominal),
        ]
    if task == 2:
        offsets = [(-0.5, 0.0), (0.6, 0.0), (-0.5, 0.4), (-0.5, -0.4), (0.6, 0.3), (0.6, -0.3), (0.0, 0.6),
                   (0.0, -0.6)]
        return [(f"ball_offset_{dx:+.1f}_{dy:+.1f}", LevelCommand(pelvis_target=np.array([dx, dy])))
                for dx, dy in offsets]
    if task == 3:
        origin = lay.start
        out = []
        for yaw_name, yaw in (("left", math.pi / 4), ("centre", 0.0), ("right", -math.pi / 4)):
            for hand_name, hands in (("nominal", rp.nominal_hands), ("grasp", rp.grasp_hands),
                                     ("open", rp.open_hands)):
                lh, rh = _hands_world(origin, yaw, hands)
                out.append((f"{yaw_name}_{hand_name}", LevelCommand(left_hand_target=lh, right_hand_target=rh,
                                                                    torso_yaw_target=yaw)))
        lh, rh = _hands_world(origin, -math.pi / 4, (rp.nominal_hands[0], (0.5, -0.3)))
        out.append(("press_button", LevelCommand(left_hand_target=lh, right_hand_target=rh,
                                                 torso_yaw_target=-math.pi / 4)))
        return out
    raise ValueError(f"unknown task {task}")


def resolve_action(task, template, world):
    """Concrete command for the current state (copies the template)."""
    cmd = LevelCommand(
        pelvis_target=None if template.pelvis_target is None else np.array(template.pelvis_target, dtype=np.float64),
        left_hand_target=None if template.left_hand_target is None else np.array(template.left_hand_target),
        right_hand_target=None if template.right_hand_target is None else np.array(template.right_hand_target),
        torso_yaw_target=template.torso_yaw_target,
    )
    if task == 2:
        b = world.layout.bounds
        p = world.ball_pos + cmd.pelvis_target
        cmd.pelvis_target = np.array([min(max(p[0], b.xmin + 0.3), b.xmax - 0.3),
                                      min(max(p[1], b.ymin + 0.3), b.ymax - 0.3)])
    return cmd


# ---------------------------------------------------------------- state


HIGH_CHANNELS = {
    1: ("pelvis_rel_table", "box_rel_lh", "box_rel_rh", "door_open", "box_on_table", "box_in_hands"),
    2: ("ball_pos", "pelvis_pos"),
    3: ("arm_joint_pos", "torso_yaw", "box_pos", "box_in_hands", "box_on_conveyor", "button_pushed"),
}
STATE_DIM = {1: 9, 2: 4, 3: 10}


def high_state(task, obs):
    return np.concatenate([np.atleast_1d(np.asarray(obs[c], dtype=np.float64)) for c in HIGH_CHANNELS[task]])


# ---------------------------------------------------------------- Double Q


@dataclass
class QPair:
    q1: MlpNet
    q2: MlpNet
    opt1: AdamState = None
    opt2: AdamState = None

    @classmethod
    def create(cls, state_dim, n_actions, rng, hidden=(64, 64), lr=1e-3):
        q1 = MlpNet.create([state_dim, *hidden, n_actions], rng)
        q2 = MlpNet.create([state_dim, *hidden, n_actions], rng)
        pair = cls(q1, q2)
        pair.reset_optimisers(lr)
        return pair

    def reset_optimisers(self, lr=1e-3):
        self.opt1 = AdamState.for_params(self.q1.params(), lr=lr)
        self.opt2 = AdamState.for_params(self.q2.params(), lr=lr)

    @property
    def nets(self):
        return (self.q1, self.q2)

    @property
    def num_params(self):
        return self.q1.num_params + self.q2.num_params


def select_action(q_nets, s, epsilon, rng):
    """Epsilon-greedy over a randomly designated network (ties -> lowest index)."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    nets = q_nets.nets if isinstance(q_nets, QPair) else q_nets
    i = int(rng.integers(2))
    n_actions = nets[i].out_dim
    if rng.random() < epsilon:
        return int(rng.integers(n_actions))
    return int(np.argmax(nets[i].forward(np.asarray(s, dtype=np.float64))))


def td_loss_and_grads(q_sel, q_eval, batch, gamma):
    """Squared TD error of ``q_sel`` with the Double-Q target and its gradients."""
    s, a, r, s2, done = batch
    n = s.shape[0]
    a = np.asarray(a, dtype=np.int64)
    a_star = np.argmax(q_sel.forward(s2), axis=1)
    q_next = q_eval.forward(s2)[np.arange(n), a_star]
    target = r + gamma * (1.0 - done) * q_next
    out = q_sel.forward(s)
    td = target - out[np.arange(n), a]
    loss = float(np.mean(td * td))
    g = np.zeros_like(out)
    g[np.arange(n), a] = -2.0 * td / n
    grads, _ = q_sel.backward(g)
    return loss, grads


def double_q_update(q_nets, batch, gamma, lr, rng):
    """Update one randomly chosen network; the other one only evaluates."""
    i = int(rng.integers(2))
    nets = q_nets.nets
    opts = (q_nets.opt1, q_nets.opt2)
    loss, grads = td_loss_and_grads(nets[i], nets[1 - i], batch, gamma)
    if not math.isfinite(loss):
        raise NonFiniteLoss(f"non-finite TD loss {loss}")
    opts[i].lr = lr
    adam_step(nets[i].params(), grads, opts[i])
    return loss


# ---------------------------------------------------------------- environment


class PlannerEnv:
    """One high-level step = one high tick of the frozen mid/low stack."""

    def __init__(self, task, world_cfg, mid, low, spec, schedule=None, episode_ticks=20, perturbation=None,
                 weights=TaskRewardWeights(), init_jitter=0.0):
        self.task = task
        self.world_cfg = world_cfg.with_layout()
        self.mid = mid
        self.low = low
        self.spec = spec
        self.schedule = schedule or make_schedule(0.5, 25, 500)
        self.episode_ticks = episode_ticks
        self.perturbation = perturbation
        self.weights = weights
        self.init_jitter = init_jitter
        self.catalog = action_catalog(task, self.world_cfg)
        self.sim = None
        self.runner = None
        self.ticks = 0
        self.log = None
        self.on_mid = None  # optional callable(sim), run after every mid tick

    @property
    def n_actions(self):
        return len(self.catalog)

    @property
    def state_dim(self):
        return STATE_DIM[self.task]

    def _stop(self, sim):
        if self.on_mid is not None:
            self.on_mid(sim)
        return check_termination(sim.world).cause

    def reset(self, seed, init_mode="nominal", log=None):
        world = reset_world(self.task, init_mode, seed, self.world_cfg, jitter=self.init_jitter)
        if self.perturbation is not None:
            world = apply_perturbation(world, self.perturbation)
        self.sim = Simulator(world)
        if hasattr(self.mid, "reset"):
            self.mid.reset()
        if hasattr(self.mid, "manip") and self.mid.manip is not None:
            self.mid.manip.home = world.home.copy()
        self.log = log
        self.runner = Hierarchy(self.schedule, None, self.mid, self.low, self.sim, self.spec, log=log,
                                rng=np.random.default_rng(seed), stop=self._stop)
        self.ticks = 0
        return self.state()

    def state(self):
        return high_state(self.task, self.sim.observe(self.runner.high_command, self.runner.mid_command))

    def flags(self):
        return detect_events(self.sim.world)

    def step(self, action):
        cmd = resolve_action(self.task, self.catalog[action][1], self.sim.world)
        cause = self.runner.high_tick(cmd)
        self.ticks += 1
        flags = self.flags()
        if cause is not None:
            return self.state(), 0.0, True, {"cause": cause, "flags": flags}
        r = task_reward(self.task, flags, self.weights)
        done = False
        info = {"cause": None, "flags": flags}
        if self.task == 2 and flags.ball_past_goal_line:
            done = True
        if self.task == 3 and self.sim.world.box_gone:
            done = True
        if self.ticks >= self.episode_ticks:
            info["cause"] = "time_limit"
        return self.state(), r, done, info

    def success(self):
        f = self.flags()
        if self.task == 1:
            return bool(f.at_goal and f.box_on_table and f.door_open)
        if self.task == 2:
            return bool(f.ball_past_goal_line)
        return bool(self.sim.world.box_gone and self.sim.world.button_pushed)


@dataclass(frozen=True)
class PlannerTrainConfig:
    gamma: float = 0.95
    lr: float = 1e-3
    batch_size: int = 64
    hidden: tuple = (64, 64)
    buffer_size: int = 50_000
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.5
    updates_per_step: int = 4
    warmup: int = 200
    varied_fraction: float = 0.5
    eval_every: int = 500
    eval_episodes: int = 10


def epsilon_at(step, budget, cfg):
    horizon = max(1.0, cfg.eps_fraction * budget)
    frac = min(1.0, step / horizon)
    return cfg.eps_start + frac * (cfg.eps_end - cfg.eps_start)


def run_episode(env, q_nets, seed, epsilon=0.0, init_mode="nominal", log=None, rng=None):
    """One episode; returns (return, success, cause, actions)."""
    rng = rng if rng is not None else np.random.default_rng([seed, 1])
    s = env.reset(seed, init_mode, log=log)
    total, cause, actions = 0.0, None, []
    while True:
        a = select_action(q_nets, s, epsilon, rng)
        actions.append(a)
        s, r, done, info = env.step(a)
        total += r
        if done or info["cause"] == "time_limit":
            cause = info["cause"]
            break
    return total, env.success() and cause not in ("fell", "collision", "self_collision"), cause, actions


def evaluate_planner(env, q_nets, n_episodes, seed):
    rets, wins = [], 0
    for ep in range(n_episodes):
        ret, ok, _, _ = run_episode(env, q_nets, seed * 100_003 + ep)
        rets.append(ret)
        wins += int(ok)
    if n_episodes == 0:
        return 0.0, 0.0
    return float(np.mean(rets)), wins / n_episodes


@dataclass
class PlannerTrainResult:
    q: QPair
    curve: list = field(default_factory=list)  # step, eval_return, success_rate, epsilon


def train_planner(env, cfg=PlannerTrainConfig(), budget=5000, seed=0, curve_path=None, eval_env=None,
                  eval_seed=777):
    """Epsilon-greedy Double-Q training for ``budget`` high-level steps."""
    rng = np.random.default_rng(seed)
    q = QPair.create(env.state_dim, env.n_actions, rng, cfg.hidden, cfg.lr)
    curve = []
    if budget > 0:
        buf = ReplayBuffer(min(cfg.buffer_size, budget), env.state_dim)
        ep = 0

        def new_episode():
            nonlocal ep
            ep += 1
            mode = "varied" if rng.random() < cfg.varied_fraction else "nominal"
            return env.reset(int(rng.integers(2**31)), mode)

        s = new_episode()
        for step in range(1, budget + 1):
            eps = epsilon_at(step, budget, cfg)
            a = select_action(q, s, eps, rng)
            s2, r, done, info = env.step(a)
            buf.add(s, a, r, s2, done)
            s = s2
            if done or info["cause"] == "time_limit":
                s = new_episode()
            if len(buf) >= max(cfg.batch_size, cfg.warmup):
                for _ in range(cfg.updates_per_step):
                    double_q_update(q, buf.sample(cfg.batch_size, rng), cfg.gamma, cfg.lr, rng)
            if cfg.eval_every and (step % cfg.eval_every == 0 or step == budget):
                ret, succ = evaluate_planner(eval_env or env, q, cfg.eval_episodes, eval_seed)
                curve.append({"step": step, "eval_return": ret, "success_rate": succ, "epsilon": eps})
                if eval_env is None:
                    s = new_episode()
    if curve_path is not None:
        from .loco import write_curve

        write_curve(Path(curve_path), curve, ("step", "eval_return", "success_rate", "epsilon"))
    return PlannerTrainResult(q, curve)
