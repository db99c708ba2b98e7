"""Build the concrete objects of one run from a RunConfig."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..core import FactorisationSpec, make_schedule
from ..loco import (LOCO_CHANNELS, LocomotionPolicy, LocoRewardWeights, LocoTrainConfig, MidLevel, SacConfig,
                    open_field_config)
from ..lowlevel import ImpedanceController, ImpedanceGains
from ..manip import ManipulationPolicy, MpcConfig
from ..planner import HIGH_CHANNELS, PlannerEnv, PlannerTrainConfig, TaskRewardWeights
from ..world import WorldConfig

MANIP_CHANNELS = ("arm_joint_pos", "arm_joint_vel", "hand_pos_torso", "torso_yaw")
LOW_CHANNELS = ("joint_pos", "joint_vel", "joint_torque", "torque_rate", "motor_current")


def default_spec(task):
    return FactorisationSpec({
        "high": HIGH_CHANNELS[task],
        "loco": LOCO_CHANNELS,
        "manip": MANIP_CHANNELS,
        "low": LOW_CHANNELS,
    }).validate()


def schedule_of(cfg):
    s = cfg.schedule
    return make_schedule(s.freq_high, s.freq_mid, s.freq_low)


def world_config(cfg, task=None):
    w = cfg.world
    sch = schedule_of(cfg)
    return WorldConfig(
        task=cfg.run.task if task is None else task,
        dt=sch.dt,
        friction_coeff=w.friction_coeff,
        contact_stiffness=w.contact_stiffness,
        grasp_radius=w.grasp_radius,
        door_open_time=w.door_open_time,
        door_open_fraction=w.door_open_fraction,
        joint_nominal_tol=w.joint_nominal_tol,
        sway_amplitude=w.sway_amplitude,
        gait_frequency=w.gait_frequency,
    ).with_layout()


def loco_world_config(cfg):
    """Open floor with the run's world parameters, for locomotion training."""
    return replace(world_config(cfg, 1), task=0, layout=open_field_config().layout)


def gains_of(cfg, robot):
    g = cfg.gains
    kp1 = np.asarray(g.kp1, dtype=np.float64)
    if g.kd1:
        kd1 = np.asarray(g.kd1, dtype=np.float64)
    else:
        inertia = np.array([robot.base_mass, robot.base_mass, robot.base_inertia, robot.torso_inertia]
                           + [robot.arm_inertia] * 4)
        kd1 = 2.0 * np.sqrt(kp1 * inertia)
    n = len(kp1)
    return ImpedanceGains(kp1, kd1, np.full(n, float(g.kp2)), np.full(n, float(g.kd2)))


def mpc_config(cfg):
    m = cfg.mpc
    return MpcConfig(tf=m.tf, n_steps=m.n_steps, p_bounds=(-m.p_bound, m.p_bound), v_bounds=(-m.v_bound, m.v_bound),
                     a_bounds=(-m.a_bound, m.a_bound))


def sac_config(cfg):
    s = cfg.sac
    return SacConfig(alpha=s.alpha, gamma=s.gamma, lr=s.lr, batch_size=s.batch_size,
                     target_smoothing=s.target_smoothing, hidden=tuple(s.hidden))


def loco_reward(cfg):
    r = cfg.rewards
    return LocoRewardWeights(w_imitation=r.w_imitation, w_task=r.w_task, joint=r.imitation[0],
                             pose_imitation=r.imitation[1], contact=r.imitation[2], pose_task=r.task_terms[0],
                             goal=r.task_terms[1], vel=r.task_terms[2], torque=r.task_terms[3])


def loco_train_config(cfg):
    lc = cfg.loco
    return LocoTrainConfig(sac=sac_config(cfg), reward=loco_reward(cfg), episode_steps=lc.episode_steps,
                           target_radius=lc.target_radius, success_radius=lc.success_radius,
                           warmup_steps=lc.warmup_steps, eval_every=lc.eval_every, eval_episodes=lc.eval_episodes,
                           ratio_low_per_mid=schedule_of(cfg).ratio_low_per_mid)


def task_weights(cfg):
    r = cfg.rewards
    return TaskRewardWeights(task1=tuple(r.task1), task2=float(r.task2), task3=tuple(r.task3))


def planner_train_config(cfg):
    p = cfg.planner
    return PlannerTrainConfig(gamma=p.gamma, lr=p.lr, batch_size=p.batch_size, hidden=tuple(p.hidden),
                              eps_start=p.eps_start, eps_end=p.eps_end, eps_fraction=p.eps_fraction,
                              updates_per_step=p.updates_per_step, warmup=p.warmup,
                              varied_fraction=p.varied_fraction, eval_every=p.eval_every,
                              eval_episodes=p.eval_episodes)


def build_mid_low(cfg, policy_net, world_cfg=None):
    wc = world_cfg or world_config(cfg)
    robot = wc.robot
    loco = LocomotionPolicy(policy_net, sac_config(cfg), mode="mean")
    manip = ManipulationPolicy(robot, mpc_config(cfg))
    mid = MidLevel(loco, manip, robot)
    low = ImpedanceController(gains_of(cfg, robot), robot)
    return mid, low


def planner_env(cfg, policy_net, task=None, perturbation=None, jitter=0.0):
    task = cfg.run.task if task is None else task
    wc = world_config(cfg, task)
    mid, low = build_mid_low(cfg, policy_net, wc)
    return PlannerEnv(task, wc, mid, low, default_spec(task), schedule=schedule_of(cfg),
                      episode_ticks=cfg.planner.episode_ticks, perturbation=perturbation, weights=task_weights(cfg),
                      init_jitter=jitter)


def with_task(cfg, task):
    return replace(cfg, run=replace(cfg.run, task=task))
