from __future__ import annotations

import numpy as np

from ..manip import ik_2link
from .config import N_JOINTS, WorldConfig
from .events import nominal_arm_joints
from .kinematics import hand_positions, rot, torso_yaw_world
from .state import WorldState

VARIED_CLASSES = {1: ("second_table", "front_of_door", "near_goal"), 2: ("varied",), 3: ("varied",)}


def arm_joints_for(robot, hands):
    """IK for both hands given torso-frame positions."""
    q = []
    for arm in (0, 1):
        sx, sy = robot.shoulder_offsets[arm]
        hx, hy = hands[arm]
        j = 4 + 2 * arm
        limits = ((robot.lower[j], robot.upper[j]), (robot.lower[j + 1], robot.upper[j + 1]))
        q.extend(ik_2link((hx - sx, hy - sy), robot.link_lengths, limits, robot.elbow_branch[arm]))
    return np.array(q)


def _base_state(cfg, pelvis, yaw=0.0):
    q = np.zeros(N_JOINTS)
    q[0], q[1], q[2] = pelvis[0], pelvis[1], yaw
    q[4:8] = nominal_arm_joints(cfg.robot)
    s = WorldState(cfg=cfg, q=q, qd=np.zeros(N_JOINTS), friction_coeff=cfg.friction_coeff)
    s.home = np.array(pelvis, dtype=np.float64)
    lay = cfg.layout
    if lay.box_start is not None:
        s.box_pos = np.array(lay.box_start[:2], dtype=np.float64)
        s.box_yaw = float(lay.box_start[2])
    if lay.ball_start is not None:
        s.ball_pos = np.array(lay.ball_start, dtype=np.float64)
    if lay.conveyors:
        s.conveyor_active = [False] * len(lay.conveyors)
    return s


def attach_box(s):
    """Put the box between the hands and mark it grasped."""
    lh, rh = hand_positions(s)
    yaw = torso_yaw_world(s)
    s.box_pos = 0.5 * (lh + rh)
    s.box_yaw = yaw
    s.box_attached = True
    s.box_offset = np.zeros(2)
    s.box_yaw_offset = 0.0
    return s


def reset_world(task=1, init_mode="nominal", seed=0, cfg=None, jitter=0.0):
    """Initial state for ``task``.

    ``varied`` draws uniformly among the task's waypoint classes. ``jitter``
    adds a uniform offset of that half-width to the start position.
    """
    cfg = (cfg or WorldConfig(task=task)).with_layout()
    if cfg.task != task:
        raise ValueError(f"config is for task {cfg.task}, not {task}")
    if init_mode not in ("nominal", "varied"):
        raise ValueError(f"unknown init mode {init_mode!r}")
    rng = np.random.default_rng(seed)
    lay = cfg.layout
    wp = lay.waypoints
    cls = "nominal"
    if init_mode == "varied":
        classes = VARIED_CLASSES[task]
        cls = classes[int(rng.integers(len(classes)))]

    if task == 1 and cls != "nominal":
        delivered = np.array([lay.delivery.center[0] - 0.2, lay.delivery.center[1]])
        if cls == "second_table":
            s = _base_state(cfg, wp["delivery"])
            s.q[4:8] = arm_joints_for(cfg.robot, cfg.robot.grasp_hands)
            attach_box(s)
        elif cls == "front_of_door":
            s = _base_state(cfg, wp["door"])
            s.box_pos = delivered
        else:
            s = _base_state(cfg, wp["beyond_door"])
            s.box_pos = delivered
            s.button_pushed = True
            s.door_angle = cfg.door_max
        s.box_yaw = 0.0
    elif task == 2 and cls != "nominal":
        start = np.array([rng.uniform(0.5, 2.0), rng.uniform(-1.0, 1.0)])
        s = _base_state(cfg, start)
        s.ball_pos = s.ball_pos + rng.uniform(-0.3, 0.3, size=2)
    elif task == 3 and cls != "nominal":
        s = _base_state(cfg, lay.start)
        s.q[3] = rng.uniform(-np.pi / 4, np.pi / 4)
    else:
        s = _base_state(cfg, lay.start)

    if jitter > 0:
        d = rng.uniform(-jitter, jitter, size=2)
        s.q[0:2] += d
        s.home = s.home + d
        if s.box_attached:
            s.box_pos = s.box_pos + d
    s.init_class = cls
    return s


def relative_to_torso(s, p):
    """World point ``p`` in the torso frame (base centre origin)."""
    return rot(-torso_yaw_world(s), np.asarray(p) - s.q[0:2])
