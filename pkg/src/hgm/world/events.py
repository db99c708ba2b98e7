from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import numpy as np

from ..manip import ik_2link
from .kinematics import hand_positions


@dataclass(frozen=True)
class EventFlags:
    passed_table: bool = False
    joints_nominal: bool = False
    box_in_hands: bool = False
    box_on_table: bool = False
    door_open: bool = False
    at_goal: bool = False
    ball_past_goal_line: bool = False
    box_on_conveyor: bool = False
    button_pushed: bool = False

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def vector(self):
        return np.array(astuple(self), dtype=np.float64)


_NOMINAL_CACHE = {}


def nominal_arm_joints(robot):
    """Joint angles that put both hands at the nominal torso-frame positions."""
    key = (robot.link_lengths, robot.shoulder_offsets, robot.nominal_hands, robot.elbow_branch, robot.lower, robot.upper)
    if key not in _NOMINAL_CACHE:
        q = []
        for arm in (0, 1):
            sx, sy = robot.shoulder_offsets[arm]
            hx, hy = robot.nominal_hands[arm]
            lo = robot.lower[4 + 2 * arm: 6 + 2 * arm]
            hi = robot.upper[4 + 2 * arm: 6 + 2 * arm]
            q.extend(ik_2link((hx - sx, hy - sy), robot.link_lengths, list(zip(lo, hi)), robot.elbow_branch[arm]))
        _NOMINAL_CACHE[key] = np.array(q)
    return _NOMINAL_CACHE[key]


def detect_events(world, task=None):
    """Boolean task predicates; a pure function of the state."""
    cfg = world.cfg
    lay = world.layout
    task = lay.task if task is None else task
    pelvis = world.q[0:2]
    nominal = nominal_arm_joints(cfg.robot)
    joints_nominal = bool(np.all(np.abs(world.q[4:8] - nominal) <= cfg.joint_nominal_tol))
    in_hands = bool(world.box_attached)
    box = world.box_pos
    on_table = bool(box is not None and not in_hands and not world.box_gone and lay.delivery is not None
                    and lay.delivery.contains(box))
    passed = bool(lay.passed_line_y is not None and pelvis[1] < lay.passed_line_y)
    door_open = bool(lay.door is not None and world.door_angle >= cfg.door_open_fraction * cfg.door_max)
    at_goal = bool(lay.goal is not None and lay.goal.contains(pelvis))
    ball = False
    if world.ball_pos is not None and lay.goal_line_x is not None:
        ball = bool(world.ball_pos[0] > lay.goal_line_x and abs(world.ball_pos[1]) <= lay.goal_half_width)
    on_conveyor = bool(task == 3 and on_table)
    return EventFlags(
        passed_table=passed if task == 1 else False,
        joints_nominal=joints_nominal,
        box_in_hands=in_hands,
        box_on_table=on_table if task == 1 else False,
        door_open=door_open,
        at_goal=at_goal,
        ball_past_goal_line=ball,
        box_on_conveyor=on_conveyor,
        button_pushed=bool(world.button_pushed),
    )


def self_collision(world, min_gap=0.04):
    lh, rh = hand_positions(world)
    if math.hypot(*(lh - rh)) < min_gap:
        return True
    r = world.cfg.robot.body_radius - 0.02
    c = world.q[0:2]
    return bool(math.hypot(*(lh - c)) < r or math.hypot(*(rh - c)) < r)
