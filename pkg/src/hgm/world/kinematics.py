from __future__ import annotations

import math

import numpy as np


def rot(theta, v):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def forward_kinematics(arm_joints, link_lengths, base_pose=(0.0, 0.0, 0.0)):
    """Tip of a planar two-link chain mounted at ``base_pose = (x, y, yaw)``."""
    q1, q2 = float(arm_joints[0]), float(arm_joints[1])
    l1, l2 = link_lengths
    x = l1 * math.cos(q1) + l2 * math.cos(q1 + q2)
    y = l1 * math.sin(q1) + l2 * math.sin(q1 + q2)
    bx, by, byaw = base_pose
    c, s = math.cos(byaw), math.sin(byaw)
    return np.array([bx + c * x - s * y, by + s * x + c * y])


def arm_jacobian(arm_joints, link_lengths):
    q1, q2 = float(arm_joints[0]), float(arm_joints[1])
    l1, l2 = link_lengths
    s1, c1 = math.sin(q1), math.cos(q1)
    s12, c12 = math.sin(q1 + q2), math.cos(q1 + q2)
    return np.array([[-l1 * s1 - l2 * s12, -l2 * s12], [l1 * c1 + l2 * c12, l2 * c12]])


def torso_yaw_world(state):
    return float(state.q[2] + state.q[3])


def shoulder_pose(state, arm):
    """World pose of the shoulder of ``arm`` (0 left, 1 right)."""
    yaw = torso_yaw_world(state)
    off = state.cfg.robot.shoulder_offsets[arm]
    p = state.q[0:2] + rot(yaw, off)
    return (float(p[0]), float(p[1]), yaw)


def hand_positions(state):
    r = state.cfg.robot
    lh = forward_kinematics(state.q[4:6], r.link_lengths, shoulder_pose(state, 0))
    rh = forward_kinematics(state.q[6:8], r.link_lengths, shoulder_pose(state, 1))
    return lh, rh


def hands_in_torso(state):
    """Hand tips relative to the torso frame origin (base centre), torso axes."""
    r = state.cfg.robot
    out = []
    for arm, sl in ((0, slice(4, 6)), (1, slice(6, 8))):
        sx, sy = r.shoulder_offsets[arm]
        out.append(forward_kinematics(state.q[sl], r.link_lengths, (sx, sy, 0.0)))
    return out
