"""Robot and scene parameters for the planar surrogate.

Coordinates are metres in a top-down world frame. The robot faces +x at zero
yaw; its arms are mounted on a torso that can yaw relative to the base.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

JOINTS = ("base_x", "base_y", "base_yaw", "torso_yaw", "l_shoulder", "l_elbow", "r_shoulder", "r_elbow")
BASE = slice(0, 3)
ARMS = slice(4, 8)
TORSO = 3
N_JOINTS = len(JOINTS)
GRAVITY = 9.81


@dataclass(frozen=True)
class Rect:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def contains(self, p):
        return self.xmin <= p[0] <= self.xmax and self.ymin <= p[1] <= self.ymax

    @property
    def center(self):
        return np.array([(self.xmin + self.xmax) / 2, (self.ymin + self.ymax) / 2])


@dataclass(frozen=True)
class Disc:
    x: float
    y: float
    radius: float

    def contains(self, p):
        return (p[0] - self.x) ** 2 + (p[1] - self.y) ** 2 <= self.radius**2

    @property
    def center(self):
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Layout:
    """Static scenery plus the named robot poses used by resets and actions."""

    task: int
    bounds: Rect
    tables: tuple = ()  # (name, Rect)
    walls: tuple = ()  # Rect
    door: Rect | None = None
    button: Disc | None = None
    goal: Disc | None = None
    delivery: Rect | None = None  # table that counts for box_on_table
    conveyors: tuple = ()  # Rect, index 1 is the send-away belt
    conveyor_velocity: tuple = (0.0, -0.25)
    box_start: tuple | None = None  # (x, y, yaw)
    ball_start: tuple | None = None
    goal_line_x: float | None = None
    goal_half_width: float = 1.0
    passed_line_y: float | None = None  # pelvis y below this => passed the delivery table
    start: tuple = (0.0, 0.0)
    waypoints: dict = field(default_factory=dict)

    def statics(self):
        rects = [r for _, r in self.tables] + list(self.walls)
        return rects


def _room_walls(b, t=0.1):
    return (
        Rect(b.xmin - t, b.xmax + t, b.ymin - t, b.ymin),
        Rect(b.xmin - t, b.xmax + t, b.ymax, b.ymax + t),
        Rect(b.xmin - t, b.xmin, b.ymin, b.ymax),
        Rect(b.xmax, b.xmax + t, b.ymin, b.ymax),
    )


def task1_layout():
    bounds = Rect(0.0, 3.0, -4.0, 2.8)
    table1 = Rect(1.85, 2.55, 1.15, 1.85)
    table2 = Rect(1.85, 2.55, -0.35, 0.35)
    post = Rect(1.90, 2.20, -1.55, -1.25)
    door_wall = (Rect(0.0, 0.75, -2.05, -1.95), Rect(1.95, 3.0, -2.05, -1.95))
    return Layout(
        task=1,
        bounds=bounds,
        tables=(("pickup", table1), ("delivery", table2), ("button_post", post)),
        walls=_room_walls(bounds) + door_wall,
        door=Rect(0.75, 1.95, -2.05, -1.95),
        button=Disc(1.90, -1.40, 0.06),
        goal=Disc(1.35, -3.0, 0.3),
        delivery=table2,
        box_start=(2.0, 1.5, 0.0),
        passed_line_y=-0.35,
        start=(1.0, 2.2),
        waypoints={
            "pickup": (1.45, 1.5),
            "delivery": (1.45, 0.0),
            "button": (1.40, -1.4),
            "door": (1.35, -1.5),
            "goal": (1.35, -3.0),
            "beyond_door": (1.35, -2.45),
            "start": (1.0, 2.2),
            "midway": (1.2, 0.8),
        },
    )


def task2_layout():
    bounds = Rect(0.0, 8.0, -3.0, 3.0)
    return Layout(
        task=2,
        bounds=bounds,
        walls=_room_walls(bounds),
        ball_start=(3.0, 0.0),
        goal_line_x=6.5,
        goal_half_width=1.0,
        start=(1.0, 0.0),
        waypoints={"start": (1.0, 0.0)},
    )


def task3_layout():
    bounds = Rect(-1.5, 1.5, -2.5, 2.5)
    c = np.cos(np.pi / 4) * 0.55
    belt1 = Rect(0.25, 0.75, 0.25, 1.8)
    belt2 = Rect(0.25, 0.75, -1.8, -0.25)
    return Layout(
        task=3,
        bounds=bounds,
        tables=(("belt1", belt1), ("belt2", belt2)),
        walls=_room_walls(bounds),
        conveyors=(belt1, belt2),
        button=Disc(0.1414, -0.5657, 0.06),
        delivery=belt2,
        box_start=(c, c, np.pi / 4),
        start=(0.0, 0.0),
        waypoints={"start": (0.0, 0.0)},
    )


LAYOUTS = {1: task1_layout, 2: task2_layout, 3: task3_layout}


@dataclass(frozen=True)
class RobotParams:
    base_mass: float = 40.0
    base_inertia: float = 4.0
    body_radius: float = 0.22
    torso_inertia: float = 1.0
    arm_inertia: float = 0.05
    lin_damping: float = 20.0  # viscous ground drag on the base, N s/m
    ang_damping: float = 2.0
    joint_damping: float = 0.05
    foot_lever: float = 0.15  # traction torque arm for base yaw
    link_lengths: tuple = (0.3, 0.3)
    shoulder_offsets: tuple = ((0.0, 0.2), (0.0, -0.2))
    # Hard stops for torso and arms; base x/y limited by the room, yaw by the fall test.
    lower: tuple = (-50.0, -50.0, -0.6, -1.2, -0.5, -2.6, -2.0, 0.0)
    upper: tuple = (50.0, 50.0, 0.6, 1.2, 2.0, 0.0, 0.5, 2.6)
    torque_limit: tuple = (600.0, 600.0, 60.0, 100.0, 30.0, 30.0, 30.0, 30.0)
    motor_constant: float = 200.0  # torque slew per unit current, N m / (A s)
    current_limit: tuple = (1200.0, 1200.0, 120.0, 200.0, 60.0, 60.0, 60.0, 60.0)
    torque_rate_cutoff_hz: float = 100.0
    elbow_branch: tuple = ("up", "down")  # left arm bends outward (+y), right arm outward (-y)
    nominal_hands: tuple = ((0.30, 0.28), (0.30, -0.28))  # torso frame
    grasp_hands: tuple = ((0.55, 0.15), (0.55, -0.15))
    open_hands: tuple = ((0.55, 0.32), (0.55, -0.32))


@dataclass(frozen=True)
class WorldConfig:
    task: int = 1
    dt: float = 0.002
    robot: RobotParams = field(default_factory=RobotParams)
    friction_coeff: float = 1.0
    contact_stiffness: float = 2.0e4
    grasp_radius: float = 0.05
    box_half: float = 0.15
    door_max: float = np.pi / 2
    door_open_time: float = 2.0
    door_open_fraction: float = 0.8
    joint_nominal_tol: float = 0.1
    gait_frequency: float = 0.8
    sway_amplitude: float = 0.03
    ball_radius: float = 0.11
    ball_mass: float = 0.45
    ball_damping: float = 0.3
    restitution: float = 0.8
    obstacle_friction: float = 0.5
    fall_yaw: float = 1.0
    fall_spin: float = 4.0
    fall_speed: float = 4.0
    penetration_tol: float = 0.03
    layout: Layout | None = None

    def with_layout(self):
        if self.layout is not None:
            return self
        from dataclasses import replace

        return replace(self, layout=LAYOUTS[self.task]())

    @property
    def inertia(self):
        r = self.robot
        return np.array([r.base_mass, r.base_mass, r.base_inertia, r.torso_inertia] + [r.arm_inertia] * 4)
