from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .config import N_JOINTS, WorldConfig


@dataclass
class WorldState:
    """Complete simulation state.

    ``q``/``qd`` hold the eight generalised coordinates: the base pose (x, y,
    yaw) as three virtual joints, torso yaw, and two joints per arm.
    """

    cfg: WorldConfig
    q: np.ndarray
    qd: np.ndarray
    tau: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))  # realised actuator torque
    tau_rate: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))  # low-passed d(tau)/dt
    current: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))
    actuator_mask: np.ndarray = field(default_factory=lambda: np.ones(N_JOINTS))
    tick: int = 0
    phase: float = 0.0  # gait phase angle in [0, 2*pi)
    home: np.ndarray = field(default_factory=lambda: np.zeros(2))
    # scene
    box_pos: np.ndarray | None = None
    box_yaw: float = 0.0
    box_attached: bool = False
    box_offset: np.ndarray = field(default_factory=lambda: np.zeros(2))  # torso frame, from hand midpoint
    box_yaw_offset: float = 0.0
    box_gone: bool = False
    door_angle: float = 0.0
    button_pushed: bool = False
    conveyor_active: list = field(default_factory=list)
    ball_pos: np.ndarray | None = None
    ball_vel: np.ndarray = field(default_factory=lambda: np.zeros(2))
    ball_touching: bool = False
    obstacle_pos: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    obstacle_vel: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    obstacle_mass: np.ndarray = field(default_factory=lambda: np.zeros(0))
    obstacle_radius: np.ndarray = field(default_factory=lambda: np.zeros(0))
    friction_coeff: float = 1.0
    bias_force: np.ndarray = field(default_factory=lambda: np.zeros(2))
    pushes: list = field(default_factory=list)  # active/pending Perturbation objects of kind "push"
    penetration: dict = field(default_factory=dict)  # deepest static overlap per obstacle kind, last step
    init_class: str = "nominal"

    @property
    def layout(self):
        return self.cfg.layout

    @property
    def base_pose(self):
        return self.q[0:3]

    @property
    def base_velocity(self):
        return self.qd[0:3]

    @property
    def arm_joint_positions(self):
        return self.q[4:8]

    @property
    def arm_joint_velocities(self):
        return self.qd[4:8]

    @property
    def torso_yaw(self):
        return float(self.q[3])

    @property
    def gait_phase(self):
        return np.array([np.cos(self.phase), np.sin(self.phase)])

    def copy(self):
        new = copy.copy(self)
        for name in ("q", "qd", "tau", "tau_rate", "current", "actuator_mask", "home", "box_offset", "ball_vel",
                     "obstacle_pos", "obstacle_vel", "obstacle_mass", "obstacle_radius", "bias_force"):
            setattr(new, name, getattr(self, name).copy())
        new.box_pos = None if self.box_pos is None else self.box_pos.copy()
        new.ball_pos = None if self.ball_pos is None else self.ball_pos.copy()
        new.conveyor_active = list(self.conveyor_active)
        new.pushes = list(self.pushes)
        new.penetration = dict(self.penetration)
        return new

    def vector(self):
        """Flat float vector of every dynamic quantity (used for replay and divergence checks)."""
        parts = [self.q, self.qd, self.tau, self.tau_rate, [self.phase, self.door_angle, self.box_yaw,
                                                            float(self.box_attached), float(self.button_pushed)]]
        if self.box_pos is not None:
            parts.append(self.box_pos)
        if self.ball_pos is not None:
            parts.extend((self.ball_pos, self.ball_vel))
        parts.extend((self.obstacle_pos.ravel(), self.obstacle_vel.ravel()))
        return np.concatenate([np.asarray(p, dtype=np.float64).ravel() for p in parts])

    def is_finite(self):
        return bool(np.all(np.isfinite(self.vector())))
