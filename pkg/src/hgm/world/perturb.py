"""Robustness perturbations: push, slippery floor, slope, lesion, movable obstacle."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import UnknownActuator
from .config import GRAVITY, JOINTS

KINDS = ("push", "friction", "incline", "lesion", "obstacle")


@dataclass(frozen=True)
class Perturbation:
    """One perturbation.

    ``magnitude`` means: push force (N), friction coefficient, incline angle
    (degrees), obstacle mass (kg). Lesions name the actuator instead.
    Onset and duration are in low-level ticks.
    """

    kind: str
    magnitude: float = 0.0
    direction: tuple = (1.0, 0.0)
    onset: int = 0
    duration: int = 0
    actuator: str | None = None
    position: tuple | None = None
    radius: float = 0.15

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "lesion" and self.actuator not in JOINTS:
            raise UnknownActuator(self.actuator)
        if self.kind == "friction" and self.magnitude <= 0:
            raise ValueError("friction coefficient must be positive")
        if self.kind == "obstacle" and (self.position is None or self.magnitude <= 0):
            raise ValueError("obstacle needs a position and a positive mass")

    def unit_direction(self):
        d = np.asarray(self.direction, dtype=np.float64)
        n = float(np.hypot(d[0], d[1]))
        return d / n if n > 0 else np.zeros(2)

    def active(self, tick):
        return self.onset <= tick < self.onset + self.duration


def apply_perturbation(world, p):
    """Return a copy of ``world`` with ``p`` installed."""
    if p.kind == "lesion" and p.actuator not in JOINTS:
        raise UnknownActuator(p.actuator)
    w = world.copy()
    if p.kind == "push":
        if p.magnitude != 0.0 and p.duration > 0:
            w.pushes.append(p)
    elif p.kind == "friction":
        w.friction_coeff = float(p.magnitude)
    elif p.kind == "incline":
        theta = math.radians(p.magnitude)
        w.bias_force = w.cfg.robot.base_mass * GRAVITY * math.sin(theta) * p.unit_direction()
    elif p.kind == "lesion":
        w.actuator_mask[JOINTS.index(p.actuator)] = 0.0
        w.tau[JOINTS.index(p.actuator)] = 0.0
    elif p.kind == "obstacle":
        w.obstacle_pos = np.vstack([w.obstacle_pos, np.asarray(p.position, dtype=np.float64)[None, :]])
        w.obstacle_vel = np.vstack([w.obstacle_vel, np.zeros((1, 2))])
        w.obstacle_mass = np.append(w.obstacle_mass, float(p.magnitude))
        w.obstacle_radius = np.append(w.obstacle_radius, float(p.radius))
    return w


def push_force(world):
    """External base wrench from the pushes active at the current tick."""
    f = np.zeros(3)
    for p in world.pushes:
        if p.active(world.tick):
            f[0:2] += p.magnitude * p.unit_direction()
    return f


def scenario(name, task=1, onset=1500):
    """The standard perturbation for a named evaluation scenario (``None`` for baseline)."""
    if name == "baseline":
        return None
    if name == "push":
        return Perturbation("push", magnitude=150.0, direction=(1.0, 0.0), onset=onset, duration=150)
    if name == "friction":
        return Perturbation("friction", magnitude=0.3)
    if name == "incline":
        return Perturbation("incline", magnitude=5.0, direction=(0.0, -1.0))
    if name == "lesion":
        return Perturbation("lesion", actuator="base_yaw")
    if name == "obstacle":
        pos = (1.4, -0.75) if task == 1 else (2.0, 0.0)
        return Perturbation("obstacle", magnitude=5.0, position=pos, radius=0.15)
    raise ValueError(f"unknown scenario {name!r}")


SCENARIOS = ("baseline", "push", "friction", "incline", "lesion", "obstacle")
