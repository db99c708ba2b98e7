"""Semi-implicit Euler integration of the planar robot and its scene.

Contacts are penalty springs with critical damping. Actuated base forces go
through the feet, so they saturate at the traction limit ``mu * m * g``;
external forces (pushes, slope bias) do not. The arithmetic lives in the
compiled :mod:`.kernel`.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionMismatch
from . import kernel
from .config import N_JOINTS


def door_blocking(state):
    cfg = state.cfg
    return state.layout.door is not None and state.door_angle < cfg.door_open_fraction * cfg.door_max


def step_physics(world, joint_torques, base_forces=None, dt=None, inplace=False):
    """Advance ``world`` by one step under realised actuator torques.

    ``base_forces`` is an external (fx, fy, torque) wrench on the base. Returns
    the new state; the input is left untouched unless ``inplace`` is set.
    """
    tau = np.asarray(joint_torques, dtype=np.float64)
    if tau.shape != (N_JOINTS,):
        raise DimensionMismatch(f"expected {N_JOINTS} joint torques, got shape {tau.shape}")
    ext = np.zeros(3) if base_forces is None else np.asarray(base_forces, dtype=np.float64).reshape(3)
    s = world if inplace else world.copy()
    if dt is not None and dt != s.cfg.dt:
        from dataclasses import replace

        s.cfg = replace(s.cfg, dt=float(dt))
    kernel.step(s, tau, ext)
    return s
