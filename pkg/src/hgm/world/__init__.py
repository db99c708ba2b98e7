"""Planar surrogate robot, task scenery, events and perturbations."""

from .config import JOINTS, N_JOINTS, Disc, Layout, Rect, RobotParams, WorldConfig
from .events import EventFlags, detect_events, nominal_arm_joints, self_collision
from .kinematics import arm_jacobian, forward_kinematics, hand_positions
from .perturb import SCENARIOS, Perturbation, apply_perturbation, scenario
from .physics import step_physics
from .scenes import reset_world
from .sim import Observation, Simulator, contact_loads
from .state import WorldState

__all__ = [
    "JOINTS", "N_JOINTS", "Disc", "Layout", "Rect", "RobotParams", "WorldConfig", "EventFlags", "detect_events",
    "nominal_arm_joints", "self_collision", "arm_jacobian", "forward_kinematics", "hand_positions", "SCENARIOS",
    "Perturbation", "apply_perturbation", "scenario", "step_physics", "reset_world", "Observation", "Simulator",
    "contact_loads", "WorldState",
]
