"""Deterministic discrete-time plant models.

Each plant exposes a pure step function (state, action, params) -> state.
States are plain float64 numpy vectors; index constants in each module name
the components.
"""

from .pendulum import IpParams, ip_step, ip_rhs, ip_closed_loop_step, ip_in_safety_box
from .rover import (
    RoverParams, ObstacleField, generate_obstacle_field, sense, ray_distance,
    rover_step, distance_to_target, braking_distance, min_reading,
    SafetyViolationError, FieldGenerationError,
)
from .pancreas import ApParams, ap_step, ap_rhs

__all__ = [
    "IpParams", "ip_step", "ip_rhs", "ip_closed_loop_step", "ip_in_safety_box",
    "RoverParams", "ObstacleField", "generate_obstacle_field", "sense", "ray_distance",
    "rover_step", "distance_to_target", "braking_distance", "min_reading",
    "SafetyViolationError", "FieldGenerationError",
    "ApParams", "ap_step", "ap_rhs",
]
