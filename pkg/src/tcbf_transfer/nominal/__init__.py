"""Nominal policy: RRT* path, minimum-snap reference, SE(3) tracking."""

from .minsnap import PolyTrajectory, allocate_times, desired_yaw, eval_traj, min_snap, snap_cost
from .planner import PlannerConfig, PlanningError, rrt_star
from .se3 import ControllerError, Reference, Se3Gains, se3_control

__all__ = [
    "PolyTrajectory", "allocate_times", "desired_yaw", "eval_traj", "min_snap", "snap_cost",
    "PlannerConfig", "PlanningError", "rrt_star",
    "ControllerError", "Reference", "Se3Gains", "se3_control",
]
