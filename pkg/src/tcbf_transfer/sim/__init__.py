"""Closed-loop simulation, metrics and invariant audits."""

from .engine import Plan, plan, quad_step, rk4_step, run
from .log import TrajectoryLog
from .scenario import Scenario, ScenarioError

__all__ = ["Plan", "plan", "quad_step", "rk4_step", "run", "TrajectoryLog", "Scenario", "ScenarioError"]
