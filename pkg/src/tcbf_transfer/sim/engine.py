"""Closed-loop simulation: plan, min-snap, SE(3) tracking, optional tCBF filter."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .. import abstraction as ab
from .. import tcbf
from ..nominal.minsnap import PolyTrajectory, allocate_times, desired_yaw, eval_traj, initial_yaw, min_snap
from ..nominal.planner import rrt_star
from ..nominal.se3 import Reference, se3_control
from ..quadrotor import E3, ConcreteState, QuadParams, dynamics_vec, motor_mixing, reorthonormalize, rot_z
from ..simfn import SimulationCertificate
from .log import STATUS_CODES, TrajectoryLog, column_names
from .scenario import Scenario

log = logging.getLogger(__name__)


def rk4_step(f, x, u, dt: float) -> np.ndarray:
    """Classical RK4 with u held constant over the step."""
    k1 = f(x, u)
    k2 = f(x + 0.5 * dt * k1, u)
    k3 = f(x + 0.5 * dt * k2, u)
    k4 = f(x + dt * k3, u)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _fix_rotation(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    x[6:15] = reorthonormalize(x[6:15].reshape(3, 3)).reshape(-1)
    return x


def quad_step(params: QuadParams, x, u, dt: float) -> np.ndarray:
    """One RK4 step of the 18-state quadrotor followed by re-orthonormalisation."""
    return _fix_rotation(rk4_step(lambda s, w: dynamics_vec(params, s, w), np.asarray(x, float),
                                  np.asarray(u, float), dt))


def joint_dynamics(params: QuadParams, cert: SimulationCertificate):
    """Vector field on (x2, x1) in R^24 with the shadow driven by u1 = F."""
    Kp, Kv = cert.gains.Kp, cert.gains.Kv

    def f(x, u):
        x2, x1 = x[:18], x[18:]
        d2 = dynamics_vec(params, x2, u)
        R = x2[6:15].reshape(3, 3)
        u1 = (u[0] / params.m) * R[:, 2] - params.g * E3 + Kp @ (x2[0:3] - x1[0:3]) + Kv @ (x2[3:6] - x1[3:6])
        return np.concatenate([d2, x1[3:6], u1])

    return f


@dataclass(frozen=True)
class Plan:
    waypoints: np.ndarray
    trajectory: PolyTrajectory


def plan(scenario: Scenario) -> Plan:
    wp = rrt_star(scenario.planner, scenario.start, scenario.goal, list(scenario.obstacles))
    traj = min_snap(wp, allocate_times(wp, scenario.avg_speed), boundary_order=scenario.boundary_order)
    return Plan(wp, traj)


def _clearances(p: np.ndarray, obstacles) -> tuple[float, float]:
    if not obstacles:
        return np.inf, np.inf
    d = [float(np.linalg.norm(p - o.center)) for o in obstacles]
    return (min(di - o.geometric_radius for di, o in zip(d, obstacles)),
            min(di - o.rho for di, o in zip(d, obstacles)))


def run(scenario: Scenario, nominal_plan: Plan | None = None) -> TrajectoryLog:
    """Simulate ``scenario`` and return the full log (deterministic)."""
    nominal_plan = nominal_plan or plan(scenario)
    traj = nominal_plan.trajectory
    params = scenario.quad
    barrier = scenario.barrier()
    cert = barrier.cert
    obstacles = list(scenario.obstacles)
    n_obs = len(obstacles)
    tracked = scenario.witness_mode == "tracked"
    filtered = scenario.mode == "filtered"
    dt = scenario.dt
    N = scenario.n_steps

    yaw = initial_yaw(traj)
    x2_0 = ConcreteState(np.asarray(scenario.start), np.zeros(3), rot_z(yaw), np.zeros(3))
    if tracked:
        x1_0 = np.concatenate([x2_0.p2 - np.asarray(scenario.tracked_offset_p),
                               x2_0.v2 - np.asarray(scenario.tracked_offset_v)])
        x = np.concatenate([x2_0.as_vector(), x1_0])
        fjoint = joint_dynamics(params, cert)
    else:
        x = x2_0.as_vector()

    cols = column_names(n_obs)
    data = np.zeros((N + 1, len(cols)))
    prev_Rd = None
    slack_events = 0
    for k in range(N + 1):
        t = k * dt
        x2 = ConcreteState.from_vector(x[:18])
        x1 = ab.AbstractState.from_vector(x[18:24]) if tracked else None
        yaw = desired_yaw(traj, t, yaw)
        ref = Reference(eval_traj(traj, t, 0), eval_traj(traj, t, 1), eval_traj(traj, t, 2), yaw)
        ctrl = se3_control(params, scenario.controller, x2, ref, prev_Rd, dt)
        prev_Rd = ctrl.Rd
        u_nom = ctrl.wrench
        if filtered:
            fr = tcbf.filter(barrier, params, x2, u_nom, x1)
            rows, u_cmd = fr.rows, fr.u
            mask, interv, slack, status = fr.active_mask, fr.intervention, fr.slack, STATUS_CODES[fr.status]
            slack_events += fr.status == "slack"
        else:
            rows = tuple(tcbf.constraint_row(barrier, params, x2, o, x1) for o in obstacles)
            u_cmd = u_nom
            mask, interv, slack, status = 0, 0.0, 0.0, 0
        mix = motor_mixing(params, u_cmd)
        u_real = mix.realized
        xw = x1 if tracked else ab.AbstractState(x2.p2, x2.v2)
        b1s = [r.b1 for r in rows]
        b2s = [r.b2 for r in rows]
        hs = [ab.h(xw, o) for o in obstacles]
        V = rows[0].V if rows else 0.0
        phi = rows[0].phi if rows else 0.0
        dphi = rows[0].dphi if rows else 0.0
        true_c, infl_c = _clearances(x2.p2, obstacles)
        x1v = x[18:24] if tracked else x[:6]
        data[k] = np.concatenate([
            [t], x[:18], ref.p, ref.v, [yaw],
            u_nom.as_vector(), u_cmd.as_vector(), u_real.as_vector(), mix.omega_sq, [float(mix.saturated)],
            x1v, [V, phi, dphi], b1s, b2s, hs,
            [min(b2s) if b2s else np.inf, true_c, infl_c, mask, interv, slack, status],
        ])
        if k == N:
            break
        u = u_real.as_vector()
        if tracked:
            x = rk4_step(fjoint, x, u, dt)
            x[:18] = _fix_rotation(x[:18])
        else:
            x = quad_step(params, x, u, dt)
    if slack_events:
        log.warning("%d steps used the slack fallback", slack_events)
    return TrajectoryLog(data, n_obs, dt)
