"""Summary metrics of a run (clearances, barrier values, intervention)."""

from __future__ import annotations

import numpy as np

from .log import STATUS_CODES, TrajectoryLog
from .scenario import Scenario


def clearance_series(log: TrajectoryLog, scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Per-step (true, inflated) clearance: min_i |p - c_i| - radius_i."""
    if not scenario.obstacles:
        inf = np.full(len(log.t), np.inf)
        return inf, inf
    P = log.p
    dist = np.array([np.linalg.norm(P - o.center, axis=1) for o in scenario.obstacles])
    geo = np.array([o.geometric_radius for o in scenario.obstacles])[:, None]
    rho = np.array([o.rho for o in scenario.obstacles])[:, None]
    return (dist - geo).min(axis=0), (dist - rho).min(axis=0)


def _min_at(t: np.ndarray, x: np.ndarray) -> dict:
    if x.size == 0 or not np.any(np.isfinite(x)):
        return {"min": None, "t": None}
    k = int(np.argmin(x))
    return {"min": float(x[k]), "t": float(t[k])}


def metrics(log: TrajectoryLog, scenario: Scenario) -> dict:
    t = log.t
    dt = log.dt
    true_c, infl_c = clearance_series(log, scenario)
    status = log.col("status")
    b2 = log.b2
    b2_min = b2.min(axis=1) if log.n_obs else np.full(len(t), np.inf)
    err = log.p - log.cols("pdx", "pdy", "pdz")
    err_norm = np.linalg.norm(err, axis=1)
    half = len(t) // 2
    applied = slice(0, len(t) - 1)  # the last row's input is never applied
    out = {
        "scenario": scenario.name,
        "mode": scenario.mode,
        "witness_mode": scenario.witness_mode,
        "steps": int(len(t) - 1),
        "dt": dt,
        "duration": float(t[-1]),
        "true_clearance": _min_at(t, true_c),
        "inflated_clearance": _min_at(t, infl_c),
        "b2_min": _min_at(t, b2_min),
        "b2_min_final": float(b2_min[-1]) if log.n_obs else None,
        "per_obstacle_min_b2": [float(x) for x in b2.min(axis=0)] if log.n_obs else [],
        "per_obstacle_b2_initial": [float(x) for x in b2[0]] if log.n_obs else [],
        "intervention_energy": float(np.sum(log.col("intervention")[applied]) * dt),
        "slack_total": float(np.sum(log.col("slack")[applied]) * dt),
        "slack_max": float(np.max(log.col("slack"))),
        "slack_steps": int(np.sum(status[applied] == STATUS_CODES["slack"])),
        "qp_steps": int(np.sum(status[applied] == STATUS_CODES["qp"])),
        "saturation_steps": int(np.sum(log.col("saturated")[applied] > 0)),
        "tracking_rms": float(np.sqrt(np.mean(err_norm ** 2))),
        "tracking_rms_second_half": float(np.sqrt(np.mean(err_norm[half:] ** 2))),
        "final_position": [float(x) for x in log.p[-1]],
        "V_max": float(np.max(log.col("V"))),
    }
    return out
