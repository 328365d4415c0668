"""YAML scenario files: parse, validate and re-emit.

Units: positions and radii in m, dt and duration in s, masses in kg,
inertia in kg m^2, thrust in N, moments in N m, k_F in N s^2, k_M in
N m s^2, interface gains Kp in 1/s^2 and Kv in 1/s, barrier gains k1 in 1/s
and k2, k_e in 1/s (rates on b1 which already has units of m^2/s).
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np
import yaml

from .abstraction import Obstacle
from .nominal.planner import PlannerConfig
from .nominal.se3 import Se3Gains
from .quadrotor import QuadParams
from .sim.scenario import Scenario, ScenarioError

SCHEMA_VERSION = 1

SECTIONS = {
    "schema_version": None,
    "name": None,
    "scenario": {"start", "goal", "dt", "duration", "seed", "mode", "witness_mode",
                 "tracked_offset_p", "tracked_offset_v"},
    "obstacles": None,
    "quadrotor": {"m", "g", "J", "l", "k_F", "k_M", "f_max", "M_max"},
    "certificate": {"kp", "kv", "Q_diag"},
    "cbf": {"k1", "k2", "k_e", "c_r", "slack_weight"},
    "margin": None,
    "planner": {"step_length", "goal_bias", "rewire_radius", "max_iterations", "bounds_min", "bounds_max",
                "clearance", "shortcut"},
    "trajectory": {"avg_speed", "boundary_order"},
    "controller": {"kp_pos", "kv_vel", "kR_att", "kOmega_rate"},
    "margin_problem": {"alpha_b", "alpha_V", "r", "s0", "eta", "s_max"},
}
OBSTACLE_KEYS = {"center", "radius", "inflation"}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}")
        self.key = key


def _check_keys(d, allowed, where: str):
    if not isinstance(d, dict):
        raise ConfigError(where, "expected a mapping")
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{where}.{k}" if where else k, "unknown key")


def scenario_from_dict(doc: dict) -> Scenario:
    _check_keys(doc, SECTIONS.keys(), "")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")
    for sec, keys in SECTIONS.items():
        if keys is not None and sec in doc:
            _check_keys(doc[sec], keys, sec)
    kw: dict = {}
    if "name" in doc:
        kw["name"] = str(doc["name"])
    sc = doc.get("scenario", {})
    for k in ("start", "goal", "dt", "duration", "mode", "witness_mode", "tracked_offset_p", "tracked_offset_v"):
        if k in sc:
            kw[k] = sc[k]
    seed = int(sc.get("seed", 0))
    kw["rng_seed"] = seed

    obs = []
    for i, o in enumerate(doc.get("obstacles") or []):
        _check_keys(o, OBSTACLE_KEYS, f"obstacles[{i}]")
        try:
            obs.append(Obstacle(np.asarray(o["center"], float), float(o["radius"]), float(o.get("inflation", 0.3))))
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"obstacles[{i}]", str(exc)) from exc
    kw["obstacles"] = tuple(obs)

    q = dict(doc.get("quadrotor", {}))
    if "J" in q:
        J = np.asarray(q["J"], float)
        q["J"] = np.diag(J) if J.ndim == 1 else J
    try:
        kw["quad"] = QuadParams(**q)
    except (ValueError, TypeError) as exc:
        raise ConfigError("quadrotor", str(exc)) from exc

    cert = doc.get("certificate", {})
    for src, dst in (("kp", "interface_kp"), ("kv", "interface_kv"), ("Q_diag", "Q_diag")):
        if src in cert:
            kw[dst] = cert[src]
    cbf = doc.get("cbf", {})
    for k in ("k1", "k2", "k_e", "c_r", "slack_weight"):
        if k in cbf:
            kw[k] = cbf[k]
    if "margin" in doc:
        if not isinstance(doc["margin"], dict) or "kind" not in doc["margin"]:
            raise ConfigError("margin", "expected a mapping with a 'kind'")
        kw["margin"] = dict(doc["margin"])

    pl = dict(doc.get("planner", {}))
    for k in ("bounds_min", "bounds_max"):
        if k in pl:
            pl[k] = tuple(float(x) for x in pl[k])
    try:
        kw["planner"] = PlannerConfig(rng_seed=seed, **pl)
    except (ValueError, TypeError) as exc:
        raise ConfigError("planner", str(exc)) from exc
    tr = doc.get("trajectory", {})
    if "avg_speed" in tr:
        kw["avg_speed"] = float(tr["avg_speed"])
    if "boundary_order" in tr:
        kw["boundary_order"] = int(tr["boundary_order"])
    try:
        kw["controller"] = Se3Gains(**doc.get("controller", {}))
        return Scenario(**kw)
    except ScenarioError as exc:
        key = {"dt": "scenario.dt", "duration": "scenario.duration", "mode": "scenario.mode",
               "witness_mode": "scenario.witness_mode", "start": "scenario.start",
               "goal": "scenario.goal"}.get(exc.key, exc.key)
        raise ConfigError(key, str(exc).split(": ", 1)[-1]) from exc
    except (ValueError, TypeError) as exc:
        raise ConfigError("controller", str(exc)) from exc


def scenario_to_dict(s: Scenario) -> dict:
    q = s.quad
    J = q.J
    pl = s.planner
    return {
        "schema_version": SCHEMA_VERSION,
        "name": s.name,
        "scenario": {
            "start": list(s.start), "goal": list(s.goal), "dt": s.dt, "duration": s.duration,
            "seed": s.rng_seed, "mode": s.mode, "witness_mode": s.witness_mode,
            "tracked_offset_p": list(s.tracked_offset_p), "tracked_offset_v": list(s.tracked_offset_v),
        },
        "obstacles": [o.to_dict() for o in s.obstacles],
        "quadrotor": {
            "m": q.m, "g": q.g,
            "J": np.diag(J).tolist() if np.count_nonzero(J - np.diag(np.diag(J))) == 0 else J.tolist(),
            "l": q.l, "k_F": q.k_F, "k_M": q.k_M, "f_max": q.f_max, "M_max": q.M_max,
        },
        "certificate": {"kp": s.interface_kp, "kv": s.interface_kv, "Q_diag": list(s.Q_diag)},
        "cbf": {"k1": s.k1, "k2": s.k2, "k_e": s.k_e, "c_r": s.c_r, "slack_weight": s.slack_weight},
        "margin": dict(s.margin),
        "planner": {
            "step_length": pl.step_length, "goal_bias": pl.goal_bias, "rewire_radius": pl.rewire_radius,
            "max_iterations": pl.max_iterations, "bounds_min": list(pl.bounds_min),
            "bounds_max": list(pl.bounds_max), "clearance": pl.clearance, "shortcut": pl.shortcut,
        },
        "trajectory": {"avg_speed": s.avg_speed, "boundary_order": s.boundary_order},
        "controller": s.controller.to_dict(),
    }


def load_document(path) -> dict:
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"YAML parse error: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("<file>", "top level must be a mapping")
    return doc


def load_scenario(path) -> Scenario:
    return scenario_from_dict(load_document(path))


def dump_scenario(s: Scenario, path=None) -> str:
    text = yaml.safe_dump(scenario_to_dict(s), sort_keys=False, default_flow_style=None)
    if path is not None:
        Path(path).write_text(text)
    return text
