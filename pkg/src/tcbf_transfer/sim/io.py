"""Artifact writers: JSON summaries, waypoint/trajectory CSVs and SVG plots."""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

from ..nominal.minsnap import PolyTrajectory, sample_table
from .log import TrajectoryLog
from .metrics import clearance_series
from .scenario import Scenario


def dumps_json(obj) -> str:
    """Deterministic JSON: sorted keys, repr floats, trailing newline."""
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(dumps_json(obj))
    return path


def _csv(header: list[str], rows: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in np.atleast_2d(rows):
        buf.write(",".join(repr(float(x)) for x in row) + "\n")
    return buf.getvalue()


def waypoints_csv(waypoints) -> str:
    w = np.asarray(waypoints, dtype=float)
    return _csv(["index", "x", "y", "z"], np.column_stack([np.arange(len(w)), w]))


def trajectory_csv(traj: PolyTrajectory, dt: float) -> str:
    table = sample_table(traj, dt)
    header = ["t", "px", "py", "pz", "vx", "vy", "vz", "ax", "ay", "az", "yaw"]
    return _csv(header, table)


# --------------------------------------------------------------------------
# plots


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save_svg(fig, path) -> Path:
    path = Path(path)
    # fixed hash salt and no date keep the SVG byte-stable across runs
    import matplotlib

    with matplotlib.rc_context({"svg.hashsalt": "tcbf", "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def plot_path(logs: dict[str, TrajectoryLog], scenario: Scenario, path) -> Path:
    """x-z and x-y projections of each run with obstacle circles."""
    plt = _figure()
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for ax, (j, label) in zip(axes, ((2, "z [m]"), (1, "y [m]"))):
        for o in scenario.obstacles:
            c = o.center
            ax.add_patch(plt.Circle((c[0], c[j]), o.rho, fill=False, ls="--", color="0.5"))
            ax.add_patch(plt.Circle((c[0], c[j]), o.geometric_radius, color="0.8"))
        for name, lg in logs.items():
            ref = lg.cols("pdx", "pdy", "pdz")
            if name == next(iter(logs)):
                ax.plot(ref[:, 0], ref[:, j], ":", color="k", lw=1, label="reference")
            ax.plot(lg.p[:, 0], lg.p[:, j], lw=1.5, label=name)
        ax.set_ylabel(label)
        ax.set_aspect("equal", adjustable="datalim")
    axes[0].legend(loc="upper right", fontsize=8)
    axes[-1].set_xlabel("x [m]")
    fig.tight_layout()
    out = _save_svg(fig, path)
    plt.close(fig)
    return out


def plot_barriers(log: TrajectoryLog, path) -> Path:
    plt = _figure()
    fig, ax = plt.subplots(figsize=(8, 4))
    b2 = log.b2
    for i in range(log.n_obs):
        ax.plot(log.t, b2[:, i], lw=1, label=f"b2[{i}]")
    if log.n_obs:
        ax.plot(log.t, b2.min(axis=1), "k--", lw=1.5, label="min b2")
    ax.axhline(0.0, color="r", lw=0.8)
    ax.set_xlabel("t [s]")
    ax.set_yscale("symlog", linthresh=0.1)
    ax.set_ylabel("b2 (symlog)")
    ax.legend(loc="upper right", fontsize=7, ncol=2)
    fig.tight_layout()
    out = _save_svg(fig, path)
    plt.close(fig)
    return out


def plot_clearance(logs: dict[str, TrajectoryLog], scenario: Scenario, path) -> Path:
    plt = _figure()
    fig, ax = plt.subplots(figsize=(8, 4))
    for name, lg in logs.items():
        true_c, infl_c = clearance_series(lg, scenario)
        ax.plot(lg.t, true_c, lw=1.5, label=f"{name}: true")
        ax.plot(lg.t, infl_c, lw=1, ls="--", label=f"{name}: inflated")
    ax.axhline(0.0, color="r", lw=0.8)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("clearance [m]")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    out = _save_svg(fig, path)
    plt.close(fig)
    return out
