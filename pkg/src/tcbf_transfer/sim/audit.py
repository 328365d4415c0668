"""Invariant audits re-asserted from a saved log.

The barrier checks use a trapezoidal finite difference over each step:

    (b(k+1) - b(k)) / dt  >=  mean(bound(k), bound(k+1)) - eps,   eps = 10 dt

which equals the step average of the continuous-time inequality up to the
discretisation error of the zero-order-hold input.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import abstraction as ab
from ..quadrotor import ConcreteState, WrenchInput, orthonormality_error
from ..simfn import check_decay
from .log import STATUS_CODES, TrajectoryLog
from .scenario import Scenario

PASS, FAIL, SKIP = "PASS", "FAIL", "SKIP"


@dataclass(frozen=True)
class Check:
    name: str
    status: str
    value: float | None
    tolerance: float | None
    detail: str = ""


@dataclass(frozen=True)
class AuditReport:
    checks: tuple[Check, ...]

    @property
    def passed(self) -> bool:
        return all(c.status != FAIL for c in self.checks)

    def get(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [asdict(c) for c in self.checks]}


def _status(ok: bool) -> str:
    return PASS if ok else FAIL


def _fd_margins(log: TrajectoryLog, scenario: Scenario):
    """Per-step, per-obstacle slack of the b2 lower bound and the rate inequality."""
    dt = log.dt
    barrier = scenario.barrier()
    b1, b2 = log.b1, log.b2
    V, dphi = log.col("V"), log.col("dphi")
    fd = np.diff(b2, axis=0) / dt
    r = np.asarray(barrier.r(V), dtype=float)
    lower = -scenario.k2 * b1 + (dphi * barrier.cert.c_V * V - r)[:, None]
    lower_avg = 0.5 * (lower[:-1] + lower[1:])
    # linear alpha_b: the comparison rate sup_r(alpha_b(s + r) - alpha_b(r)) is alpha_b itself
    rate = fd + scenario.k2 * 0.5 * (b2[:-1] + b2[1:])
    return fd - lower_avg, rate


def audit(log: TrajectoryLog, scenario: Scenario, decay_samples: int = 1000,
          eps: float | None = None) -> AuditReport:
    """PASS/FAIL per invariant. ``eps`` is the discretisation slack of the
    barrier-rate checks; it defaults to 10 dt of the log."""
    checks: list[Check] = []
    dt = log.dt
    eps = 10.0 * dt if eps is None else float(eps)
    t = log.t
    steps = np.diff(t)
    grid_ok = bool(np.all(steps > 0) and np.max(np.abs(steps - dt)) <= 1e-9 * max(1.0, t[-1]))
    checks.append(Check("time_grid", _status(grid_ok), float(np.max(np.abs(steps - dt))) if steps.size else 0.0,
                        1e-9, "uniform, increasing time stamps"))

    orth = max(orthonormality_error(R) for R in log.R)
    dets = np.linalg.det(log.R)
    checks.append(Check("rotation_orthonormality", _status(orth <= 1e-6 and bool(np.all(dets > 0))), orth, 1e-6))

    # decay inequality and output bound at sampled rows (exact in "exact" mode: z = 0)
    cert = scenario.certificate()
    rows = np.unique(np.linspace(0, len(t) - 1, min(decay_samples, len(t))).astype(int))
    worst_res, worst_out, decay_ok, out_ok = -np.inf, -np.inf, True, True
    x1_cols = log.cols("x1_px", "x1_py", "x1_pz", "x1_vx", "x1_vy", "x1_vz")
    u_real = log.wrench("real")
    state_start = log.columns.index("px")
    for k in rows:
        x2 = ConcreteState.from_vector(log.data[k, state_start:state_start + 18])
        x1 = ab.AbstractState.from_vector(x1_cols[k])
        dc = check_decay(cert, scenario.quad, x1, x2, WrenchInput.from_vector(u_real[k]))
        worst_res = max(worst_res, dc.residual / (1.0 + abs(dc.Vdot)))
        worst_out = max(worst_out, dc.output_gap - dc.output_bound)
        decay_ok &= dc.passed
        out_ok &= dc.output_ok
    checks.append(Check("decay_inequality", _status(decay_ok), float(worst_res), 1e-9,
                        f"{len(rows)} sampled rows, residual / (1 + |Vdot|)"))
    checks.append(Check("output_bound", _status(out_ok), float(worst_out), 1e-12, "|p2 - p1| - gamma(V)"))
    if scenario.witness_mode == "exact":
        vmax = float(np.max(np.abs(log.col("V"))))
        checks.append(Check("witness_V_zero", _status(vmax <= 1e-12), vmax, 1e-12, "V on the witness graph"))

    filtered = scenario.mode == "filtered" and log.n_obs > 0
    if filtered and len(t) > 1:
        bound_gap, rate = _fd_margins(log, scenario)
        lg = float(bound_gap.min())
        k, i = np.unravel_index(int(np.argmin(bound_gap)), bound_gap.shape)
        checks.append(Check("b2_lower_bound", _status(lg >= -eps), lg, -eps,
                            f"worst at t={t[k]:.6g}, obstacle {i}"))
        rg = float(rate.min())
        k, i = np.unravel_index(int(np.argmin(rate)), rate.shape)
        checks.append(Check("barrier_rate", _status(rg >= -eps), rg, -eps,
                            f"db2/dt + alpha(b2); worst at t={t[k]:.6g}, obstacle {i}"))
        b2 = log.b2
        start_ok = bool(np.all(b2[0] > 0))
        bmin = float(b2.min())
        if start_ok:
            checks.append(Check("forward_invariance", _status(bmin >= -1e-3), bmin, -1e-3, "min b2 over the run"))
        else:
            checks.append(Check("forward_invariance", SKIP, bmin, -1e-3, "b2(0) <= 0 for some obstacle"))
        status = log.col("status")[:-1]
        n_slack = int(np.sum(status == STATUS_CODES["slack"]))
        checks.append(Check("no_slack", _status(n_slack == 0), float(n_slack), 0.0, "steps using the slack fallback"))
    else:
        why = "nominal run: barrier bounds are not enforced" if scenario.mode == "nominal" else "no obstacles"
        for name in ("b2_lower_bound", "barrier_rate", "forward_invariance", "no_slack"):
            checks.append(Check(name, SKIP, None, None, why))

    # energy is only conserved without thrust, moment and body rate
    w = log.wrench("real")[:-1]
    om = log.cols("Omegax", "Omegay", "Omegaz")
    if len(t) > 1 and not np.any(w) and not np.any(om):
        m, g = scenario.quad.m, scenario.quad.g
        E = 0.5 * m * np.sum(log.v ** 2, axis=1) + m * g * log.p[:, 2]
        drift = float(np.max(np.abs(E - E[0])) / max(abs(E[0]), 1e-12))
        checks.append(Check("energy", _status(drift <= 1e-6), drift, 1e-6, "relative drift of kinetic + potential"))
    else:
        checks.append(Check("energy", SKIP, None, None, "inputs not identically zero"))
    return AuditReport(tuple(checks))
