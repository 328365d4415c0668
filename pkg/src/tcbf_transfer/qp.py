"""Dual active-set QP for minimum-distance projections.

Solves

    min_u  1/2 |u - u_nom|^2   s.t.  G u >= h

with the Goldfarb-Idnani dual method specialised to an identity Hessian:
start at the unconstrained minimiser u_nom and add violated rows one at a
time, dropping rows whose multipliers would turn negative. Problems here
have 4-5 variables and at most a few dozen rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matops


class QpInfeasibleError(RuntimeError):
    def __init__(self, row: int, violation: float):
        super().__init__(f"QP infeasible: row {row} cannot be satisfied (violation {violation:.3e})")
        self.row = row
        self.violation = violation


@dataclass(frozen=True)
class QpResult:
    u: np.ndarray
    multipliers: np.ndarray  # one per row of G, >= 0
    active: tuple[int, ...]
    iterations: int


@dataclass(frozen=True)
class KktResiduals:
    stationarity: float
    primal: float
    complementarity: float
    dual: float


def solve_projection_qp(u_nom, G, h, feas_tol: float = 1e-12, max_iter: int = 200) -> QpResult:
    u_nom = np.asarray(u_nom, dtype=float)
    G = np.atleast_2d(np.asarray(G, dtype=float))
    h = np.asarray(h, dtype=float).reshape(-1)
    m = h.size
    if m == 0:
        return QpResult(u_nom.copy(), np.zeros(0), (), 0)
    if G.shape != (m, u_nom.size):
        raise ValueError(f"G must have shape ({m}, {u_nom.size}), got {G.shape}")
    row_scale = np.maximum(np.linalg.norm(G, axis=1), 1e-300)

    x = u_nom.copy()
    active: list[int] = []
    lam = np.zeros(0)
    iterations = 0
    while True:
        s = (G @ x - h) / row_scale
        if active:
            s[active] = np.inf
        p = int(np.argmin(s))
        if s[p] >= -feas_tol:
            break
        lam_p = 0.0
        n_p = G[p]
        while True:
            iterations += 1
            if iterations > max_iter:
                raise RuntimeError("QP active-set iteration limit reached")
            if active:
                N = G[active].T
                r = matops.solve_linear(N.T @ N, N.T @ n_p)
                z = n_p - N @ r
            else:
                r = np.zeros(0)
                z = n_p.copy()
            t1, k = np.inf, -1
            for j, rj in enumerate(r):
                if rj > 1e-14:
                    ratio = lam[j] / rj
                    if ratio < t1:
                        t1, k = ratio, j
            zz = z @ z
            t2 = -(n_p @ x - h[p]) / zz if zz > 1e-20 * (n_p @ n_p) else np.inf
            t = min(t1, t2)
            if not np.isfinite(t):
                raise QpInfeasibleError(p, float(h[p] - n_p @ x))
            if np.isfinite(t2):
                x = x + t * z
            lam = lam - t * r
            lam_p += t
            if t == t2:
                active.append(p)
                lam = np.append(lam, lam_p)
                break
            del active[k]
            lam = np.delete(lam, k)
    if active:
        # polish: re-solve the active equalities from u_nom to undo drift
        # accumulated over the steps; lstsq on N^T avoids the squared
        # conditioning of the normal equations
        N = G[active].T
        d = np.linalg.lstsq(N.T, h[active] - N.T @ u_nom, rcond=None)[0]
        lam_p = np.linalg.lstsq(N, d, rcond=None)[0]
        x_p = u_nom + d
        if np.all(lam_p >= -1e-12) and np.all((G @ x_p - h) / row_scale >= -feas_tol):
            x, lam = x_p, np.maximum(lam_p, 0.0)
    full = np.zeros(m)
    for idx, l in zip(active, lam):
        full[idx] = max(l, 0.0)
    return QpResult(x, full, tuple(active), iterations)


def kkt_residuals(u_nom, G, h, result: QpResult) -> KktResiduals:
    G = np.atleast_2d(np.asarray(G, dtype=float))
    h = np.asarray(h, dtype=float).reshape(-1)
    u = result.u
    lam = result.multipliers
    slack = G @ u - h if h.size else np.zeros(0)
    stat = u - np.asarray(u_nom, float) - (G.T @ lam if h.size else 0.0)
    return KktResiduals(
        stationarity=float(np.abs(stat).max()) if np.size(stat) else 0.0,
        primal=float(max(0.0, -slack.min())) if slack.size else 0.0,
        complementarity=float(np.abs(lam * slack).max()) if slack.size else 0.0,
        dual=float(max(0.0, -lam.min())) if lam.size else 0.0,
    )


@dataclass(frozen=True)
class QpProblem:
    """min |u - u_nom|^2 s.t. rows (a.u >= beta), box bounds, optional slack.

    The slack xi >= 0 is shared by all ``rows`` (not by the box) and
    penalised by ``slack_weight * xi^2``.
    """

    nominal: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    slack_weight: float | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nominal", np.asarray(self.nominal, dtype=float))
        n = self.nominal.size
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float).reshape(-1, n))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1))
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError("QP rows must be finite")
        if self.lower is not None and self.upper is not None and np.any(np.asarray(self.lower) > np.asarray(self.upper)):
            raise ValueError("box bounds inconsistent: lower > upper")

    def box_rows(self, n_extra: int = 0) -> tuple[np.ndarray, np.ndarray]:
        n = self.nominal.size
        rows, rhs = [], []
        I = np.eye(n + n_extra)
        if self.lower is not None:
            for i, lo in enumerate(np.asarray(self.lower, float)):
                if np.isfinite(lo):
                    rows.append(I[i])
                    rhs.append(lo)
        if self.upper is not None:
            for i, hi in enumerate(np.asarray(self.upper, float)):
                if np.isfinite(hi):
                    rows.append(-I[i])
                    rhs.append(-hi)
        if not rows:
            return np.zeros((0, n + n_extra)), np.zeros(0)
        return np.array(rows), np.array(rhs)


@dataclass(frozen=True)
class QpSolution:
    u: np.ndarray
    slack: float
    multipliers: np.ndarray  # for the barrier rows
    used_slack: bool
    iterations: int


def qp_solve(problem: QpProblem) -> QpSolution:
    """Hard QP first; on infeasibility fall back to the slack QP if enabled."""
    Bg, Bh = problem.box_rows()
    G = np.vstack([problem.A, Bg])
    h = np.concatenate([problem.b, Bh])
    try:
        res = solve_projection_qp(problem.nominal, G, h)
        nrow = problem.b.size
        return QpSolution(res.u, 0.0, res.multipliers[:nrow], False, res.iterations)
    except QpInfeasibleError:
        if problem.slack_weight is None:
            raise
    # scaled slack xi' = sqrt(w) xi keeps the Hessian the identity
    n = problem.nominal.size
    sw = np.sqrt(problem.slack_weight)
    A_s = np.hstack([problem.A, np.full((problem.b.size, 1), 1.0 / sw)])
    Bg, Bh = problem.box_rows(n_extra=1)
    pos = np.zeros((1, n + 1))
    pos[0, n] = 1.0
    G = np.vstack([A_s, Bg, pos])
    h = np.concatenate([problem.b, Bh, [0.0]])
    res = solve_projection_qp(np.append(problem.nominal, 0.0), G, h)
    return QpSolution(res.u[:n], float(res.u[n] / sw), res.multipliers[: problem.b.size], True, res.iterations)
