"""Piecewise degree-7 minimum-snap trajectories.

Each segment is a polynomial in normalised time tau = (t - t_i) / T_i on
[0, 1]; derivatives in physical time pick up a factor T_i^-n. The snap
cost is minimised per axis by solving the equality-constrained KKT system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


DEGREE = 7
NCOEF = DEGREE + 1
CONTINUITY_ORDER = 4
MIN_DURATION = 0.2


class TrajectoryError(ValueError):
    pass


def allocate_times(waypoints, avg_speed: float, floor: float = MIN_DURATION) -> np.ndarray:
    """Segment durations proportional to length, floored at ``floor`` seconds."""
    if not avg_speed > 0:
        raise ValueError("avg_speed must be positive")
    w = np.asarray(waypoints, dtype=float)
    lengths = np.linalg.norm(np.diff(w, axis=0), axis=1)
    return np.maximum(lengths / avg_speed, floor)


def _deriv_coeffs(order: int) -> np.ndarray:
    """Factors k!/(k-order)! so that d^order/dtau^order tau^k = f_k tau^(k-order)."""
    out = np.zeros(NCOEF)
    for k in range(order, NCOEF):
        out[k] = math.perm(k, order)
    return out


_DC = np.array([_deriv_coeffs(n) for n in range(NCOEF)])


def _basis_row(tau: float, order: int) -> np.ndarray:
    row = np.zeros(NCOEF)
    for k in range(order, NCOEF):
        row[k] = _DC[order, k] * tau ** (k - order)
    return row


def _snap_hessian() -> np.ndarray:
    """int_0^1 (d^4 p / dtau^4)^2 dtau as c^T H c."""
    H = np.zeros((NCOEF, NCOEF))
    for j in range(4, NCOEF):
        for k in range(4, NCOEF):
            H[j, k] = _DC[4, j] * _DC[4, k] / (j + k - 7)
    return H


_H = _snap_hessian()


@dataclass(frozen=True)
class PolyTrajectory:
    coeffs: np.ndarray  # (segments, 8, 3), normalised-time coefficients
    durations: np.ndarray

    @property
    def knots(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.durations)])

    @property
    def T(self) -> float:
        return float(np.sum(self.durations))

    @property
    def n_segments(self) -> int:
        return len(self.durations)

    def segment_at(self, t: float) -> tuple[int, float]:
        knots = self.knots
        i = int(np.searchsorted(knots, t, side="right") - 1)
        i = min(max(i, 0), self.n_segments - 1)
        return i, (t - knots[i]) / self.durations[i]

    def segment_eval(self, i: int, tau: float, order: int = 0) -> np.ndarray:
        return _basis_row(tau, order) @ self.coeffs[i] / self.durations[i] ** order


def eval_traj(traj: PolyTrajectory, t: float, order: int = 0) -> np.ndarray:
    """Derivative ``order`` (0..4) of the reference; t is clamped to [0, T]
    and outside it the reference holds position with zero derivatives."""
    if not 0 <= order <= CONTINUITY_ORDER:
        raise ValueError("order must lie in 0..4")
    if t < 0.0 or t > traj.T:
        if order > 0:
            return np.zeros(3)
        t = min(max(t, 0.0), traj.T)
    i, tau = traj.segment_at(t)
    return traj.segment_eval(i, tau, order)


def desired_yaw(traj: PolyTrajectory, t: float, previous: float = 0.0, eps: float = 1e-6) -> float:
    v = eval_traj(traj, t, 1)
    if math.hypot(v[0], v[1]) < eps:
        return previous
    return math.atan2(v[1], v[0])


def initial_yaw(traj: PolyTrajectory, default: float = 0.0, eps: float = 1e-9) -> float:
    """Limit of the velocity heading as t -> 0+.

    Starting from rest the heading is set by the lowest derivative with a
    horizontal component, so hovering with this yaw avoids a reference jump.
    """
    for n in range(1, CONTINUITY_ORDER + 1):
        d = traj.segment_eval(0, 0.0, n)
        if math.hypot(d[0], d[1]) > eps:
            return math.atan2(d[1], d[0])
    return default


def yaw_profile(traj: PolyTrajectory, times, initial: float | None = None) -> np.ndarray:
    """Yaw along ``times`` (increasing) with the hold rule applied in sequence."""
    out = np.empty(len(times))
    prev = initial_yaw(traj) if initial is None else initial
    for k, t in enumerate(times):
        prev = desired_yaw(traj, float(t), prev)
        out[k] = prev
    return out


def snap_cost(traj: PolyTrajectory) -> float:
    total = 0.0
    for i, T in enumerate(traj.durations):
        c = traj.coeffs[i]
        total += float(np.trace(c.T @ _H @ c)) / T**7
    return total


def _constraints(n_seg: int, durations: np.ndarray, boundary_order: int):
    """Rows of A (per axis, shared) and a builder for the right-hand sides."""
    rows: list[np.ndarray] = []
    tags: list[tuple] = []
    nv = n_seg * NCOEF

    def row(entries):
        r = np.zeros(nv)
        for seg, tau, order, sign in entries:
            r[seg * NCOEF:(seg + 1) * NCOEF] += sign * _basis_row(tau, order) / durations[seg] ** order
        return r

    for i in range(n_seg):
        rows.append(row([(i, 0.0, 0, 1.0)]))
        tags.append(("wp", i))
        rows.append(row([(i, 1.0, 0, 1.0)]))
        tags.append(("wp", i + 1))
    for i in range(n_seg - 1):
        for n in range(1, CONTINUITY_ORDER + 1):
            rows.append(row([(i, 1.0, n, 1.0), (i + 1, 0.0, n, -1.0)]))
            tags.append(("cont",))
    for n in range(1, boundary_order + 1):
        rows.append(row([(0, 0.0, n, 1.0)]))
        tags.append(("bc", 0, n))
        rows.append(row([(n_seg - 1, 1.0, n, 1.0)]))
        tags.append(("bc", 1, n))
    return np.array(rows), tags


def min_snap(waypoints, durations, boundary_order: int = 2,
             start_derivs=None, end_derivs=None) -> PolyTrajectory:
    """Minimum-snap trajectory through ``waypoints``.

    Interior knots are C^4; derivatives 1..boundary_order are pinned at the
    ends (zero unless ``start_derivs`` / ``end_derivs`` give (order, 3) arrays).
    """
    w = np.asarray(waypoints, dtype=float)
    if w.ndim != 2 or w.shape[0] < 2 or w.shape[1] != 3:
        raise TrajectoryError("need at least two 3D waypoints")
    d = np.asarray(durations, dtype=float).reshape(-1)
    if d.size != w.shape[0] - 1:
        raise TrajectoryError("need one duration per segment")
    if not np.all(d > 0):
        raise TrajectoryError("segment durations must be positive")
    if not 0 <= boundary_order <= 3:
        raise TrajectoryError("boundary_order must lie in 0..3")
    n_seg = d.size
    A, tags = _constraints(n_seg, d, boundary_order)
    sd = np.zeros((boundary_order, 3)) if start_derivs is None else np.asarray(start_derivs, float)
    ed = np.zeros((boundary_order, 3)) if end_derivs is None else np.asarray(end_derivs, float)
    b = np.zeros((len(tags), 3))
    for k, tag in enumerate(tags):
        if tag[0] == "wp":
            b[k] = w[tag[1]]
        elif tag[0] == "bc":
            b[k] = (sd if tag[1] == 0 else ed)[tag[2] - 1]
    nv = n_seg * NCOEF
    H = np.zeros((nv, nv))
    for i in range(n_seg):
        H[i * NCOEF:(i + 1) * NCOEF, i * NCOEF:(i + 1) * NCOEF] = _H / d[i] ** 7
    m = A.shape[0]
    K = np.zeros((nv + m, nv + m))
    K[:nv, :nv] = 2.0 * H
    K[:nv, nv:] = A.T
    K[nv:, :nv] = A
    rhs = np.vstack([np.zeros((nv, 3)), b])
    sol = _solve_kkt(K, rhs)
    coeffs = sol[:nv].reshape(n_seg, NCOEF, 3)
    return PolyTrajectory(coeffs, d.copy())


def _ruiz(K: np.ndarray, iters: int = 20) -> np.ndarray:
    """Symmetric diagonal scaling d so that diag(d) K diag(d) has unit row maxima."""
    d = np.ones(K.shape[0])
    for _ in range(iters):
        S = np.abs(K * d[:, None] * d[None, :]).max(axis=1)
        S[S == 0] = 1.0
        d /= np.sqrt(S)
    return d


def _solve_kkt(K: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # segment durations spread the Hessian over many decades, so equilibrate
    # before the dense solve and polish with one refinement step
    d = _ruiz(K)
    Ks = K * d[:, None] * d[None, :]
    try:
        y = np.linalg.solve(Ks, rhs * d[:, None])
        y += np.linalg.solve(Ks, rhs * d[:, None] - Ks @ y)
    except np.linalg.LinAlgError as exc:
        raise TrajectoryError(f"singular KKT system (degenerate durations): {exc}") from exc
    if not np.all(np.isfinite(y)):
        raise TrajectoryError("singular KKT system (degenerate durations)")
    return y * d[:, None]


def constraint_residual(traj: PolyTrajectory, waypoints, boundary_order: int = 2) -> float:
    w = np.asarray(waypoints, dtype=float)
    worst = 0.0
    for i in range(traj.n_segments):
        worst = max(worst, np.abs(traj.segment_eval(i, 0.0) - w[i]).max(),
                    np.abs(traj.segment_eval(i, 1.0) - w[i + 1]).max())
    worst = max(worst, knot_jump(traj))
    for n in range(1, boundary_order + 1):
        worst = max(worst, np.abs(traj.segment_eval(0, 0.0, n)).max(),
                    np.abs(traj.segment_eval(traj.n_segments - 1, 1.0, n)).max())
    return float(worst)


def knot_jump(traj: PolyTrajectory, max_order: int = CONTINUITY_ORDER) -> float:
    """Largest derivative jump (orders 0..max_order) across interior knots."""
    worst = 0.0
    for i in range(traj.n_segments - 1):
        for n in range(max_order + 1):
            jump = traj.segment_eval(i, 1.0, n) - traj.segment_eval(i + 1, 0.0, n)
            worst = max(worst, float(np.abs(jump).max()))
    return worst


def sample_table(traj: PolyTrajectory, dt: float) -> np.ndarray:
    """Rows (t, p_d, v_d, a_d, psi_d) on a uniform grid over [0, T]."""
    n = int(math.floor(traj.T / dt + 1e-9)) + 1
    ts = np.arange(n) * dt
    yaw = yaw_profile(traj, ts)
    rows = [np.concatenate([[t], eval_traj(traj, t, 0), eval_traj(traj, t, 1), eval_traj(traj, t, 2), [y]])
            for t, y in zip(ts, yaw)]
    return np.array(rows)
