"""Comparison functions and synthesis of the barrier margin phi.

A margin phi must satisfy, for all s >= 0,

    phi'(s) * alpha_V(s) >= alpha_b(phi(s)) + r(s)

where alpha_V is the decay rate of the simulation function, alpha_b the
class-K rate of the abstract barrier and r a mismatch bound. The pointwise
smallest such phi through (s0, eta) is the solution of the comparison ODE

    y'(s) = (alpha_b(y) + r(s)) / alpha_V(s),   y(s0) = eta.

This module provides closed forms for linear rates, a fixed-step RK4
tabulation (the reference solver), Picard iteration, the separated
solution for r == 0, and grid verifiers for the inequality and the
minimality property.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicHermiteSpline

from .tolerances import DEFAULT_TOLERANCES

LOG_BRANCH_TOL = 1e-10


class MarginError(ValueError):
    pass


class NonConvergenceError(MarginError):
    def __init__(self, iterations: int, gap: float):
        super().__init__(f"Picard iteration did not converge after {iterations} iterations (gap {gap:.3e})")
        self.iterations = iterations
        self.gap = gap


class BlowUpError(MarginError):
    def __init__(self, last_s: float, last_value: float):
        super().__init__(f"comparison ODE blew up after s={last_s:.6g} (value {last_value:.3e})")
        self.last_s = last_s
        self.last_value = last_value


# --------------------------------------------------------------------------
# class-K functions


class KFunction:
    """Scalar comparison function on [0, inf) with value and derivative."""

    def __call__(self, s):
        raise NotImplementedError

    def derivative(self, s):
        raise NotImplementedError

    def is_zero(self) -> bool:
        return False

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(KFunction):
    """r == 0, admitted as a degenerate (extended) class-K function."""

    def __call__(self, s):
        return np.zeros_like(np.asarray(s, dtype=float)) if np.ndim(s) else 0.0

    def derivative(self, s):
        return self(s)

    def is_zero(self) -> bool:
        return True

    def to_dict(self) -> dict:
        return {"kind": "zero"}


@dataclass(frozen=True)
class Linear(KFunction):
    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise MarginError(f"linear class-K coefficient must be positive, got {self.c}")

    def __call__(self, s):
        return self.c * np.asarray(s, dtype=float) if np.ndim(s) else self.c * float(s)

    def derivative(self, s):
        return np.full_like(np.asarray(s, dtype=float), self.c) if np.ndim(s) else self.c

    def to_dict(self) -> dict:
        return {"kind": "linear", "c": self.c}


@dataclass(frozen=True)
class PowerLaw(KFunction):
    c: float
    exponent: float

    def __post_init__(self):
        if not (self.c > 0 and self.exponent > 0):
            raise MarginError("power-law class-K function needs positive coefficient and exponent")

    def __call__(self, s):
        s = np.maximum(np.asarray(s, dtype=float), 0.0)
        out = self.c * s**self.exponent
        return out if np.ndim(out) else float(out)

    def derivative(self, s):
        s = np.maximum(np.asarray(s, dtype=float), 0.0)
        with np.errstate(divide="ignore"):
            out = self.c * self.exponent * s ** (self.exponent - 1.0)
        return out if np.ndim(out) else float(out)

    def to_dict(self) -> dict:
        return {"kind": "power", "c": self.c, "exponent": self.exponent}


def _hermite(s, y, dy) -> CubicHermiteSpline:
    return CubicHermiteSpline(np.asarray(s, float), np.asarray(y, float), np.asarray(dy, float))


@dataclass(frozen=True)
class TabulatedK(KFunction):
    """Monotone table with endpoint slopes; cubic Hermite in between.

    Below the first knot the function is the chord from the origin, above
    the last knot it continues linearly with the last slope.
    """

    s: tuple
    values: tuple
    slopes: tuple

    def __post_init__(self):
        s, v = np.asarray(self.s, float), np.asarray(self.values, float)
        if len(s) < 2 or np.any(np.diff(s) <= 0) or np.any(np.diff(v) <= 0):
            raise MarginError("tabulated class-K grid must be strictly increasing in both coordinates")
        if s[0] < 0 or v[0] < 0:
            raise MarginError("tabulated class-K grid must start at s >= 0 with value >= 0")

    def _spline(self):
        return _hermite(self.s, self.values, self.slopes)

    def __call__(self, s):
        return _tab_eval(np.asarray(self.s), np.asarray(self.values), np.asarray(self.slopes), s, 0)

    def derivative(self, s):
        return _tab_eval(np.asarray(self.s), np.asarray(self.values), np.asarray(self.slopes), s, 1)

    def to_dict(self) -> dict:
        return {"kind": "tabulated", "s": list(self.s), "values": list(self.values), "slopes": list(self.slopes)}


def _tab_eval(sg, yg, dyg, s, order):
    spline = _hermite(sg, yg, dyg)
    x = np.asarray(s, dtype=float)
    xs = np.atleast_1d(x)
    out = np.empty_like(xs)
    lo, hi = xs < sg[0], xs > sg[-1]
    mid = ~(lo | hi)
    out[mid] = spline(xs[mid], order)
    if order == 0:
        chord = yg[0] / sg[0] if sg[0] > 0 else dyg[0]
        out[lo] = chord * np.maximum(xs[lo], 0.0) if sg[0] > 0 else yg[0] + dyg[0] * (xs[lo] - sg[0])
        out[hi] = yg[-1] + dyg[-1] * (xs[hi] - sg[-1])
    else:
        out[lo] = yg[0] / sg[0] if sg[0] > 0 else dyg[0]
        out[hi] = dyg[-1]
    return out if x.ndim else float(out[0])


def kfunction_from_dict(d: dict | None) -> KFunction:
    if d is None:
        return Zero()
    kind = d.get("kind")
    if kind == "zero":
        return Zero()
    if kind == "linear":
        return Linear(float(d["c"]))
    if kind == "power":
        return PowerLaw(float(d["c"]), float(d["exponent"]))
    if kind == "tabulated":
        return TabulatedK(tuple(d["s"]), tuple(d["values"]), tuple(d["slopes"]))
    raise MarginError(f"unknown class-K kind {kind!r}")


# --------------------------------------------------------------------------
# margin functions


class MarginFunction:
    """Class-K-infinity margin phi with value and derivative."""

    s0: float
    eta: float

    def value(self, s):
        raise NotImplementedError

    def derivative(self, s):
        raise NotImplementedError

    def __call__(self, s):
        return self.value(s)

    def to_dict(self) -> dict:
        raise NotImplementedError

    def is_class_k(self, s_max: float | None = None, n: int = 1000) -> bool:
        """Zero at zero and strictly increasing on a sampled grid."""
        s_max = s_max if s_max is not None else 20.0 * self.s0
        grid = np.linspace(0.0, s_max, n)
        v = np.asarray(self.value(grid))
        return abs(float(self.value(0.0))) <= 1e-12 and bool(np.all(np.diff(v) > 0))


def _check_anchor(s0, lam=None, eta=0.0):
    if not s0 > 0:
        raise MarginError(f"s0 must be positive, got {s0}")
    if lam is not None and not lam > 0:
        raise MarginError(f"exponent lambda must be positive, got {lam}")
    if eta < 0:
        raise MarginError(f"eta must be nonnegative, got {eta}")


@dataclass(frozen=True)
class PowerMargin(MarginFunction):
    """phi(s) = eta * (s / s0) ** lam."""

    eta: float
    s0: float
    lam: float

    def __post_init__(self):
        _check_anchor(self.s0, self.lam, self.eta)

    def value(self, s):
        x = np.maximum(np.asarray(s, dtype=float), 0.0)
        out = self.eta * (x / self.s0) ** self.lam
        return out if np.ndim(out) else float(out)

    def derivative(self, s):
        x = np.maximum(np.asarray(s, dtype=float), 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.eta * self.lam / self.s0 * (x / self.s0) ** (self.lam - 1.0)
        if self.eta == 0:
            out = np.zeros_like(x)
        return out if np.ndim(out) else float(out)

    def to_dict(self) -> dict:
        return {"kind": "power", "eta": self.eta, "s0": self.s0, "lam": self.lam}


@dataclass(frozen=True)
class LinearPlusPowerMargin(MarginFunction):
    """Closed form for linear rates and r(s) = c_r s, lam != 1."""

    eta: float
    s0: float
    lam: float
    c_r: float
    c_V: float

    def __post_init__(self):
        _check_anchor(self.s0, self.lam, self.eta)
        if abs(self.lam - 1.0) < LOG_BRANCH_TOL:
            raise MarginError("lam == 1 needs the logarithmic closed form")

    @property
    def _k(self) -> float:
        return self.c_r / (self.c_V * (1.0 - self.lam))

    def value(self, s):
        x = np.maximum(np.asarray(s, dtype=float), 0.0)
        out = self.eta * (x / self.s0) ** self.lam + self._k * (x - x**self.lam * self.s0 ** (1.0 - self.lam))
        return out if np.ndim(out) else float(out)

    def derivative(self, s):
        x = np.maximum(np.asarray(s, dtype=float), 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            xl = x ** (self.lam - 1.0)
            out = (self.eta * self.lam / self.s0 ** self.lam) * xl + self._k * (
                1.0 - self.lam * xl * self.s0 ** (1.0 - self.lam)
            )
        return out if np.ndim(out) else float(out)

    def to_dict(self) -> dict:
        return {"kind": "linear_plus_power", "eta": self.eta, "s0": self.s0, "lam": self.lam,
                "c_r": self.c_r, "c_V": self.c_V}


@dataclass(frozen=True)
class LogMargin(MarginFunction):
    """Closed form for lam == 1: eta s/s0 + (c_r/c_V) s log(s/s0)."""

    eta: float
    s0: float
    c_r: float
    c_V: float

    def __post_init__(self):
        _check_anchor(self.s0, None, self.eta)

    def value(self, s):
        x = np.maximum(np.asarray(s, dtype=float), 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            xlog = np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0) / self.s0), 0.0)
        out = self.eta * x / self.s0 + self.c_r / self.c_V * xlog
        return out if np.ndim(out) else float(out)

    def derivative(self, s):
        x = np.maximum(np.asarray(s, dtype=float), 0.0)
        with np.errstate(divide="ignore"):
            out = self.eta / self.s0 + self.c_r / self.c_V * (np.log(x / self.s0) + 1.0)
        return out if np.ndim(out) else float(out)

    def to_dict(self) -> dict:
        return {"kind": "log", "eta": self.eta, "s0": self.s0, "c_r": self.c_r, "c_V": self.c_V}


@dataclass(frozen=True)
class TabulatedMargin(MarginFunction):
    """Margin known on a grid s0 = s[0] < ... < s[-1] with exact slopes.

    Between knots: cubic Hermite. Below s0: chord from the origin (keeps
    phi(0) = 0). Beyond the grid: linear with the last slope.
    """

    s: np.ndarray
    y: np.ndarray
    dy: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def s0(self) -> float:
        return float(self.s[0])

    @property
    def eta(self) -> float:
        return float(self.y[0])

    def value(self, s):
        return _tab_eval(self.s, self.y, self.dy, s, 0)

    def derivative(self, s):
        return _tab_eval(self.s, self.y, self.dy, s, 1)

    def to_dict(self) -> dict:
        return {"kind": "tabulated", "s": self.s.tolist(), "y": self.y.tolist(), "dy": self.dy.tolist()}


def margin_from_dict(d: dict) -> MarginFunction:
    kind = d.get("kind")
    if kind == "power":
        return PowerMargin(float(d["eta"]), float(d["s0"]), float(d["lam"]))
    if kind == "linear_plus_power":
        return LinearPlusPowerMargin(float(d["eta"]), float(d["s0"]), float(d["lam"]),
                                     float(d["c_r"]), float(d["c_V"]))
    if kind == "log":
        return LogMargin(float(d["eta"]), float(d["s0"]), float(d["c_r"]), float(d["c_V"]))
    if kind == "tabulated":
        return TabulatedMargin(np.asarray(d["s"], float), np.asarray(d["y"], float), np.asarray(d["dy"], float))
    if kind == "scaled":
        return ScaledMargin(margin_from_dict(d["base"]), float(d["factor"]), float(d.get("offset", 0.0)))
    raise MarginError(f"unknown margin kind {kind!r}")


@dataclass(frozen=True)
class ScaledMargin(MarginFunction):
    """c * base; used to build super- and sub-solutions for audits."""

    base: MarginFunction
    factor: float
    offset: float = 0.0

    @property
    def s0(self) -> float:
        return self.base.s0

    @property
    def eta(self) -> float:
        return float(self.value(self.base.s0))

    def value(self, s):
        return self.factor * self.base.value(s) + self.offset

    def derivative(self, s):
        return self.factor * self.base.derivative(s)

    def to_dict(self) -> dict:
        return {"kind": "scaled", "factor": self.factor, "offset": self.offset, "base": self.base.to_dict()}


# --------------------------------------------------------------------------
# closed forms


def closed_form_power(eta: float, s0: float, lam: float) -> PowerMargin:
    return PowerMargin(float(eta), float(s0), float(lam))


def closed_form_linear_r(eta: float, s0: float, c_b: float, c_V: float, c_r: float) -> MarginFunction:
    """Minimal margin for alpha_b = c_b s, alpha_V = c_V s, r = c_r s."""
    if not (c_b > 0 and c_V > 0):
        raise MarginError("c_b and c_V must be positive")
    if c_r < 0:
        raise MarginError("c_r must be nonnegative")
    lam = c_b / c_V
    if c_r == 0:
        return closed_form_power(eta, s0, lam)
    if abs(lam - 1.0) < LOG_BRANCH_TOL:
        return LogMargin(float(eta), float(s0), float(c_r), float(c_V))
    return LinearPlusPowerMargin(float(eta), float(s0), lam, float(c_r), float(c_V))


@dataclass(frozen=True)
class LinearPhiResult:
    c_r: float
    valid: bool


def linear_phi_residual(c_phi: float, c_b: float, c_V: float) -> LinearPhiResult:
    """Mismatch coefficient c_r that makes phi(s) = c_phi s an exact solution.

    ``valid`` is False when the resulting r is not class-K (c_r <= 0).
    """
    c_r = c_phi * (c_V - c_b)
    return LinearPhiResult(c_r=c_r, valid=c_r > 0)


# --------------------------------------------------------------------------
# comparison problem and solvers


@dataclass(frozen=True)
class ComparisonProblem:
    alpha_b: KFunction
    alpha_V: KFunction
    r: KFunction = field(default_factory=Zero)
    s0: float = 1.0
    eta: float = 0.0

    def __post_init__(self):
        if not self.s0 > 0:
            raise MarginError(f"s0 must be positive, got {self.s0}")
        if self.eta < 0:
            raise MarginError(f"eta must be nonnegative, got {self.eta}")

    def rhs(self, s, y):
        return (self.alpha_b(y) + self.r(s)) / self.alpha_V(s)

    def _check_positive_alpha_V(self, s_max: float) -> None:
        probe = np.linspace(self.s0, s_max, 257)
        if np.any(np.asarray(self.alpha_V(probe)) <= 0):
            raise MarginError("alpha_V vanishes on the integration interval")


def integrate_comparison_ode(problem: ComparisonProblem, s_max: float, step: float | None = None,
                             blowup: float = DEFAULT_TOLERANCES.ode_blowup) -> TabulatedMargin:
    """Classical RK4 tabulation of the comparison ODE on [s0, s_max]."""
    s0 = problem.s0
    if not s_max > s0:
        raise MarginError("s_max must exceed s0")
    problem._check_positive_alpha_V(s_max)
    n = 2000 if step is None else max(1, int(math.ceil((s_max - s0) / step - 1e-12)))
    h = (s_max - s0) / n
    f = problem.rhs
    s = s0 + h * np.arange(n + 1)
    s[-1] = s_max
    y = np.empty(n + 1)
    y[0] = problem.eta
    yk = problem.eta
    for k in range(n):
        sk = s[k]
        k1 = f(sk, yk)
        k2 = f(sk + h / 2, yk + h / 2 * k1)
        k3 = f(sk + h / 2, yk + h / 2 * k2)
        k4 = f(sk + h, yk + h * k3)
        ynext = yk + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not (abs(ynext) <= blowup):
            raise BlowUpError(float(sk), float(ynext))
        yk = ynext
        y[k + 1] = yk
    dy = np.asarray(f(s, y), dtype=float)
    return TabulatedMargin(s, y, dy, meta={"method": "rk4", "steps": n})


def picard_iterate(problem: ComparisonProblem, grid: np.ndarray, y: np.ndarray) -> np.ndarray:
    """One Picard step on a fixed grid with cumulative Simpson quadrature."""
    g = np.asarray(problem.rhs(grid, y), dtype=float)
    return problem.eta + integrate.cumulative_simpson(g, x=grid, initial=0.0)


def picard_solve(problem: ComparisonProblem, s_max: float, tol: float = DEFAULT_TOLERANCES.picard_tol,
                 max_iter: int = DEFAULT_TOLERANCES.picard_max_iter,
                 n_grid: int = DEFAULT_TOLERANCES.picard_grid) -> TabulatedMargin:
    if not tol > 0:
        raise MarginError("tol must be positive")
    problem._check_positive_alpha_V(s_max)
    grid = np.linspace(problem.s0, s_max, n_grid)
    y = np.full(n_grid, problem.eta)
    gap = math.inf
    for it in range(1, max_iter + 1):
        y_next = picard_iterate(problem, grid, y)
        gap = float(np.max(np.abs(y_next - y)))
        y = y_next
        if gap <= tol:
            dy = np.asarray(problem.rhs(grid, y), dtype=float)
            return TabulatedMargin(grid, y, dy, meta={"method": "picard", "iterations": it, "gap": gap})
    raise NonConvergenceError(max_iter, gap)


def separated_solution(problem: ComparisonProblem, xhat: float, shat: float, s_max: float,
                       n: int = 301) -> TabulatedMargin:
    """y(s) = F^{-1}(F(eta) + G(s) - G(s0)) for r == 0.

    F(x) = int_xhat^x du / alpha_b(u), G(s) = int_shat^s dt / alpha_V(t).
    """
    if not problem.r.is_zero():
        raise MarginError("separated solution requires r == 0")
    if problem.eta <= 0:
        raise MarginError("separated solution undefined for eta = 0: F diverges at the origin")
    problem._check_positive_alpha_V(s_max)
    quad = dict(epsabs=1e-14, epsrel=1e-13, limit=200)

    def F(x):
        return integrate.quad(lambda u: 1.0 / problem.alpha_b(u), xhat, x, **quad)[0]

    def G(s):
        return integrate.quad(lambda t: 1.0 / problem.alpha_V(t), shat, s, **quad)[0]

    F_eta, G_s0 = F(problem.eta), G(problem.s0)
    grid = np.linspace(problem.s0, s_max, n)
    y = np.empty(n)
    y[0] = problem.eta
    # march along the grid: F and G are accumulated from the previous knot so
    # every quadrature spans one short interval
    lo, F_lo = problem.eta, F_eta
    G_prev, s_prev = G_s0, problem.s0
    for i in range(1, n):
        G_i = G_prev + integrate.quad(lambda t: 1.0 / problem.alpha_V(t), s_prev, grid[i], **quad)[0]
        target = F_eta + G_i - G_s0

        def excess(x, lo=lo, F_lo=F_lo, target=target):
            return F_lo + integrate.quad(lambda u: 1.0 / problem.alpha_b(u), lo, x, **quad)[0] - target

        hi = lo + max(lo, 1e-3)
        while excess(hi) < 0:
            hi = lo + 2.0 * (hi - lo)
        y[i] = optimize.brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        F_lo = target
        lo = y[i]
        G_prev, s_prev = G_i, grid[i]
    dy = np.asarray(problem.alpha_b(y), float) / np.asarray(problem.alpha_V(grid), float)
    return TabulatedMargin(grid, y, dy, meta={"method": "separated"})


# --------------------------------------------------------------------------
# verification


@dataclass(frozen=True)
class MarginReport:
    min_residual: float
    argmin: float
    passed: bool
    grid: np.ndarray = field(repr=False)
    residual: np.ndarray = field(repr=False)


def margin_residual(phi: MarginFunction, alpha_b: KFunction, alpha_V: KFunction, r: KFunction, s):
    s = np.asarray(s, dtype=float)
    dphi = np.asarray(phi.derivative(s), dtype=float)
    aV = np.asarray(alpha_V(s), dtype=float)
    # 0 * inf := 0 where alpha_V vanishes
    with np.errstate(invalid="ignore"):
        lhs = np.where(aV == 0.0, 0.0, dphi * aV)
    return lhs - np.asarray(alpha_b(phi.value(s)), dtype=float) - np.asarray(r(s), dtype=float)


def verify_margin_inequality(phi: MarginFunction, alpha_b: KFunction, alpha_V: KFunction,
                             r: KFunction | None, s_range: tuple[float, float], grid_n: int = 1000,
                             tol: float = DEFAULT_TOLERANCES.margin_inequality,
                             relative: bool = False) -> MarginReport:
    """Grid check of phi' alpha_V >= alpha_b(phi) + r.

    With ``relative`` the residual is divided by 1 + alpha_b(phi) + r before
    the tolerance test, for steep margins whose values span many decades.

    Tabulated margins are checked at their knots inside ``s_range`` (the
    only points where their slope is a solver output rather than an
    interpolant); everything else on a uniform grid of ``grid_n`` points.
    """
    if grid_n < 100:
        raise MarginError("grid_n must be at least 100")
    r = r if r is not None else Zero()
    lo, hi = s_range
    if isinstance(phi, TabulatedMargin):
        grid = phi.s[(phi.s >= lo - 1e-15) & (phi.s <= hi + 1e-15)]
    else:
        grid = np.linspace(lo, hi, grid_n)
    res = margin_residual(phi, alpha_b, alpha_V, r, grid)
    if relative:
        res = res / (1.0 + np.abs(alpha_b(phi.value(grid))) + np.abs(r(grid)))
    k = int(np.argmin(res))
    return MarginReport(float(res[k]), float(grid[k]), bool(res[k] >= -tol), grid, res)


@dataclass(frozen=True)
class MinimalityReport:
    precondition_met: bool
    dominates: bool
    min_gap: float
    argmin: float
    passed: bool
    note: str


def pointwise_minimality_check(phi_candidate: MarginFunction, problem: ComparisonProblem,
                               grid: np.ndarray, reference: MarginFunction | None = None,
                               tol: float = DEFAULT_TOLERANCES.minimality) -> MinimalityReport:
    """Check the comparison property phi >= y on ``grid``.

    ``reference`` defaults to the RK4 tabulation of the comparison ODE.
    The report passes unless the candidate meets the hypotheses (the
    margin inequality and phi(s0) >= eta) yet dips below y.
    """
    grid = np.asarray(grid, dtype=float)
    if reference is None:
        reference = integrate_comparison_ode(problem, float(grid.max()), step=(grid.max() - problem.s0) / 4000)
    ineq = verify_margin_inequality(phi_candidate, problem.alpha_b, problem.alpha_V, problem.r,
                                    (float(grid.min()), float(grid.max())), max(100, len(grid)), tol)
    anchored = float(phi_candidate.value(problem.s0)) >= problem.eta - tol
    pre = ineq.passed and anchored
    gap = np.asarray(phi_candidate.value(grid)) - np.asarray(reference.value(grid))
    k = int(np.argmin(gap))
    dominates = bool(gap[k] >= -tol)
    if pre:
        note = "hypotheses met"
    elif not anchored:
        note = "precondition unmet: phi(s0) < eta"
    else:
        note = f"precondition unmet: margin inequality violated at s={ineq.argmin:.6g}"
    return MinimalityReport(pre, dominates, float(gap[k]), float(grid[k]), dominates or not pre, note)
