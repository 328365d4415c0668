"""Transferred barrier b2 = b1(Pi(x2)) - phi(V(Pi(x2), x2)) and its QP filter.

For each obstacle the filter enforces

    <grad b1, D Pi f2> - phi'(V) <grad_x2 V, f2> >= -alpha_e(b2) + r(V)

which is affine in u2 = (f, M) for the control-affine quadrotor, and
solves the minimum-deviation QP around the nominal wrench.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import abstraction as ab
from . import simfn
from .margin import KFunction, Linear, MarginFunction, Zero, verify_margin_inequality
from .qp import QpProblem, qp_solve
from .quadrotor import ConcreteState, QuadParams, WrenchInput, control_affine
from .tolerances import DEFAULT_TOLERANCES

log = logging.getLogger(__name__)

SLACK_WEIGHT = 1e6


class MarginInvalidError(ValueError):
    pass


@dataclass(frozen=True)
class TransferredBarrier:
    obstacles: tuple[ab.Obstacle, ...]
    cbf: ab.ExpCbfParams
    cert: simfn.SimulationCertificate
    margin: MarginFunction
    k_e: float | None = None  # alpha_e(s) = k_e s; defaults to k2
    r: KFunction = field(default_factory=Zero)
    mode: str = "exact"  # "exact" | "tracked"
    exact_mismatch: bool = True  # tracked mode: include the abstract-state motion exactly
    slack_weight: float | None = SLACK_WEIGHT
    validate: bool = True

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.k_e is None:
            object.__setattr__(self, "k_e", self.cbf.k2)
        if not self.k_e > 0:
            raise ValueError("k_e must be positive")
        if self.mode not in ("exact", "tracked"):
            raise ValueError(f"unknown witness mode {self.mode!r}")
        if self.validate:
            s_hi = 20.0 * max(self.margin.s0, 1e-12)
            rep = verify_margin_inequality(self.margin, self.alpha_b, self.cert.alpha_V, self.r, (0.0, s_hi),
                                           relative=True)
            if not rep.passed:
                raise MarginInvalidError(
                    f"margin violates phi' alpha_V >= alpha_b(phi) + r at s={rep.argmin:.6g} "
                    f"(residual {rep.min_residual:.3e})")

    @property
    def alpha_b(self) -> Linear:
        return Linear(self.cbf.k2)

    def witness_mode(self, x1: ab.AbstractState | None = None):
        if self.mode == "exact":
            return simfn.ExactArgmin()
        if x1 is None:
            raise ValueError("tracked witness mode needs the current abstract state")
        return simfn.TrackedAbstract(x1)

    def witness(self, x2: ConcreteState, x1: ab.AbstractState | None = None) -> ab.AbstractState:
        return self.witness_mode(x1).witness(x2)


def _margin_terms(barrier: TransferredBarrier, Vbar: float, gx2: np.ndarray) -> tuple[float, float]:
    phi = float(barrier.margin.value(Vbar))
    # phi'(V) grad V with the convention 0 * inf := 0
    if not np.any(gx2):
        return phi, 0.0
    dphi = float(barrier.margin.derivative(Vbar))
    return phi, dphi


def b2(barrier: TransferredBarrier, x2: ConcreteState, obs: ab.Obstacle,
       x1: ab.AbstractState | None = None) -> float:
    xw = barrier.witness(x2, x1)
    Vbar = simfn.V(barrier.cert, xw, x2)
    return ab.b1(xw, obs, barrier.cbf) - float(barrier.margin.value(Vbar))


@dataclass(frozen=True)
class RowTerms:
    a: np.ndarray  # (4,) coefficients on (f, M)
    beta: float
    b2: float
    b1: float
    V: float
    phi: float
    dphi: float


def constraint_row(barrier: TransferredBarrier, params: QuadParams, x2: ConcreteState, obs: ab.Obstacle,
                   x1: ab.AbstractState | None = None, _affine=None) -> RowTerms:
    """Row ``a . u2 >= beta`` of the transferred-barrier QP for one obstacle."""
    mode = barrier.witness_mode(x1)
    xw = mode.witness(x2)
    cert = barrier.cert
    Vbar = simfn.V(cert, xw, x2)
    gx1, gx2 = simfn.grad_V(cert, xw, x2)
    phi, dphi = _margin_terms(barrier, Vbar, gx2)
    b1v = ab.b1(xw, obs, barrier.cbf)
    b2v = b1v - phi
    gb = ab.grad_b1(xw, obs, barrier.cbf)
    drift, Gm = _affine if _affine is not None else control_affine(params, x2)
    D = mode.jacobian(x2)
    gD = gb @ D
    a = gD @ Gm - dphi * (gx2 @ Gm)
    beta = -barrier.k_e * b2v + float(barrier.r(Vbar)) - gD @ drift + dphi * (gx2 @ drift)
    if barrier.mode == "tracked" and barrier.exact_mismatch:
        # abstract state moves with x1' = (v1, F0 + F1 u2)
        w = gb - dphi * gx1
        F0, F1 = simfn.interface_F_affine(cert, params, xw, x2)
        a = a + w[3:] @ F1
        beta = beta - w[:3] @ xw.v1 - w[3:] @ F0
    return RowTerms(np.asarray(a, float), float(beta), float(b2v), float(b1v), float(Vbar), phi, dphi)


@dataclass(frozen=True)
class FilterResult:
    u: WrenchInput
    rows: tuple[RowTerms, ...]
    status: str  # "inactive" | "qp" | "slack"
    slack: float
    active: np.ndarray  # bool per obstacle
    intervention: float

    @property
    def b2(self) -> np.ndarray:
        return np.array([r.b2 for r in self.rows])

    @property
    def V(self) -> float:
        return self.rows[0].V if self.rows else 0.0

    @property
    def active_mask(self) -> int:
        return int(sum(1 << i for i, on in enumerate(self.active) if on))


def filter(barrier: TransferredBarrier, params: QuadParams, x2: ConcreteState, u_nom: WrenchInput,
           x1: ab.AbstractState | None = None, tol: float = DEFAULT_TOLERANCES.filter_inactive) -> FilterResult:
    """Safety filter: witness, margin terms, per-obstacle rows, QP."""
    affine = control_affine(params, x2)
    rows = tuple(constraint_row(barrier, params, x2, o, x1, _affine=affine) for o in barrier.obstacles)
    if not rows:
        return FilterResult(u_nom, rows, "inactive", 0.0, np.zeros(0, bool), 0.0)
    A = np.array([r.a for r in rows])
    beta = np.array([r.beta for r in rows])
    un = u_nom.as_vector()
    if np.all(A @ un >= beta + tol):
        return FilterResult(u_nom, rows, "inactive", 0.0, np.zeros(len(rows), bool), 0.0)
    problem = QpProblem(
        nominal=un,
        A=A,
        b=beta,
        lower=np.array([0.0, -params.M_max, -params.M_max, -params.M_max]),
        upper=np.array([params.f_max, params.M_max, params.M_max, params.M_max]),
        slack_weight=barrier.slack_weight,
    )
    sol = qp_solve(problem)  # QpInfeasibleError propagates when slack is disabled
    status = "slack" if sol.used_slack else "qp"
    if sol.used_slack:
        log.warning("tCBF QP infeasible; slack %.3e used (safety-violation event)", sol.slack)
    active = sol.multipliers > 0
    u = WrenchInput.from_vector(sol.u)
    return FilterResult(u, rows, status, sol.slack, active, float(np.linalg.norm(sol.u - un)))
