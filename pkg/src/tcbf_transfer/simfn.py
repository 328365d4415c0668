"""Simulation function from the quadrotor to the double integrator.

With error z = (p2 - p1, v2 - v1) and interface

    F(x1, x2, u2) = (f/m) R e3 - g e3 + Kp e_p + Kv e_v

the error obeys z' = A z with A = [[0, I], [-Kp, -Kv]]. For Q > 0 and P
solving A^T P + P A = -Q, V = z^T P z is a simulation function with
alpha_V(s) = lambda_min(Q)/lambda_max(P) s and output bound
|p2 - p1| <= sqrt(V / lambda_min(P)).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import matops
from .abstraction import AbstractState, ExpCbfParams, Obstacle, di_dynamics, grad_b1
from .margin import Linear, MarginFunction
from .quadrotor import E3, ConcreteState, QuadParams, WrenchInput, dynamics


@dataclass(frozen=True)
class InterfaceGains:
    Kp: np.ndarray
    Kv: np.ndarray

    def __post_init__(self):
        Kp = np.atleast_2d(np.asarray(self.Kp, dtype=float))
        Kv = np.atleast_2d(np.asarray(self.Kv, dtype=float))
        if Kp.shape != Kv.shape or Kp.shape[0] != Kp.shape[1]:
            raise ValueError("Kp and Kv must be square matrices of equal size")
        object.__setattr__(self, "Kp", Kp)
        object.__setattr__(self, "Kv", Kv)

    @classmethod
    def isotropic(cls, kp: float, kv: float, dim: int = 3) -> "InterfaceGains":
        return cls(kp * np.eye(dim), kv * np.eye(dim))

    @property
    def dim(self) -> int:
        return self.Kp.shape[0]

    def error_matrix(self) -> np.ndarray:
        d = self.dim
        return np.block([[np.zeros((d, d)), np.eye(d)], [-self.Kp, -self.Kv]])


@dataclass(frozen=True)
class SimulationCertificate:
    gains: InterfaceGains
    Q: np.ndarray
    P: np.ndarray
    c_V: float
    gamma_coeff: float
    lambda_min_P: float
    lambda_max_P: float
    lambda_min_Q: float
    lyapunov_residual: float

    @property
    def alpha_V(self) -> Linear:
        return Linear(self.c_V)

    def gamma(self, s):
        return self.gamma_coeff * np.sqrt(np.maximum(s, 0.0))

    def report(self) -> dict:
        return {
            "Kp": self.gains.Kp.tolist(),
            "Kv": self.gains.Kv.tolist(),
            "Q": self.Q.tolist(),
            "P": self.P.tolist(),
            "lambda_min_P": self.lambda_min_P,
            "lambda_max_P": self.lambda_max_P,
            "lambda_min_Q": self.lambda_min_Q,
            "c_V": self.c_V,
            "gamma_coeff": self.gamma_coeff,
            "lyapunov_residual": self.lyapunov_residual,
            "lyapunov_residual_ok": self.lyapunov_residual <= 1e-9 * matops.inf_norm(self.Q),
        }

    def report_json(self) -> str:
        return json.dumps(self.report(), indent=2, sort_keys=True)


def build_certificate(gains: InterfaceGains, Q) -> SimulationCertificate:
    A = gains.error_matrix()
    Q = np.asarray(Q, dtype=float)
    if Q.shape != A.shape:
        raise ValueError(f"Q must be {A.shape}, got {Q.shape}")
    if not matops.is_positive_definite(Q):
        raise matops.NotPositiveDefiniteError("Q must be symmetric positive definite")
    P = matops.solve_lyapunov(A, Q)
    eP = matops.sym_eig(P)
    eQ = matops.sym_eig(Q)
    return SimulationCertificate(
        gains=gains,
        Q=Q,
        P=P,
        c_V=eQ.min / eP.max,
        gamma_coeff=1.0 / np.sqrt(eP.min),
        lambda_min_P=eP.min,
        lambda_max_P=eP.max,
        lambda_min_Q=eQ.min,
        lyapunov_residual=matops.lyapunov_residual(A, P, Q),
    )


# --------------------------------------------------------------------------
# witness modes


class ExactArgmin:
    """Pi(x2) = (p2, v2), the exact minimizer of V(., x2)."""

    name = "exact"

    def witness(self, x2: ConcreteState) -> AbstractState:
        return AbstractState(x2.p2, x2.v2)

    def jacobian(self, x2: ConcreteState) -> np.ndarray:
        D = np.zeros((6, 18))
        D[0:3, 0:3] = np.eye(3)
        D[3:6, 3:6] = np.eye(3)
        return D


class TrackedAbstract:
    """Shadow abstract state integrated alongside the quadrotor under u1 = F.

    The abstract state is not a pointwise function of x2, so the Jacobian is
    the zero map. Mutable; confine each instance to one simulation.
    """

    name = "tracked"

    def __init__(self, x1: AbstractState):
        self.state = x1

    @classmethod
    def offset_from(cls, x2: ConcreteState, dp=(0.0, 0.0, 0.0), dv=(0.0, 0.0, 0.0)) -> "TrackedAbstract":
        return cls(AbstractState(x2.p2 - np.asarray(dp, float), x2.v2 - np.asarray(dv, float)))

    def witness(self, x2: ConcreteState) -> AbstractState:
        return self.state

    def jacobian(self, x2: ConcreteState) -> np.ndarray:
        return np.zeros((6, 18))


WitnessMode = ExactArgmin | TrackedAbstract


def witness(mode: WitnessMode, x2: ConcreteState) -> AbstractState:
    return mode.witness(x2)


def witness_jacobian(mode: WitnessMode, x2: ConcreteState) -> np.ndarray:
    return mode.jacobian(x2)


# --------------------------------------------------------------------------
# V, gradients, interface


def error_state(x1: AbstractState, x2: ConcreteState) -> np.ndarray:
    return np.concatenate([x2.p2 - x1.p1, x2.v2 - x1.v1])


def V(cert: SimulationCertificate, x1: AbstractState, x2: ConcreteState) -> float:
    z = error_state(x1, x2)
    return float(z @ cert.P @ z)


def grad_V(cert: SimulationCertificate, x1: AbstractState, x2: ConcreteState) -> tuple[np.ndarray, np.ndarray]:
    """Gradients w.r.t. x1 (6,) and the flat 18-vector x2."""
    Pz2 = 2.0 * cert.P @ error_state(x1, x2)
    g2 = np.zeros(18)
    g2[0:6] = Pz2
    return -Pz2, g2


def interface_F(cert: SimulationCertificate, params: QuadParams, x1: AbstractState, x2: ConcreteState,
                u2: WrenchInput) -> np.ndarray:
    e_p = x2.p2 - x1.p1
    e_v = x2.v2 - x1.v1
    return (u2.f / params.m) * x2.R[:, 2] - params.g * E3 + cert.gains.Kp @ e_p + cert.gains.Kv @ e_v


def interface_F_affine(cert: SimulationCertificate, params: QuadParams, x1: AbstractState,
                       x2: ConcreteState) -> tuple[np.ndarray, np.ndarray]:
    """F = F0 + F1 u2 with F0 (3,) and F1 (3, 4)."""
    F0 = -params.g * E3 + cert.gains.Kp @ (x2.p2 - x1.p1) + cert.gains.Kv @ (x2.v2 - x1.v1)
    F1 = np.zeros((3, 4))
    F1[:, 0] = x2.R[:, 2] / params.m
    return F0, F1


def mismatch_delta(cert: SimulationCertificate, params: QuadParams, mode: WitnessMode, x2: ConcreteState,
                   u2: WrenchInput) -> np.ndarray:
    """D Pi f2 - f1(Pi, F(Pi, x2, u2))."""
    x1 = mode.witness(x2)
    push = mode.jacobian(x2) @ dynamics(params, x2, u2)
    return push - di_dynamics(x1, interface_F(cert, params, x1, x2, u2))


@dataclass(frozen=True)
class DecayCheck:
    V: float
    Vdot: float
    residual: float
    passed: bool
    output_gap: float
    output_bound: float
    output_ok: bool


def check_decay(cert: SimulationCertificate, params: QuadParams, x1: AbstractState, x2: ConcreteState,
                u2: WrenchInput, rel_tol: float = 1e-9, out_tol: float = 1e-12) -> DecayCheck:
    """Evaluate dV/dt along (f1 with the interface, f2) against -alpha_V(V)."""
    gx1, gx2 = grad_V(cert, x1, x2)
    Vdot = float(gx1 @ di_dynamics(x1, interface_F(cert, params, x1, x2, u2)) + gx2 @ dynamics(params, x2, u2))
    v = V(cert, x1, x2)
    residual = Vdot + cert.c_V * v
    gap = float(np.linalg.norm(x2.p2 - x1.p1))
    bound = float(cert.gamma(v))
    return DecayCheck(v, Vdot, residual, residual <= rel_tol * (1.0 + abs(Vdot)), gap, bound, gap <= bound + out_tol)


def pushforward_gap(cert: SimulationCertificate, params: QuadParams, mode: WitnessMode, x2: ConcreteState,
                    u2: WrenchInput, obs: Obstacle, cbf: ExpCbfParams) -> float:
    """<grad b1(Pi), D Pi f2> minus the abstract Lie derivative with u1 = F."""
    x1 = mode.witness(x2)
    g = grad_b1(x1, obs, cbf)
    lhs = g @ (mode.jacobian(x2) @ dynamics(params, x2, u2))
    rhs = g @ di_dynamics(x1, interface_F(cert, params, x1, x2, u2))
    return float(lhs - rhs)


@dataclass(frozen=True)
class MismatchEstimate:
    samples: int
    sup_delta_norm: float
    sup_h2: float  # sup |grad b1 . delta|
    sup_h2_ratio: float  # sup |grad b1 . delta| / V  (linear gamma estimate)
    sup_h3: float
    sup_h3_ratio: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def estimate_mismatch_bounds(cert: SimulationCertificate, params: QuadParams, obs: Obstacle, cbf: ExpCbfParams,
                             phi: MarginFunction, box: dict, n: int = 1000, seed: int = 0) -> MismatchEstimate:
    """Sampled suprema of the H2/H3 mismatch terms for a tracked abstract state.

    ``box`` gives half-widths: {"p": .., "v": .., "ep": .., "ev": .., "f": (lo, hi), "M": ..}.
    These are empirical estimates over the sampled box, not certificates.
    """
    rng = np.random.default_rng(seed)
    sup_d = sup2 = sup2r = sup3 = sup3r = 0.0
    for _ in range(n):
        p2 = rng.uniform(-box["p"], box["p"], 3)
        v2 = rng.uniform(-box["v"], box["v"], 3)
        R = _random_rotation(rng)
        x2 = ConcreteState(p2, v2, R, rng.normal(size=3))
        x1 = AbstractState(p2 - rng.uniform(-box["ep"], box["ep"], 3), v2 - rng.uniform(-box["ev"], box["ev"], 3))
        u2 = WrenchInput(rng.uniform(*box["f"]), rng.uniform(-box["M"], box["M"], 3))
        mode = TrackedAbstract(x1)
        delta = mismatch_delta(cert, params, mode, x2, u2)
        v = V(cert, x1, x2)
        gb = grad_b1(x1, obs, cbf)
        gx1, _ = grad_V(cert, x1, x2)
        t2 = abs(gb @ delta)
        t3 = abs((gb - float(phi.derivative(v)) * gx1) @ delta) if v > 0 else t2
        sup_d = max(sup_d, float(np.linalg.norm(delta)))
        sup2, sup3 = max(sup2, t2), max(sup3, t3)
        if v > 0:
            sup2r, sup3r = max(sup2r, t2 / v), max(sup3r, t3 / v)
    return MismatchEstimate(n, sup_d, sup2, sup2r, sup3, sup3r)


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_rotation(seed_or_rng) -> np.ndarray:
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else np.random.default_rng(seed_or_rng)
    return _random_rotation(rng)

