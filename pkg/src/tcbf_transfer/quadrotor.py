"""Rigid-body quadrotor: state, parameters, dynamics and motor mixing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matops

E3 = np.array([0.0, 0.0, 1.0])


def hat(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def vee(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def rot_z(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def reorthonormalize(R) -> np.ndarray:
    """Gram-Schmidt on the columns; keeps the first column direction."""
    R = np.asarray(R, dtype=float)
    x = R[:, 0] / np.linalg.norm(R[:, 0])
    y = R[:, 1] - (x @ R[:, 1]) * x
    y /= np.linalg.norm(y)
    z = np.cross(x, y)
    return np.column_stack([x, y, z])


def orthonormality_error(R) -> float:
    R = np.asarray(R, dtype=float)
    return float(np.abs(R.T @ R - np.eye(3)).max())


@dataclass(frozen=True)
class QuadParams:
    m: float = 1.0
    g: float = 9.81
    J: np.ndarray = field(default_factory=lambda: np.diag([0.01, 0.01, 0.02]))
    l: float = 0.2
    k_F: float = 1e-5
    k_M: float = 5e-7
    f_max: float | None = None
    M_max: float = 1.0

    def __post_init__(self):
        J = np.asarray(self.J, dtype=float)
        object.__setattr__(self, "J", J)
        for name in ("m", "g", "l", "k_F", "k_M"):
            if not getattr(self, name) > 0:
                raise ValueError(f"quadrotor parameter {name} must be positive")
        if not matops.is_positive_definite(J):
            raise ValueError("inertia J must be symmetric positive definite")
        if self.f_max is None:
            object.__setattr__(self, "f_max", 4.0 * self.m * self.g)
        object.__setattr__(self, "_J_inv", matops.inverse(J))

    @property
    def J_inv(self) -> np.ndarray:
        return self._J_inv

    def mixing_matrix(self) -> np.ndarray:
        kF, kM, l = self.k_F, self.k_M, self.l
        return np.array([
            [kF, kF, kF, kF],
            [0.0, kF * l, 0.0, -kF * l],
            [-kF * l, 0.0, kF * l, 0.0],
            [-kM, kM, -kM, kM],
        ])

    def to_dict(self) -> dict:
        return {"m": self.m, "g": self.g, "J": self.J.tolist(), "l": self.l, "k_F": self.k_F,
                "k_M": self.k_M, "f_max": self.f_max, "M_max": self.M_max}


@dataclass(frozen=True)
class ConcreteState:
    p2: np.ndarray
    v2: np.ndarray
    R: np.ndarray
    Omega: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p2", np.asarray(self.p2, dtype=float).reshape(3))
        object.__setattr__(self, "v2", np.asarray(self.v2, dtype=float).reshape(3))
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float).reshape(3, 3))
        object.__setattr__(self, "Omega", np.asarray(self.Omega, dtype=float).reshape(3))

    @classmethod
    def hover_at(cls, p) -> "ConcreteState":
        return cls(np.asarray(p, float), np.zeros(3), np.eye(3), np.zeros(3))

    def as_vector(self) -> np.ndarray:
        """Flat 18-vector (p, v, R row-major, Omega)."""
        return np.concatenate([self.p2, self.v2, self.R.reshape(-1), self.Omega])

    @classmethod
    def from_vector(cls, x) -> "ConcreteState":
        x = np.asarray(x, dtype=float)
        return cls(x[0:3], x[3:6], x[6:15].reshape(3, 3), x[15:18])

    def is_valid(self, tol: float = 1e-6) -> bool:
        return orthonormality_error(self.R) <= tol and np.linalg.det(self.R) > 0


@dataclass(frozen=True)
class WrenchInput:
    f: float
    M: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "f", float(self.f))
        object.__setattr__(self, "M", np.asarray(self.M, dtype=float).reshape(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.f], self.M])

    @classmethod
    def from_vector(cls, u) -> "WrenchInput":
        u = np.asarray(u, dtype=float)
        return cls(u[0], u[1:4])


def dynamics_vec(params: QuadParams, x, u) -> np.ndarray:
    """Vector field on the flat 18-vector state for input u = (f, M)."""
    v = x[3:6]
    R = x[6:15].reshape(3, 3)
    Om = x[15:18]
    f, M = u[0], u[1:4]
    dv = -params.g * E3 + (f / params.m) * R[:, 2]
    dR = R @ hat(Om)
    dOm = params.J_inv @ (M - np.cross(Om, params.J @ Om))
    return np.concatenate([v, dv, dR.reshape(-1), dOm])


def dynamics(params: QuadParams, x2: ConcreteState, u2: WrenchInput) -> np.ndarray:
    return dynamics_vec(params, x2.as_vector(), u2.as_vector())


def translational_accel(params: QuadParams, x2: ConcreteState, u2: WrenchInput) -> np.ndarray:
    return -params.g * E3 + (u2.f / params.m) * x2.R[:, 2]


def control_affine(params: QuadParams, x2: ConcreteState) -> tuple[np.ndarray, np.ndarray]:
    """Drift (18,) and input matrix (18, 4) with f2 = drift + G u2."""
    x = x2.as_vector()
    drift = dynamics_vec(params, x, np.zeros(4))
    G = np.zeros((18, 4))
    G[3:6, 0] = x2.R[:, 2] / params.m
    G[15:18, 1:4] = params.J_inv
    return drift, G


@dataclass(frozen=True)
class MixingResult:
    omega_sq: np.ndarray  # realized (clamped) squared rotor speeds
    commanded_omega_sq: np.ndarray
    realized: WrenchInput
    saturated: bool


def motor_mixing(params: QuadParams, u2: WrenchInput) -> MixingResult:
    """Squared rotor speeds for a wrench; negative entries are clamped to 0.

    The realized wrench is recomputed through the forward map so the
    dynamics see what the rotors can actually produce.
    """
    A = params.mixing_matrix()
    w2 = matops.solve_linear(A, u2.as_vector())
    clamped = np.maximum(w2, 0.0)
    saturated = bool(np.any(w2 < 0.0))
    realized = WrenchInput.from_vector(A @ clamped) if saturated else u2
    return MixingResult(clamped, w2, realized, saturated)


def unmix(params: QuadParams, omega_sq) -> WrenchInput:
    return WrenchInput.from_vector(params.mixing_matrix() @ np.asarray(omega_sq, dtype=float))
