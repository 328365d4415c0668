"""Double-integrator abstraction with spherical-obstacle barriers.

The abstract state is x1 = (p1, v1) in R^6 with p1' = v1, v1' = u1. For a
sphere (c, rho) the safety function is h = |p1 - c|^2 - rho^2, which has
relative degree two; it is lifted to the zeroing barrier

    b1 = dh/dt + k1 h = 2 (p1 - c).v1 + k1 h

whose rate condition db1/dt >= -k2 b1 is affine in u1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AbstractState:
    p1: np.ndarray
    v1: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p1", np.asarray(self.p1, dtype=float).reshape(3))
        object.__setattr__(self, "v1", np.asarray(self.v1, dtype=float).reshape(3))
        if not (np.all(np.isfinite(self.p1)) and np.all(np.isfinite(self.v1))):
            raise ValueError("abstract state must be finite")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p1, self.v1])

    @classmethod
    def from_vector(cls, x) -> "AbstractState":
        x = np.asarray(x, dtype=float)
        return cls(x[:3], x[3:6])


@dataclass(frozen=True)
class Obstacle:
    center: np.ndarray
    geometric_radius: float
    inflation: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        if not self.geometric_radius > 0:
            raise ValueError(f"geometric radius must be positive, got {self.geometric_radius}")
        if self.inflation < 0:
            raise ValueError(f"inflation must be nonnegative, got {self.inflation}")

    @property
    def rho(self) -> float:
        """Inflated radius used by the barrier."""
        return self.geometric_radius + self.inflation

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "radius": self.geometric_radius, "inflation": self.inflation}


@dataclass(frozen=True)
class ExpCbfParams:
    k1: float
    k2: float

    def __post_init__(self):
        if not (self.k1 > 0 and self.k2 > 0):
            raise ValueError("exponential CBF gains must be strictly positive")

    def alpha_b(self, s):
        return self.k2 * s


def di_dynamics(x1: AbstractState, u1) -> np.ndarray:
    """(p1', v1') = (v1, u1) as a 6-vector."""
    return np.concatenate([x1.v1, np.asarray(u1, dtype=float).reshape(3)])


def h(x1: AbstractState, obs: Obstacle) -> float:
    d = x1.p1 - obs.center
    return float(d @ d - obs.rho**2)


def grad_h(x1: AbstractState, obs: Obstacle) -> np.ndarray:
    """Gradient with respect to (p1, v1)."""
    return np.concatenate([2.0 * (x1.p1 - obs.center), np.zeros(3)])


def b1(x1: AbstractState, obs: Obstacle, params: ExpCbfParams) -> float:
    d = x1.p1 - obs.center
    return float(2.0 * d @ x1.v1 + params.k1 * (d @ d - obs.rho**2))


def grad_b1(x1: AbstractState, obs: Obstacle, params: ExpCbfParams) -> np.ndarray:
    d = x1.p1 - obs.center
    return np.concatenate([2.0 * x1.v1 + 2.0 * params.k1 * d, 2.0 * d])


def abstract_cbf_row(x1: AbstractState, obs: Obstacle, params: ExpCbfParams) -> tuple[np.ndarray, float]:
    """Affine constraint ``a . u1 >= beta`` equivalent to db1/dt >= -k2 b1."""
    g = grad_b1(x1, obs, params)
    a = g[3:]
    beta = -params.k2 * b1(x1, obs, params) - g[:3] @ x1.v1
    return a, float(beta)


def clip_to_row(u1, a: np.ndarray, beta: float) -> np.ndarray:
    """Euclidean projection of u1 onto the halfspace a.u >= beta."""
    u1 = np.asarray(u1, dtype=float)
    gap = beta - a @ u1
    aa = a @ a
    if gap <= 0 or aa == 0:
        return u1
    return u1 + gap / aa * a
