"""SE(3) geometric tracking controller producing the nominal wrench."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..quadrotor import E3, ConcreteState, QuadParams, WrenchInput, vee


class ControllerError(RuntimeError):
    pass


@dataclass(frozen=True)
class Se3Gains:
    kp_pos: float = 6.0
    kv_vel: float = 4.5
    kR_att: float = 150.0
    kOmega_rate: float = 25.0

    def __post_init__(self):
        for name in ("kp_pos", "kv_vel", "kR_att", "kOmega_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"controller gain {name} must be positive")

    def to_dict(self) -> dict:
        return {"kp_pos": self.kp_pos, "kv_vel": self.kv_vel, "kR_att": self.kR_att,
                "kOmega_rate": self.kOmega_rate}


@dataclass(frozen=True)
class Reference:
    p: np.ndarray
    v: np.ndarray
    a: np.ndarray
    yaw: float = 0.0

    @classmethod
    def hover(cls, p, yaw: float = 0.0) -> "Reference":
        return cls(np.asarray(p, float), np.zeros(3), np.zeros(3), yaw)


@dataclass(frozen=True)
class Se3Output:
    wrench: WrenchInput
    Rd: np.ndarray
    Omega_d: np.ndarray
    e_R: np.ndarray
    e_Omega: np.ndarray
    F_d: np.ndarray


def attitude_error(R, Rd) -> np.ndarray:
    return 0.5 * vee(Rd.T @ R - R.T @ Rd)


def desired_rotation(F_d, yaw: float, prev_Rd=None, eps: float = 1e-9) -> np.ndarray:
    nF = float(np.linalg.norm(F_d))
    if nF <= eps:
        raise ControllerError(f"desired force degenerate (|F_d| = {nF:.3e})")
    bz = F_d / nF
    sigma = np.array([math.cos(yaw), math.sin(yaw), 0.0])
    cross = np.cross(bz, sigma)
    nc = float(np.linalg.norm(cross))
    if nc <= eps:
        if prev_Rd is None:
            raise ControllerError("thrust direction parallel to the yaw heading and no previous R_d")
        return np.asarray(prev_Rd, float)
    by = cross / nc
    bx = np.cross(by, bz)
    return np.column_stack([bx, by, bz])


def se3_control(params: QuadParams, gains: Se3Gains, x2: ConcreteState, ref: Reference,
                prev_Rd=None, dt: float | None = None) -> Se3Output:
    """Nominal (f, M). Omega_d comes from differencing R_d against ``prev_Rd``
    over ``dt``; without a previous sample it is zero."""
    e_p = x2.p2 - ref.p
    e_v = x2.v2 - ref.v
    F_d = params.m * (-gains.kp_pos * e_p - gains.kv_vel * e_v + params.g * E3 + ref.a)
    Rd = desired_rotation(F_d, ref.yaw, prev_Rd)
    if prev_Rd is not None and dt is not None and dt > 0:
        D = np.asarray(prev_Rd, float).T @ Rd
        Omega_d = vee(0.5 * (D - D.T)) / dt
    else:
        Omega_d = np.zeros(3)
    R = x2.R
    e_R = attitude_error(R, Rd)
    e_Om = x2.Omega - R.T @ Rd @ Omega_d
    f = float(F_d @ R[:, 2])
    M = params.J @ (-gains.kR_att * e_R - gains.kOmega_rate * e_Om)
    return Se3Output(WrenchInput(f, M), Rd, Omega_d, e_R, e_Om, F_d)
