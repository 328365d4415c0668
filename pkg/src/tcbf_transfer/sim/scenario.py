"""Run configuration: everything needed to reproduce one closed-loop run."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from ..abstraction import ExpCbfParams, Obstacle
from ..margin import Linear, MarginFunction, Zero, closed_form_linear_r, margin_from_dict
from ..nominal.planner import PlannerConfig
from ..nominal.se3 import Se3Gains
from ..quadrotor import QuadParams
from ..simfn import InterfaceGains, SimulationCertificate, build_certificate
from ..tcbf import SLACK_WEIGHT, TransferredBarrier

MODES = ("nominal", "filtered")
WITNESS_MODES = ("exact", "tracked")


class ScenarioError(ValueError):
    """Invalid scenario; ``key`` names the offending config entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class Scenario:
    obstacles: tuple[Obstacle, ...] = ()
    start: tuple[float, float, float] = (0.0, 0.0, 1.0)
    goal: tuple[float, float, float] = (10.0, 0.0, 1.0)
    quad: QuadParams = field(default_factory=QuadParams)
    interface_kp: float = 4.0
    interface_kv: float = 4.0
    Q_diag: tuple[float, ...] = (1.0,) * 6
    # margin: {"kind": "minimal", "eta", "s0"} picks the closed-form minimal
    # solution for the configured rates; any margin dict is also accepted
    margin: dict = field(default_factory=lambda: {"kind": "minimal", "eta": 0.05, "s0": 1.0})
    k1: float = 2.0
    k2: float = 2.0
    k_e: float | None = None
    c_r: float = 0.0
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    avg_speed: float = 1.0
    boundary_order: int = 2
    controller: Se3Gains = field(default_factory=Se3Gains)
    dt: float = 1e-3
    duration: float = 10.0
    rng_seed: int = 0
    mode: str = "filtered"
    witness_mode: str = "exact"
    tracked_offset_p: tuple[float, float, float] = (0.0, 0.0, 0.0)
    tracked_offset_v: tuple[float, float, float] = (0.0, 0.0, 0.0)
    slack_weight: float | None = SLACK_WEIGHT
    name: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        for name in ("start", "goal", "tracked_offset_p", "tracked_offset_v"):
            val = tuple(float(x) for x in getattr(self, name))
            if len(val) != 3:
                raise ScenarioError(name, "expected three components")
            object.__setattr__(self, name, val)
        object.__setattr__(self, "Q_diag", tuple(float(x) for x in self.Q_diag))
        if not 0.0 < self.dt <= 0.01:
            raise ScenarioError("dt", f"must lie in (0, 0.01], got {self.dt}")
        if not self.duration > 0:
            raise ScenarioError("duration", "must be positive")
        if self.mode not in MODES:
            raise ScenarioError("mode", f"must be one of {MODES}, got {self.mode!r}")
        if self.witness_mode not in WITNESS_MODES:
            raise ScenarioError("witness_mode", f"must be one of {WITNESS_MODES}, got {self.witness_mode!r}")
        if len(self.Q_diag) != 6 or min(self.Q_diag) <= 0:
            raise ScenarioError("certificate.Q_diag", "needs six positive entries")
        if not self.avg_speed > 0:
            raise ScenarioError("trajectory.avg_speed", "must be positive")
        if self.c_r < 0:
            raise ScenarioError("cbf.c_r", "must be nonnegative")
        for name in ("start", "goal"):
            p = np.asarray(getattr(self, name))
            for i, o in enumerate(self.obstacles):
                if np.linalg.norm(p - o.center) <= o.rho:
                    raise ScenarioError(name, f"lies inside inflated obstacle {i}")

    def replace(self, **changes) -> "Scenario":
        if "rng_seed" in changes:
            changes.setdefault("planner", dataclasses.replace(self.planner, rng_seed=int(changes["rng_seed"])))
        return dataclasses.replace(self, **changes)

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def cbf(self) -> ExpCbfParams:
        return ExpCbfParams(self.k1, self.k2)

    def certificate(self) -> SimulationCertificate:
        return build_certificate(InterfaceGains.isotropic(self.interface_kp, self.interface_kv),
                                 np.diag(self.Q_diag))

    def r_function(self):
        return Linear(self.c_r) if self.c_r > 0 else Zero()

    def margin_function(self, cert: SimulationCertificate | None = None) -> MarginFunction:
        spec = dict(self.margin)
        if spec.get("kind") == "minimal":
            cert = cert or self.certificate()
            return closed_form_linear_r(float(spec["eta"]), float(spec["s0"]), self.k2, cert.c_V, self.c_r)
        return margin_from_dict(spec)

    def barrier(self) -> TransferredBarrier:
        cert = self.certificate()
        return TransferredBarrier(
            obstacles=self.obstacles,
            cbf=self.cbf,
            cert=cert,
            margin=self.margin_function(cert),
            k_e=self.k_e,
            r=self.r_function(),
            mode=self.witness_mode,
            slack_weight=self.slack_weight,
        )
