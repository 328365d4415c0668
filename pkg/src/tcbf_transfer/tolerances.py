from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ToleranceConfig:
    """Numerical thresholds shared across modules.

    Defaults are the contract values; callers may tighten or loosen them for
    exploratory runs but the test-suite always uses the defaults.
    """

    margin_inequality: float = 1e-9
    minimality: float = 1e-9
    margin_anchor: float = 1e-12
    picard_tol: float = 1e-10
    picard_max_iter: int = 50
    picard_grid: int = 512
    ode_blowup: float = 1e12
    lyapunov_rel: float = 1e-9
    decay_rel: float = 1e-9
    output_bound: float = 1e-12
    mismatch: float = 1e-12
    qp_feas: float = 1e-9
    qp_stationarity: float = 1e-8
    qp_complementarity: float = 1e-9
    filter_inactive: float = 1e-9
    rotation_orthonormality: float = 1e-6
    barrier_floor: float = 1e-3
    fd_slack_per_dt: float = 10.0


DEFAULT_TOLERANCES = ToleranceConfig()
