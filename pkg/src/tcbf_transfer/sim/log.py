"""Time-series record of a closed-loop run and its CSV form.

One row per step k at t = k dt. State columns hold x2(t_k); input columns
hold the wrench computed at that state and applied over [t_k, t_k + dt]
(the last row's inputs are computed but never applied).
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

STATUS_CODES = {"inactive": 0, "qp": 1, "slack": 2}


def column_names(n_obs: int) -> list[str]:
    cols = ["t"]
    cols += [f"p{a}" for a in "xyz"] + [f"v{a}" for a in "xyz"]
    cols += [f"R{i}{j}" for i in range(3) for j in range(3)]
    cols += [f"Omega{a}" for a in "xyz"]
    cols += [f"pd{a}" for a in "xyz"] + [f"vd{a}" for a in "xyz"] + ["yaw_d"]
    for tag in ("nom", "cmd", "real"):
        cols += [f"f_{tag}", f"Mx_{tag}", f"My_{tag}", f"Mz_{tag}"]
    cols += [f"w2_{i}" for i in range(4)] + ["saturated"]
    cols += [f"x1_p{a}" for a in "xyz"] + [f"x1_v{a}" for a in "xyz"]
    cols += ["V", "phi", "dphi"]
    cols += [f"b1_{i}" for i in range(n_obs)]
    cols += [f"b2_{i}" for i in range(n_obs)]
    cols += [f"h_{i}" for i in range(n_obs)]
    cols += ["b2_min", "true_clearance", "inflated_clearance"]
    cols += ["active_mask", "intervention", "slack", "status"]
    return cols


@dataclass
class TrajectoryLog:
    data: np.ndarray  # (steps + 1, len(columns))
    n_obs: int
    dt: float

    @property
    def columns(self) -> list[str]:
        return column_names(self.n_obs)

    def col(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def cols(self, *names: str) -> np.ndarray:
        idx = [self.columns.index(n) for n in names]
        return self.data[:, idx]

    def block(self, prefix: str, count: int) -> np.ndarray:
        if count == 0:
            return np.zeros((self.data.shape[0], 0))
        start = self.columns.index(f"{prefix}0")
        return self.data[:, start:start + count]

    @property
    def t(self) -> np.ndarray:
        return self.col("t")

    @property
    def p(self) -> np.ndarray:
        return self.cols("px", "py", "pz")

    @property
    def v(self) -> np.ndarray:
        return self.cols("vx", "vy", "vz")

    @property
    def R(self) -> np.ndarray:
        return self.data[:, self.columns.index("R00"):self.columns.index("R00") + 9].reshape(-1, 3, 3)

    @property
    def b1(self) -> np.ndarray:
        return self.block("b1_", self.n_obs)

    @property
    def b2(self) -> np.ndarray:
        return self.block("b2_", self.n_obs)

    @property
    def h(self) -> np.ndarray:
        return self.block("h_", self.n_obs)

    def wrench(self, tag: str) -> np.ndarray:
        return self.cols(f"f_{tag}", f"Mx_{tag}", f"My_{tag}", f"Mz_{tag}")

    def subsample(self, stride: int) -> "TrajectoryLog":
        """Every ``stride``-th row, as if logged at stride * dt."""
        if stride < 1:
            raise ValueError("stride must be >= 1")
        return TrajectoryLog(self.data[::stride].copy(), self.n_obs, self.dt * stride)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(f"# dt={self.dt!r} n_obs={self.n_obs}\n")
        buf.write(",".join(self.columns) + "\n")
        for row in self.data:
            buf.write(",".join(repr(float(x)) for x in row) + "\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "TrajectoryLog":
        with open(path) as fh:
            meta = fh.readline().lstrip("# ").split()
            header = fh.readline().strip().split(",")
            kv = dict(item.split("=") for item in meta)
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        n_obs = int(kv["n_obs"])
        if header != column_names(n_obs):
            raise ValueError(f"{path}: column header does not match the log schema")
        return cls(data, n_obs, float(kv["dt"]))
