"""Time series container and CSV persistence used by the heat and tube modules."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class TimeSeries:
    """A sampled scalar function of time with strictly increasing abscissae."""

    t: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("t and v must be 1-D arrays of equal length")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("t must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)

    def __len__(self):
        return len(self.t)

    def to_csv(self, path, columns=("t", "v")):
        path = Path(path)
        header = ",".join(columns)
        data = np.column_stack([self.t, self.v])
        np.savetxt(path, data, delimiter=",", header=header, comments="",
                   fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(t=data[:, 0], v=data[:, 1])


def log_grid(t_min: float, t_max: float, per_decade: int = 16) -> np.ndarray:
    """Log-spaced grid over [t_min, t_max] with a fixed point density per decade."""
    if not (0 < t_min < t_max):
        raise ValueError("need 0 < t_min < t_max")
    n = int(np.ceil(np.log10(t_max / t_min) * per_decade)) + 1
    return np.geomspace(t_min, t_max, n)


def write_json_sidecar(path, payload: dict):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
