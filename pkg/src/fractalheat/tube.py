"""Inner tube volumes and Minkowski-dimension fits on rasterized domains.

V(t) is the area of the set of interior points within distance t of the
boundary.  Its log-log slope near t = 0 estimates the Minkowski dimension of
the boundary, its Mellin transform gives the tube zeta function, and the
leading exponent pairs with the heat-content exponent through a factor of 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import distance_transform_edt

from .errors import FitWindowError
from .geometry import GridDomain
from .mellin import SampledFunction, truncated_mellin
from .series import TimeSeries

_V_SLACK = 1e-12


@dataclass(frozen=True)
class TubeRun:
    """Tube volume V(t) measured on a rasterized domain."""

    grid: GridDomain
    V: TimeSeries

    def __post_init__(self):
        if np.any(np.diff(self.V.v) < -_V_SLACK):
            raise ValueError("tube volume must be nondecreasing")
        if np.any(self.V.v > self.grid.area * (1 + 1e-9)):
            raise ValueError("tube volume exceeds domain area")


def distance_transform(grid: GridDomain) -> np.ndarray:
    """Distance from each interior cell center to the boundary wall.

    Euclidean distance transform of the interior mask (two-pass exact EDT)
    measures to the nearest non-interior cell center; subtracting h/2 moves
    the reference to the cell interface, leaving an error of at most h/2.
    Non-interior cells hold 0.
    """
    d = distance_transform_edt(grid.interior_mask, sampling=grid.h)
    d = np.maximum(d - grid.h / 2, 0.0)
    d[~grid.interior_mask] = 0.0
    return d


def tube_function(grid: GridDomain, t_values) -> TubeRun:
    """V(t) = h^2 * number of interior cells within distance t of the boundary."""
    t_values = np.asarray(t_values, dtype=float)
    if t_values.ndim != 1 or np.any(np.diff(t_values) <= 0):
        raise ValueError("t_values must be 1-D strictly increasing")
    d = np.sort(distance_transform(grid)[grid.interior_mask])
    counts = np.searchsorted(d, t_values, side="right")
    V = grid.h ** 2 * counts.astype(float)
    return TubeRun(grid=grid, V=TimeSeries(t=t_values, v=V))


def inradius(grid: GridDomain) -> float:
    """Largest interior distance to the boundary (up to raster accuracy)."""
    return float(distance_transform(grid).max())


def minkowski_fit(run: TubeRun, N: int = 2, window: tuple | None = None,
                  period: float | None = None) -> dict:
    """Minkowski dimension of the boundary from the slope of log V vs log t.

    dim = N - slope over the fit window (default [4h, inradius/10]).  When a
    multiplicative ``period`` is given, a single-frequency cosine in log t is
    fitted to the detrended residual and its amplitude and r^2 gain over the
    plain power law are reported.
    """
    t, V = run.V.t, run.V.v
    h = run.grid.h
    resolvable = t >= 2 * h
    if not np.any(resolvable) or \
            t[resolvable][-1] < t[resolvable][0] * 100 * (1 - 1e-9):
        raise FitWindowError("need >= 2 decades of resolvable t (t >= 2h)")
    if window is None:
        window = (4 * h, inradius(run.grid) / 10)
    lo, hi = window
    mask = (t >= lo) & (t <= hi) & (V > 0)
    if mask.sum() < 4:
        raise FitWindowError(
            f"fit window [{lo:.3g}, {hi:.3g}] holds {int(mask.sum())} points")
    x, y = np.log(t[mask]), np.log(V[mask])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    out = {"dim": float(N - slope), "slope": float(slope),
           "intercept": float(intercept),
           "r2": 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot else 1.0,
           "window": (float(lo), float(hi)), "n_points": int(mask.sum())}
    if period is not None:
        theta = 2 * math.pi * x / period
        basis = np.column_stack([np.cos(theta), np.sin(theta)])
        coef, *_ = np.linalg.lstsq(basis, resid, rcond=None)
        amp = float(np.hypot(*coef))
        resid2 = resid - basis @ coef
        out["osc_amplitude"] = amp
        out["osc_phase"] = float(math.atan2(-coef[1], coef[0]))
        out["osc_r2_gain"] = (float(np.sum(resid ** 2) - np.sum(resid2 ** 2))
                              / max(float(np.sum(resid ** 2)), 1e-300))
    return out


def tube_zeta_eval(run: TubeRun, delta: float, s: complex,
                   dim: float | None = None, N: int = 2) -> complex:
    """Relative tube zeta: the transform M^delta[t^{-N} V(t)](s).

    ``dim`` (the fitted Minkowski dimension) closes the sub-grid tail, since
    t^{-N} V grows like t^{-dim} toward 0; defaults to a fresh fit.
    """
    s = complex(s)
    if dim is None:
        dim = minkowski_fit(run, N=N)["dim"]
    t, V = run.V.t, run.V.v
    pos = V > 0
    if not np.any(pos):
        return 0.0 + 0.0j
    t0 = max(t[pos][0], 2 * run.grid.h)
    # keep one sample beyond delta so the transform's upper limit is covered
    above = np.searchsorted(t, delta * (1 + 1e-12))
    keep = (t >= t0) & (np.arange(len(t)) <= min(above, len(t) - 1))
    if t[keep].size < 4 or t[keep][-1] < delta * (1 - 1e-12):
        raise FitWindowError("too few tube samples below delta")
    g = SampledFunction.from_series(t[keep], V[keep] * t[keep] ** (-N),
                                    sigma0=float(dim))
    if s.real <= dim:
        from .errors import DivergenceError
        raise DivergenceError(
            f"tube zeta diverges: Re(s) = {s.real} <= dim = {dim:.4g}")
    return truncated_mellin(g, 0.0, delta, s).value


def compare_exponents(tube_dim: float, heat_slope: float, N: int = 2,
                      tol: float = 0.05) -> dict:
    """Check the factor-of-2 relation between tube and heat leading exponents.

    The tube volume scales like t^(N-D) while the heat content scales like
    t^((N-D)/2), so both fits should point at the same dimension D.
    """
    tube_exponent = N - tube_dim
    d_heat = N - 2 * heat_slope
    ratio = tube_exponent / heat_slope if heat_slope else math.inf
    consistent = abs(tube_exponent / 2 - heat_slope) <= tol
    return {"tube_exponent": float(tube_exponent),
            "heat_exponent": float(heat_slope),
            "dimension_from_tube": float(tube_dim),
            "dimension_from_heat": float(d_heat),
            "exponent_ratio": float(ratio),
            "tolerance": float(tol),
            "consistent": bool(consistent)}
