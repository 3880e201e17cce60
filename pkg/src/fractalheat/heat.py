"""Heat content on rasterized domains: implicit finite differences and Monte Carlo.

The model problem is u = 0 at time zero, u = 1 on the boundary, diffusivity C.
The finite-difference path integrates backward Euler with a 5-point Laplacian
and reports E(t) = sum of u times the cell area.  A Brownian-motion estimator
of the same quantity serves as an independent oracle, and the scaling-law
remainder R(t) = E(t) - sum m r^2 E(t/r^2) feeds the asymptotic machinery.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from matplotlib.path import Path as MplPath
from scipy.interpolate import PchipInterpolator
from scipy.ndimage import label
from scipy.sparse.linalg import cg

from .errors import CoverageError, FitWindowError, GeometryError, SolverError
from .geometry import GridDomain, Polyline
from .series import TimeSeries
from .zeta import RatioProfile

try:
    import pyamg
    _HAVE_PYAMG = True
except ImportError:          # pragma: no cover
    _HAVE_PYAMG = False

CG_TOL = 1e-10
LOCAL_ERR_FRAC = 1e-4        # substep error budget, fraction of domain area
_U_SLACK = 1e-8              # tolerated round-off outside [0,1]


@dataclass(frozen=True)
class HeatRun:
    """A finite-difference heat-content computation and its provenance."""

    grid: GridDomain
    diffusivity: float
    E: TimeSeries
    scheme: dict

    def __post_init__(self):
        v = self.E.v
        if np.any(np.diff(v) < -_U_SLACK * self.grid.area):
            raise ValueError("heat content must be nondecreasing")
        if np.any(v < -_U_SLACK) or np.any(v > self.grid.area * (1 + 1e-6)):
            raise ValueError("heat content outside [0, area]")


def _interior_operator(grid: GridDomain):
    """5-point Laplacian (times h^2) with boundary faces folded into diag/rhs.

    The Dirichlet wall sits on the face between an interior cell and its
    non-interior neighbor; the ghost value 2 - u keeps the face average at 1.
    Returns (A, b) with A u ~ -h^2 Lap u and b the constant boundary load.
    """
    mask = grid.interior_mask
    ny, nx = mask.shape
    idx = -np.ones(mask.shape, dtype=np.int64)
    n_in = int(mask.sum())
    idx[mask] = np.arange(n_in)

    rows, cols, vals = [], [], []
    diag = np.zeros(n_in)
    b = np.zeros(n_in)
    for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nb = np.zeros_like(mask)
        src = np.zeros_like(mask)
        ys = slice(max(dy, 0), ny + min(dy, 0))
        yd = slice(max(-dy, 0), ny + min(-dy, 0))
        xs = slice(max(dx, 0), nx + min(dx, 0))
        xd = slice(max(-dx, 0), nx + min(-dx, 0))
        nb[yd, xd] = mask[ys, xs]          # neighbor-in-direction is interior
        both = mask & nb
        rows.append(idx[both])
        cols.append(idx[np.roll(np.roll(both, dy, 0), dx, 1)])
        diag[idx[both]] += 1.0
        wall = mask & ~nb                  # face against rim/exterior
        diag[idx[wall]] += 2.0
        b[idx[wall]] += 2.0
        vals.append(-np.ones(both.sum()))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    A = sp.csr_matrix((np.concatenate([vals, diag]),
                       (np.concatenate([rows, np.arange(n_in)]),
                        np.concatenate([cols, np.arange(n_in)]))),
                      shape=(n_in, n_in))
    return A, b


class _ImplicitStepper:
    """Backward-Euler stepper with a preconditioner reused across nearby dt."""

    def __init__(self, A, b, h, C, cg_tol=CG_TOL):
        self.A = A
        self.b = b
        self.h = h
        self.C = C
        self.cg_tol = cg_tol
        self.n = A.shape[0]
        self.identity = sp.identity(self.n, format="csr")
        self._lam = None
        self._M = None
        self._precond = None
        self._precond_lam = None
        self.solves = 0
        self.iterations = 0

    def _prepare(self, dt):
        lam = self.C * dt / self.h ** 2
        if self._lam is None or abs(lam - self._lam) > 1e-15 * lam:
            self._M = (self.identity + lam * self.A).tocsr()
            self._lam = lam
        if _HAVE_PYAMG and (self._precond is None
                            or not 0.5 <= lam / self._precond_lam <= 2.0):
            # the AMG setup draws start vectors from the global RNG; pin the
            # state so repeated runs are bit-identical
            state = np.random.get_state()
            np.random.seed(0)
            try:
                ml = pyamg.smoothed_aggregation_solver(self._M, max_coarse=200)
            finally:
                np.random.set_state(state)
            self._precond = ml.aspreconditioner(cycle="V")
            self._precond_lam = lam

    def step(self, u, dt):
        self._prepare(dt)
        rhs = u + self._lam * self.b
        it = [0]

        def count(_):
            it[0] += 1

        u_new, info = cg(self._M, rhs, x0=u, rtol=self.cg_tol, atol=0.0,
                         M=self._precond, maxiter=2000, callback=count)
        if info != 0:
            raise SolverError(f"CG failed to reach {self.cg_tol} in "
                              f"{it[0]} iterations (info={info})")
        self.solves += 1
        self.iterations += it[0]
        return u_new


def fd_heat_solve(grid: GridDomain, C: float, t_grid,
                  steps_per_time: int = 12, cg_tol: float = CG_TOL,
                  adaptive: bool = True) -> HeatRun:
    """Heat content E(t) on the rasterized domain at the requested times.

    Backward Euler with dt proportional to elapsed time (``steps_per_time``
    substeps per unit of relative time); when ``adaptive``, the first substep
    of each block is checked by step doubling against the local error budget
    and dt is refined as needed.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) == 0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be increasing and nonempty")
    if t_grid[0] <= 0:
        raise ValueError("times must be positive (E(0) = 0 identically)")
    h, area = grid.h, grid.area
    if t_grid[-1] < 10 * h ** 2 / C:
        raise ValueError(f"largest time must be >= 10 h^2/C = {10 * h ** 2 / C:.3g}")
    n_comp = label(grid.interior_mask)[1]
    if n_comp != 1:
        raise GeometryError(f"interior has {n_comp} connected components")

    A, b = _interior_operator(grid)
    stepper = _ImplicitStepper(A, b, h, C, cg_tol)
    u = np.zeros(A.shape[0])
    t_now = 0.0
    E = np.empty(len(t_grid))
    err_budget = LOCAL_ERR_FRAC * area
    wall = time.time()
    for i, target in enumerate(t_grid):
        base = target if t_now == 0 else t_now
        n_sub = max(1, int(math.ceil((target - t_now) / (base / steps_per_time))))
        while True:
            dt = (target - t_now) / n_sub
            if not adaptive or i % 8:
                break
            u_full = stepper.step(u, dt)
            u_half = stepper.step(stepper.step(u, dt / 2), dt / 2)
            est = h ** 2 * abs(float(np.sum(u_full - u_half)))
            if est < err_budget or n_sub > 4096:
                u = u_half
                t_now += dt
                n_sub -= 1
                break
            n_sub *= 2
        for _ in range(n_sub):
            u = stepper.step(u, dt)
            t_now += dt
        t_now = target
        if np.min(u) < -_U_SLACK or np.max(u) > 1 + _U_SLACK:
            raise SolverError(f"maximum principle violated: u in "
                              f"[{np.min(u):.3g}, {np.max(u):.3g}]")
        E[i] = h ** 2 * float(np.sum(u))
    scheme = {"method": "backward-euler-5pt", "steps_per_time": steps_per_time,
              "cg_tol": cg_tol, "adaptive": adaptive,
              "solves": stepper.solves, "cg_iterations": stepper.iterations,
              "preconditioner": "amg" if _HAVE_PYAMG else "none",
              "wall_time": time.time() - wall}
    return HeatRun(grid=grid, diffusivity=C, E=TimeSeries(t=t_grid, v=E),
                   scheme=scheme)


def _distance_to_edges(points, edges, chunk=200_000):
    """Euclidean distance from each point to the nearest polygon edge."""
    a = edges[:, 0]
    ab = edges[:, 1] - edges[:, 0]
    ab2 = np.maximum(np.einsum("ij,ij->i", ab, ab), 1e-300)
    out = np.empty(len(points))
    for lo in range(0, len(points), max(1, chunk // max(len(edges), 1))):
        p = points[lo:lo + max(1, chunk // max(len(edges), 1))]
        d = p[:, None, :] - a[None, :, :]
        tpar = np.clip(np.einsum("pej,ej->pe", d, ab) / ab2, 0.0, 1.0)
        proj = d - tpar[:, :, None] * ab[None, :, :]
        out[lo:lo + len(p)] = np.sqrt(
            np.min(np.einsum("pej,pej->pe", proj, proj), axis=1))
    return out


def mc_heat_content(polygon: Polyline, C: float, t: float, n_paths: int,
                    dt: float | None = None, seed: int = 0,
                    bridge: bool = False) -> dict:
    """Brownian-motion estimate of the heat content at a single time.

    Paths start uniformly in the polygon and take Gaussian increments of
    variance 2 C dt per coordinate; the estimate is area times the fraction
    absorbed by time t.  Without the Brownian-bridge crossing correction the
    estimator has a documented O(sqrt(dt)) bias toward survival.
    """
    if t == 0:
        return {"estimate": 0.0, "stderr": 0.0, "n_paths": n_paths,
                "absorbed": 0, "dt": 0.0, "seed": seed}
    if t < 0 or n_paths < 1:
        raise ValueError("need t >= 0 and n_paths >= 1")
    if dt is None:
        dt = t / 200
    if dt > t / 100 * (1 + 1e-12):
        raise ValueError("dt must be at most t/100")
    n_steps = max(1, int(round(t / dt)))
    dt = t / n_steps
    verts = polygon.vertices
    # closed=True consumes the final vertex as the closing marker
    path = MplPath(np.vstack([verts, verts[:1]]), closed=True)
    area = abs(polygon.shoelace_area())
    edges = polygon.edges
    rng = np.random.default_rng(seed)

    # uniform start points by rejection in the bounding box
    lo, hi = verts.min(axis=0), verts.max(axis=0)
    pos = np.empty((0, 2))
    while len(pos) < n_paths:
        cand = rng.uniform(lo, hi, size=(2 * (n_paths - len(pos)) + 16, 2))
        pos = np.vstack([pos, cand[path.contains_points(cand)]])
    pos = pos[:n_paths]

    sigma = math.sqrt(2 * C * dt)
    absorbed = 0
    if bridge:
        d_prev = _distance_to_edges(pos, edges)
    for _ in range(n_steps):
        if len(pos) == 0:
            break
        new = pos + rng.normal(scale=sigma, size=pos.shape)
        inside = path.contains_points(new)
        absorbed += int(np.sum(~inside))
        pos = new[inside]
        if bridge and len(pos):
            d_prev = d_prev[inside]
            d_new = _distance_to_edges(pos, edges)
            p_cross = np.exp(-d_prev * d_new / (C * dt))
            hit = rng.random(len(pos)) < p_cross
            absorbed += int(np.sum(hit))
            pos = pos[~hit]
            d_prev = d_new[~hit]
    frac = absorbed / n_paths
    return {"estimate": area * frac,
            "stderr": area * math.sqrt(max(frac * (1 - frac), 1e-300) / n_paths),
            "n_paths": n_paths, "absorbed": absorbed, "dt": dt, "seed": seed}


def decomposition_remainder(profile: RatioProfile, run: HeatRun) -> TimeSeries:
    """R(t) = E(t) - sum_k m_k r_k^2 E(t / r_k^2) on the covered times.

    The scaled copies are read off the run itself via the 2-scaling law, so R
    is only defined where t / r_min^2 stays within the sampled range.
    """
    t, E = run.E.t, run.E.v
    interp = PchipInterpolator(np.log(t), E)
    r_min = profile.ratios[-1]
    keep = t <= t[-1] * r_min ** 2 * (1 + 1e-12)
    if not np.any(keep):
        raise CoverageError(
            f"run covers [{t[0]:.3g}, {t[-1]:.3g}]; remainder needs "
            f"t <= {t[-1] * r_min ** 2:.3g}")
    tt = t[keep]
    R = interp(np.log(tt)).copy()
    for r, m in zip(profile.ratios, profile.multiplicities):
        R -= m * r ** 2 * interp(np.log(tt / r ** 2))
    return TimeSeries(t=tt, v=R)


def remainder_order_fit(R: TimeSeries, decades: float = 2.0) -> dict:
    """Power-law exponent of |R| near t = 0 by least squares in log-log.

    Fits over the smallest ``decades`` decades of the series; sign changes in
    R are flagged and the fit falls back to |R|.
    """
    span = math.log10(R.t[-1] / R.t[0])
    if span < 2 - 1e-9:
        raise FitWindowError(f"need >= 2 decades of data, have {span:.2f}")
    mask = R.t <= R.t[0] * 10 ** decades
    t, v = R.t[mask], R.v[mask]
    sign_change = bool(np.any(v > 0) and np.any(v < 0))
    mag = np.abs(v)
    good = mag > 0
    if good.sum() < 3:
        raise FitWindowError("remainder vanishes on the fit window")
    x, y = np.log(t[good]), np.log(mag[good])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2,
            "sign_change": sign_change,
            "oscillatory": bool(np.ptp(resid) > 0.1)}
