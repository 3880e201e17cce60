"""Truncated Mellin transforms and scaling-function-equation zeta assembly.

The truncated transform M_a^b[f](s) = int_a^b t^{s-1} f(t) dt is evaluated
under the substitution t = e^{-u} with composite Gauss-Legendre panels whose
width tracks the oscillation frequency Im(s).  On top of it sit the entire
part xi of a scaling function equation (SFE) f = L[f] + R, the factorization
zeta_f(s) = zeta_Phi(alpha*s) * (xi(s) + zeta_R(s)), and an exact
word-expansion solver used as an independent oracle for that factorization.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import PchipInterpolator

from .errors import (CoverageError, DivergenceError, ResolutionError,
                     ResourceLimitError)
from .zeta import RatioProfile, scaling_zeta

MIN_SAMPLES_PER_DECADE = 64
QUAD_ATOL = 1e-10
QUAD_RTOL = 1e-10
QUAD_MAX_LEVELS = 20
ZETA_R_MARGIN = 0.05
_GAUSS_ORDER = 12
_WORD_BUDGET = 10 ** 7


class SampledFunction:
    """A positive-time function known on a dense log-spaced grid.

    ``sigma0`` asserts the small-time growth f(t) = O(t^{-sigma0}) as t -> 0+,
    which closes the quadrature below the smallest sample.  Values between
    samples come from monotone cubic interpolation in log t.
    """

    def __init__(self, t_grid, values, sigma0: float = 0.0, description: str = ""):
        t = np.asarray(t_grid, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or len(t) < 2:
            raise ValueError("need 1-D t_grid and values of equal length >= 2")
        if t[0] <= 0 or np.any(np.diff(t) <= 0):
            raise ValueError("t_grid must be strictly increasing and positive")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        decades = math.log10(t[-1] / t[0])
        if decades > 0 and (len(t) - 1) / decades < MIN_SAMPLES_PER_DECADE - 1e-9:
            raise ResolutionError(
                f"{(len(t) - 1) / decades:.1f} samples/decade, "
                f"need >= {MIN_SAMPLES_PER_DECADE}")
        self.t_grid = t
        self.values = v
        self.sigma0 = float(sigma0)
        self.description = description
        self._interp = PchipInterpolator(np.log(t), v, extrapolate=False)

    @property
    def t_min(self) -> float:
        return float(self.t_grid[0])

    @property
    def t_max(self) -> float:
        return float(self.t_grid[-1])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t_min * (1 - 1e-12)) or np.any(t > self.t_max * (1 + 1e-12)):
            raise CoverageError(
                f"evaluation at t outside [{self.t_min:.6g}, {self.t_max:.6g}]")
        out = self._interp(np.log(np.clip(t, self.t_min, self.t_max)))
        return out if out.ndim else float(out)

    def tail_coefficient(self) -> float:
        """c such that f(t) ~ c * t^{-sigma0} near the smallest sample.

        Fitted by least squares over the first sampled decade with the
        exponent held at the asserted sigma0.
        """
        mask = self.t_grid <= self.t_grid[0] * 10
        tt, vv = self.t_grid[mask], self.values[mask]
        w = tt ** (-self.sigma0)
        denom = float(np.dot(w, w))
        return float(np.dot(w, vv) / denom) if denom > 0 else 0.0

    @classmethod
    def from_series(cls, t, v, sigma0: float = 0.0, description: str = "",
                    per_decade: int = MIN_SAMPLES_PER_DECADE):
        """Resample an arbitrary increasing series onto a dense log grid."""
        t = np.asarray(t, dtype=float)
        v = np.asarray(v, dtype=float)
        decades = math.log10(t[-1] / t[0])
        n = max(int(np.ceil(decades * per_decade)) + 1, 2)
        grid = np.geomspace(t[0], t[-1], n)
        vals = PchipInterpolator(np.log(t), v)(np.log(grid))
        return cls(grid, vals, sigma0=sigma0, description=description)

    def to_csv(self, path):
        path = Path(path)
        np.savetxt(path, np.column_stack([self.t_grid, self.values]),
                   delimiter=",", header="t,value", comments="", fmt="%.17g")
        sidecar = path.with_suffix(path.suffix + ".json")
        sidecar.write_text(json.dumps(
            {"sigma0": self.sigma0, "t_max": self.t_max,
             "description": self.description}, indent=2) + "\n")

    @classmethod
    def from_csv(cls, path) -> "SampledFunction":
        path = Path(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        sidecar = path.with_suffix(path.suffix + ".json")
        meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
        return cls(data[:, 0], data[:, 1], sigma0=meta.get("sigma0", 0.0),
                   description=meta.get("description", ""))


@dataclass(frozen=True)
class MellinValue:
    s: complex
    value: complex
    quadrature_error: float

    def __post_init__(self):
        if not (np.isfinite(self.value.real) and np.isfinite(self.value.imag)):
            raise ValueError("non-finite transform value")
        if self.quadrature_error < 0:
            raise ValueError("negative quadrature error")


def _composite_gauss(h, u0, u1, n_panels):
    nodes, weights = leggauss(_GAUSS_ORDER)
    edges = np.linspace(u0, u1, n_panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    u = (mid[:, None] + half * nodes[None, :]).ravel()
    vals = h(u).reshape(n_panels, _GAUSS_ORDER)
    return half * np.sum(vals @ weights)


def _adaptive_mellin_quad(f, lo, hi, s):
    """int_lo^hi t^{s-1} f(t) dt via t = e^{-u} with panel doubling."""
    if hi <= lo:
        return 0.0 + 0.0j, 0.0
    u0, u1 = -math.log(hi), -math.log(lo)

    def h(u):
        t = np.exp(-u)
        return np.exp(-s * u) * np.asarray(f(t), dtype=complex)

    width_cap = 2 * math.pi / max(abs(s.imag), 1.0)
    n = max(4, int(math.ceil((u1 - u0) / width_cap)))
    prev = None
    for _ in range(QUAD_MAX_LEVELS):
        cur = _composite_gauss(h, u0, u1, n)
        if prev is not None:
            err = abs(cur - prev)
            if err < QUAD_ATOL + QUAD_RTOL * abs(cur):
                return cur, err
        prev = cur
        n *= 2
    return cur, abs(cur - prev)


def truncated_mellin(f, a: float, b: float, s: complex,
                     sigma0: float | None = None) -> MellinValue:
    """M_a^b[f](s) for a SampledFunction or an arbitrary callable.

    With a = 0 the integral converges only for Re(s) > sigma0; the segment
    below the smallest sample (or below b*1e-8 for callables) is closed
    analytically with the fitted power law c*t^{-sigma0}.
    """
    s = complex(s)
    if not 0 <= a < b:
        raise ValueError("need 0 <= a < b")
    if isinstance(f, SampledFunction):
        if sigma0 is None:
            sigma0 = f.sigma0
        if b > f.t_max * (1 + 1e-12):
            raise CoverageError(
                f"transform needs samples up to b = {b:.6g}, have {f.t_max:.6g}")
        density = (len(f.t_grid) - 1) / max(math.log(f.t_max / f.t_min), 1e-300)
        if abs(s.imag) > math.pi * density / 2:
            raise ResolutionError(
                f"|Im s| = {abs(s.imag):.3g} undersampled at "
                f"{density:.1f} samples per log-unit")
        t_cut = f.t_min
    else:
        if sigma0 is None:
            sigma0 = 0.0
        t_cut = b * 1e-8
    if a == 0 and s.real <= sigma0:
        raise DivergenceError(
            f"M_0^b diverges: Re(s) = {s.real} <= sigma0 = {sigma0}")

    value = 0.0 + 0.0j
    err = 0.0
    lo = a
    if lo < t_cut:
        # analytic power-law closure on [lo, min(t_cut, b)]
        top = min(t_cut, b)
        if isinstance(f, SampledFunction):
            c = f.tail_coefficient()
        else:
            c = float(f(t_cut)) * t_cut ** sigma0
        p = s - sigma0
        head = c * top ** p / p
        if lo > 0:
            head -= c * lo ** p / p
        value += head
        lo = top
    if lo < b:
        part, part_err = _adaptive_mellin_quad(f, lo, b, s)
        value += part
        err += part_err
    return MellinValue(s=s, value=complex(value), quadrature_error=float(err))


def scaling_identity_residual(f, lam: float, delta: float, s: complex,
                              alpha: float = 2.0,
                              sigma0: float | None = None) -> float:
    """Relative defect of M^delta[f(t/lam^alpha)](s) = lam^(alpha*s) M^(delta/lam^alpha)[f](s)."""
    s = complex(s)
    scale = lam ** alpha
    if sigma0 is None:
        sigma0 = f.sigma0 if isinstance(f, SampledFunction) else 0.0
    if isinstance(f, SampledFunction):
        # f(t/scale) sampled exactly on the rescaled grid
        g = SampledFunction(f.t_grid * scale, f.values, sigma0=f.sigma0)
    else:
        def g(t):
            return f(np.asarray(t) / scale)
    lhs = truncated_mellin(g, 0.0, delta, s, sigma0=sigma0).value
    rhs = scale ** s * truncated_mellin(f, 0.0, delta / scale, s,
                                        sigma0=sigma0).value
    return float(abs(lhs - rhs) / (1 + abs(rhs)))


def xi_entire(profile: RatioProfile, alpha: float, f, delta: float,
              s: complex, sigma0: float | None = None) -> complex:
    """Entire part of the SFE zeta: sum_k m_k r_k^(alpha*s) M_delta^(delta/r_k^alpha)[f](s).

    Every transform starts at delta > 0, so the sum is entire in s.
    """
    s = complex(s)
    r_min = profile.ratios[-1]
    needed = delta / r_min ** alpha
    if isinstance(f, SampledFunction) and f.t_max < needed * (1 - 1e-12):
        raise CoverageError(
            f"xi needs f sampled up to {needed:.6g}, have t_max = {f.t_max:.6g}")
    total = 0.0 + 0.0j
    for r, m in zip(profile.ratios, profile.multiplicities):
        upper = delta / r ** alpha
        mv = truncated_mellin(f, delta, upper, s, sigma0=sigma0)
        total += m * r ** (alpha * s) * mv.value
    return total


def sfe_zeta_assemble(profile: RatioProfile, alpha: float, f, R,
                      delta: float, s: complex) -> complex:
    """zeta_f(s; delta) = zeta_Phi(alpha*s) * (xi(s; delta) + zeta_R(s; delta)).

    zeta_R = M_0^delta[R](s) is refused within ``ZETA_R_MARGIN`` of its
    abscissa sigma_R rather than extrapolated.
    """
    s = complex(s)
    sigma_r = R.sigma0 if isinstance(R, SampledFunction) else 0.0
    if s.real <= sigma_r + ZETA_R_MARGIN:
        raise DivergenceError(
            f"Re(s) = {s.real} within {ZETA_R_MARGIN} of the remainder "
            f"abscissa sigma_R = {sigma_r}")
    z = scaling_zeta(profile, alpha * s)     # raises AtPoleError at poles
    xi = xi_entire(profile, alpha, f, delta, s)
    zeta_r = truncated_mellin(R, 0.0, delta, s).value
    return complex(z * (xi + zeta_r))


def synthetic_sfe_solve(profile: RatioProfile, alpha: float, R,
                        support: tuple, t: float) -> float:
    """Exact solution of f = L[f] + R by word expansion, L[f](t) = sum f(t/r^alpha).

    ``R`` must vanish outside [support[0], support[1]] with support[0] > 0.
    Each word w of maps contributes R(t / r_w^alpha); arguments grow past the
    support end, so the sum is finite.
    """
    t0, t1 = support
    if not 0 < t0 < t1:
        raise ValueError("need 0 < support start < support end")
    inv_scales = [(r ** -alpha, m) for r, m in
                  zip(profile.ratios, profile.multiplicities)]
    budget = [_WORD_BUDGET]

    def expand(x):
        if x > t1 * (1 + 1e-15):
            return 0.0
        budget[0] -= 1
        if budget[0] < 0:
            raise ResourceLimitError(
                f"word expansion exceeded {_WORD_BUDGET} terms")
        acc = float(R(x)) if x >= t0 * (1 - 1e-15) else 0.0
        for inv, m in inv_scales:
            acc += m * expand(x * inv)
        return acc

    return expand(float(t))


def sample_sfe_solution(profile: RatioProfile, alpha: float, R, support: tuple,
                        t_min: float, t_max: float | None = None,
                        sigma0: float | None = None,
                        per_decade: int = 2 * MIN_SAMPLES_PER_DECADE
                        ) -> SampledFunction:
    """Tabulate the SFE solution f = L[f] + R on a log grid.

    Uses the downward recurrence f(t) = R(t) + sum m_k f(t / r_k^alpha):
    arguments only grow, and f vanishes above the support end, so the grid is
    filled from the top.  For lattice profiles the grid is aligned with the
    generator and the recurrence is exact at every node; otherwise the
    already-computed suffix is interpolated.
    """
    from .zeta import classify_lattice, moran_dimension

    t0, t1 = support
    if sigma0 is None:
        sigma0 = moran_dimension(profile) / alpha
    if t_max is None:
        t_max = t1
    cls = classify_lattice(profile)
    if cls.is_lattice:
        step_ln = alpha * math.log(1 / cls.generator)
        q = max(1, int(math.ceil(per_decade * step_ln / math.log(10))))
        h_ln = step_ln / q
        n = int(math.ceil(math.log(t1 / t_min) / h_ln)) + 1
        t_desc = t1 * np.exp(-h_ln * np.arange(n))
        offsets = [e * q for e in cls.exponents]
        f_desc = np.zeros(n)
        for j in range(n):
            acc = float(R(t_desc[j]))
            for off, m in zip(offsets, profile.multiplicities):
                if j - off >= 0:
                    acc += m * f_desc[j - off]
            f_desc[j] = acc
        grid, vals = t_desc[::-1].copy(), f_desc[::-1].copy()
        spacing_ln = h_ln
    else:
        n = max(int(np.ceil(math.log10(t1 / t_min) * per_decade)) + 1, 2)
        grid = np.geomspace(t_min, t1, n)
        vals = np.zeros(n)
        inv_scales = [(r ** -alpha, m) for r, m in
                      zip(profile.ratios, profile.multiplicities)]
        log_grid = np.log(grid)
        for j in range(n - 1, -1, -1):
            acc = float(R(grid[j]))
            for inv, m in inv_scales:
                x = grid[j] * inv
                if x <= t1 * (1 + 1e-15):
                    suffix = slice(j + 1, n)
                    acc += m * float(np.interp(math.log(x), log_grid[suffix],
                                               vals[suffix]))
            vals[j] = acc
        spacing_ln = math.log(grid[1] / grid[0])
    if t_max < t1:
        keep = grid <= t_max * (1 + 1e-15)
        grid, vals = grid[keep], vals[keep]
    elif t_max > t1:
        # f vanishes above the support end; pad the grid with zeros
        n_ext = int(math.ceil(math.log(t_max / t1) / spacing_ln))
        ext = t1 * np.exp(spacing_ln * np.arange(1, n_ext + 1))
        grid = np.concatenate([grid, ext])
        vals = np.concatenate([vals, np.zeros(n_ext)])
    return SampledFunction(grid, vals, sigma0=sigma0,
                           description="SFE downward-recurrence solution")
