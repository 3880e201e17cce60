"""Scaling zeta functions, similarity dimensions, and complex-dimension search.

The scaling zeta function of a ratio profile {r_k : m_k} is 1/P(s) with the
Dirichlet polynomial P(s) = 1 - sum_k m_k r_k^s.  Its poles in a window are
located either through the lattice change of variables z = lambda0^s (ordinary
polynomial roots) or by an argument-principle subdivision search.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .errors import AtPoleError, FractalHeatError
from .geometry import SelfSimilarSystem

POLE_TOL = 1e-10          # |P(omega)| certification threshold
NEWTON_TOL = 1e-13
_CONTOUR_MIN_ABS = 1e-9   # contour too close to a zero -> perturb


@dataclass(frozen=True)
class RatioProfile:
    """Distinct scaling ratios r_1 > ... > r_M in (0,1) with multiplicities."""

    ratios: tuple
    multiplicities: tuple

    def __post_init__(self):
        r = tuple(float(x) for x in self.ratios)
        m = tuple(int(x) for x in self.multiplicities)
        if len(r) != len(m) or not r:
            raise ValueError("need equally many ratios and multiplicities, M >= 1")
        if any(not (0 < x < 1) for x in r):
            raise ValueError("ratios must lie in (0,1)")
        if any(x < 1 for x in m):
            raise ValueError("multiplicities must be >= 1")
        if any(r[i] <= r[i + 1] for i in range(len(r) - 1)):
            raise ValueError("ratios must be strictly decreasing")
        object.__setattr__(self, "ratios", r)
        object.__setattr__(self, "multiplicities", m)

    @classmethod
    def from_system(cls, system: SelfSimilarSystem) -> "RatioProfile":
        ratios, mults = system.distinct_ratios()
        return cls(ratios=tuple(ratios), multiplicities=tuple(mults))

    @classmethod
    def from_pairs(cls, pairs) -> "RatioProfile":
        pairs = sorted(pairs, reverse=True)
        return cls(ratios=tuple(p[0] for p in pairs),
                   multiplicities=tuple(p[1] for p in pairs))

    @property
    def M(self) -> int:
        return len(self.ratios)


def gkf_profile(n: int, r: float) -> RatioProfile:
    """Ratio profile of the (n, r)-von Koch system without building maps."""
    ell = (1 - r) / 2
    if abs(ell - r) <= 1e-12 * r:
        return RatioProfile.from_pairs([(r, n + 1)])
    return RatioProfile.from_pairs([(ell, 2), (r, n - 1)])


def dirichlet_poly(profile: RatioProfile, s) -> complex:
    """P(s) = 1 - sum_k m_k r_k^s (vectorized over s)."""
    s = np.asarray(s, dtype=complex)
    acc = np.ones_like(s)
    with np.errstate(over="ignore", invalid="ignore"):
        for r, m in zip(profile.ratios, profile.multiplicities):
            acc = acc - m * np.exp(s * math.log(r))
    return acc if acc.ndim else complex(acc)


def dirichlet_poly_deriv(profile: RatioProfile, s) -> complex:
    """P'(s) = sum_k m_k r_k^s log(1/r_k)."""
    s = np.asarray(s, dtype=complex)
    acc = np.zeros_like(s)
    with np.errstate(over="ignore", invalid="ignore"):
        for r, m in zip(profile.ratios, profile.multiplicities):
            acc = acc + m * math.log(1 / r) * np.exp(s * math.log(r))
    return acc if acc.ndim else complex(acc)


def scaling_zeta(profile: RatioProfile, s) -> complex:
    """1/P(s); raises AtPoleError within 1e-14 of a pole."""
    p = dirichlet_poly(profile, s)
    if np.min(np.abs(p)) < 1e-14:
        raise AtPoleError(f"scaling zeta evaluated at a pole (|P| = {np.min(np.abs(p)):.2e})")
    return 1.0 / p


def moran_dimension(profile: RatioProfile) -> float:
    """Unique real root D of sum_k m_k r_k^D = 1 (strictly decreasing in D)."""
    def f(d):
        return sum(m * r ** d for r, m in zip(profile.ratios, profile.multiplicities)) - 1.0
    hi = 1.0
    while f(hi) > 0:
        hi *= 2
        if hi > 1e6:
            raise FractalHeatError("failed to bracket Moran root")
    d = brentq(f, 0.0, hi, xtol=1e-15, rtol=8.9e-16)
    # Newton polish on P to certify |P(D)| < 1e-13
    for _ in range(5):
        p = dirichlet_poly(profile, d).real
        if abs(p) < 1e-14:
            break
        d -= p / dirichlet_poly_deriv(profile, d).real
    return float(d)


def lower_dim_bound(profile_or_pairs) -> float:
    """Real root D_l of the small-ratio bound equation, or -inf if none.

    Solves (1/m_M) r_M^{-t} + sum_{k<M} (m_k/m_M)(r_k/r_M)^t = 1 for the
    smallest-ratio group M; the left side increases in t, and D_l
    lower-bounds the real part of every pole.  Accepts either a RatioProfile
    or explicit (ratio, multiplicity) pairs, which may repeat a ratio — then
    only the final pair forms the M group, so structurally distinct but
    numerically equal ratios can push the root to -inf.  A single group
    reduces to the Moran dimension.
    """
    if isinstance(profile_or_pairs, RatioProfile):
        pairs = list(zip(profile_or_pairs.ratios,
                         profile_or_pairs.multiplicities))
    else:
        pairs = [(float(r), int(m)) for r, m in profile_or_pairs]
        if any(pairs[i][0] < pairs[i + 1][0] for i in range(len(pairs) - 1)):
            raise ValueError("pairs must be sorted by nonincreasing ratio")
    rM, mM = pairs[-1]

    def f(t):
        acc = (1.0 / mM) * rM ** (-t)
        for r, m in pairs[:-1]:
            acc += (m / mM) * (r / rM) ** t
        return acc - 1.0

    # limit as t -> -inf: only pairs tied with r_M survive (tie detection
    # tolerates float noise, e.g. (1-r)/2 vs r at r = 1/3)
    tail = sum(m / mM for r, m in pairs[:-1] if abs(r - rM) <= 1e-12 * rM)
    if tail >= 1:
        return float("-inf")
    lo, hi = -1.0, 1.0
    while f(lo) > 0:
        lo *= 2
        if lo < -1e6:
            raise FractalHeatError("failed to bracket lower-dimension root")
    while f(hi) < 0:
        hi *= 2
        if hi > 1e6:
            raise FractalHeatError("failed to bracket lower-dimension root")
    return float(brentq(f, lo, hi, xtol=1e-15, rtol=8.9e-16))


@dataclass(frozen=True)
class LatticeClassification:
    kind: str                      # "Lattice" | "Nonlattice"
    generator: float | None = None
    exponents: tuple | None = None
    max_denominator_checked: int = 0
    residual: float = 0.0

    @property
    def is_lattice(self) -> bool:
        return self.kind == "Lattice"


def classify_lattice(profile: RatioProfile, max_denominator: int = 10 ** 6,
                     tol: float = 1e-9) -> LatticeClassification:
    """Decide (numerically) whether the ratios generate a discrete group.

    Lattice means every ratio is an integer power of one generator lambda0;
    the search bounds rational approximations of log-ratio quotients by
    ``max_denominator``, so a Nonlattice verdict is only "up to that bound".
    """
    if profile.M == 1:
        return LatticeClassification(kind="Lattice", generator=profile.ratios[0],
                                     exponents=(1,),
                                     max_denominator_checked=max_denominator,
                                     residual=0.0)
    log1 = math.log(profile.ratios[0])
    xs = [math.log(r) / log1 for r in profile.ratios]   # x_1 = 1
    q = 1
    for x in xs[1:]:
        frac = Fraction(x).limit_denominator(max_denominator)
        q = q * frac.denominator // math.gcd(q, frac.denominator)
        if q > max_denominator:
            return LatticeClassification(kind="Nonlattice",
                                         max_denominator_checked=max_denominator,
                                         residual=float("inf"))
    exps = [round(x * q) for x in xs]
    residual = max(abs(q * math.log(r) - e * log1)
                   for r, e in zip(profile.ratios, exps))
    if residual >= tol:
        return LatticeClassification(kind="Nonlattice",
                                     max_denominator_checked=max_denominator,
                                     residual=residual)
    g = 0
    for e in exps:
        g = math.gcd(g, e)
    exps = tuple(e // g for e in exps)
    q_eff = q // g if q % g == 0 else q / g
    generator = profile.ratios[0] ** (g / q)
    return LatticeClassification(kind="Lattice", generator=generator,
                                 exponents=exps,
                                 max_denominator_checked=max_denominator,
                                 residual=residual)


@dataclass(frozen=True)
class Window:
    """Search rectangle [sigma_min, sigma_max] x [-T, T] in the complex plane."""
    sigma_min: float
    sigma_max: float
    T: float

    def __post_init__(self):
        if self.sigma_min >= self.sigma_max or self.T <= 0:
            raise ValueError("invalid window")
        if self.T >= 1e5:
            raise ValueError("T must be below 1e5")


@dataclass(frozen=True)
class Pole:
    omega: complex
    multiplicity: int = 1
    residue: complex | None = None    # None for non-simple poles


@dataclass(frozen=True)
class ComplexDimensionSet:
    window: Window
    poles: tuple
    method: str                      # "LatticePolynomial" | "ArgumentPrinciple"
    undecided: tuple = ()            # unresolved boxes (x0, x1, y0, y1)

    def __iter__(self):
        return iter(self.poles)

    def __len__(self):
        return len(self.poles)

    def to_json(self, path=None) -> str:
        payload = {
            "window": {"sigma_min": self.window.sigma_min,
                       "sigma_max": self.window.sigma_max, "T": self.window.T},
            "method": self.method,
            "poles": [{"re": p.omega.real, "im": p.omega.imag,
                       "mult": p.multiplicity,
                       "res_re": None if p.residue is None else p.residue.real,
                       "res_im": None if p.residue is None else p.residue.imag}
                      for p in self.poles],
            "undecided": [list(b) for b in self.undecided],
        }
        text = json.dumps(payload, indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, source) -> "ComplexDimensionSet":
        if isinstance(source, Path) or (isinstance(source, str)
                                        and not source.lstrip().startswith("{")):
            payload = json.loads(Path(source).read_text())
        else:
            payload = json.loads(source)
        w = Window(**{"sigma_min": payload["window"]["sigma_min"],
                      "sigma_max": payload["window"]["sigma_max"],
                      "T": payload["window"]["T"]})
        poles = tuple(
            Pole(omega=complex(p["re"], p["im"]), multiplicity=p["mult"],
                 residue=None if p["res_re"] is None
                 else complex(p["res_re"], p["res_im"]))
            for p in payload["poles"])
        return cls(window=w, poles=poles, method=payload["method"],
                   undecided=tuple(tuple(b) for b in payload.get("undecided", [])))

    def to_csv(self, path):
        rows = ["re,im,mult,res_re,res_im"]
        for p in self.poles:
            rr = "" if p.residue is None else f"{p.residue.real:.17g}"
            ri = "" if p.residue is None else f"{p.residue.imag:.17g}"
            rows.append(f"{p.omega.real:.17g},{p.omega.imag:.17g},{p.multiplicity},{rr},{ri}")
        Path(path).write_text("\n".join(rows) + "\n")


def _newton_polish(profile, s0, max_iter=50):
    s = complex(s0)
    for _ in range(max_iter):
        p = dirichlet_poly(profile, s)
        if abs(p) < NEWTON_TOL:
            return s
        dp = dirichlet_poly_deriv(profile, s)
        if dp == 0:
            return None
        step = p / dp
        s -= step
        if not np.isfinite(s.real) or not np.isfinite(s.imag):
            return None
    return s if abs(dirichlet_poly(profile, s)) < NEWTON_TOL else None


def _lattice_poles(profile, window, classification):
    lam0 = classification.generator
    exps = classification.exponents
    deg = max(e for e in exps)
    coeffs = np.zeros(deg + 1)
    coeffs[0] = 1.0
    for e, m in zip(exps, profile.multiplicities):
        coeffs[e] -= m
    roots = np.roots(coeffs[::-1])
    roots = roots[np.abs(roots) > 1e-14]
    # cluster roots to recover multiplicities
    clusters = []
    for z in roots:
        for c in clusters:
            if abs(z - c[0]) < 1e-7:
                c[1] += 1
                break
        else:
            clusters.append([z, 1])
    log_lam0 = math.log(lam0)
    period = 2 * math.pi / abs(log_lam0)
    poles = []
    for z, mult in clusters:
        base = cmath.log(z) / log_lam0
        m_lo = int(math.floor((-window.T - base.imag) / period)) - 1
        m_hi = int(math.ceil((window.T - base.imag) / period)) + 1
        for k in range(m_lo, m_hi + 1):
            omega = complex(base.real, base.imag + k * period)
            if abs(omega.imag) > window.T + 1e-12:
                continue
            if not (window.sigma_min - 1e-12 <= omega.real <= window.sigma_max + 1e-12):
                continue
            if mult == 1:
                polished = _newton_polish(profile, omega)
                if polished is not None:
                    omega = polished
                residue = 1.0 / dirichlet_poly_deriv(profile, omega)
            else:
                residue = None
            poles.append(Pole(omega=omega, multiplicity=mult, residue=residue))
    return poles


def _rect_samples(rect, n_per_side):
    x0, x1, y0, y1 = rect
    bottom = x0 + (x1 - x0) * np.linspace(0, 1, n_per_side, endpoint=False)
    right = x1 + 1j * (y0 + (y1 - y0) * np.linspace(0, 1, n_per_side, endpoint=False))
    top = x1 - (x1 - x0) * np.linspace(0, 1, n_per_side, endpoint=False)
    left = x0 + 1j * (y1 - (y1 - y0) * np.linspace(0, 1, n_per_side, endpoint=False))
    return np.concatenate([bottom + 1j * y0, right, top + 1j * y1, left])


class _ContourNearZero(Exception):
    pass


def _winding_number(profile, rect, n0=64, max_doublings=12):
    """Zeros of P inside the rectangle, by the winding of P along its boundary."""
    n = n0
    for _ in range(max_doublings):
        s = _rect_samples(rect, n)
        p = dirichlet_poly(profile, s)
        if np.min(np.abs(p)) < _CONTOUR_MIN_ABS:
            raise _ContourNearZero
        phase = np.angle(p)
        jumps = np.diff(np.concatenate([phase, phase[:1]]))
        jumps = (jumps + np.pi) % (2 * np.pi) - np.pi
        if np.max(np.abs(jumps)) < np.pi / 2:
            return int(round(jumps.sum() / (2 * np.pi)))
        n *= 2
    raise FractalHeatError(f"winding number did not stabilize on {rect}")


def _winding_with_retries(profile, rect, retries=5):
    x0, x1, y0, y1 = rect
    eps = 1e-9
    for attempt in range(retries):
        try:
            return _winding_number(profile, rect), rect
        except _ContourNearZero:
            # perturb the rectangle outward slightly and retry
            d = eps * (10 ** attempt) + 1e-7 * (attempt + 1) * max(x1 - x0, y1 - y0)
            rect = (x0 - d, x1 + d, y0 - d, y1 + d)
    raise FractalHeatError(f"contour kept passing near a zero at {rect}")


_SPLIT_FRACTIONS = (0.5, 0.53, 0.47, 0.57, 0.43, 0.61, 0.39, 0.67, 0.33)
_SPLIT_MIN_ABS = 1e-3


def _choose_split(profile, lo, hi, other0, other1, vertical):
    """The split coordinate in (lo, hi) whose line keeps |P| farthest from zero.

    The line is sampled densely enough (spacing <= 1e-4) that a zero of P
    close to it cannot hide between samples.
    """
    best, best_min = None, -1.0
    n = int(np.clip(abs(other1 - other0) / 1e-4, 257, 65537))
    ts = np.linspace(other0, other1, n)
    for frac in _SPLIT_FRACTIONS:
        c = lo + frac * (hi - lo)
        s = (c + 1j * ts) if vertical else (ts + 1j * c)
        min_abs = float(np.min(np.abs(dirichlet_poly(profile, s))))
        if min_abs > best_min:
            best, best_min = c, min_abs
        if min_abs > 100 * _SPLIT_MIN_ABS:
            break           # comfortably clear of every zero
    return best


def _search_rectangle(profile, rect, found, undecided, min_size=1e-8):
    try:
        count, rect = _winding_with_retries(profile, rect)
    except FractalHeatError:
        undecided.append(rect)
        return
    if count == 0:
        return
    x0, x1, y0, y1 = rect
    size = max(x1 - x0, y1 - y0)
    if (count == 1 and size < 0.5) or size < min_size:
        s = _newton_polish(profile, complex(0.5 * (x0 + x1), 0.5 * (y0 + y1)))
        inside = (s is not None and x0 - 1e-9 <= s.real <= x1 + 1e-9
                  and y0 - 1e-9 <= s.imag <= y1 + 1e-9)
        if inside:
            residue = (1.0 / dirichlet_poly_deriv(profile, s)) if count == 1 else None
            found.append(Pole(omega=s, multiplicity=count, residue=residue))
            return
        if size < min_size:
            undecided.append(rect)
            return
        # Newton escaped the box; keep subdividing
    # split along the longer side, with the cut line kept away from zeros of P
    if (x1 - x0) >= (y1 - y0):
        cx = _choose_split(profile, x0, x1, y0, y1, vertical=True)
        halves = ((x0, cx, y0, y1), (cx, x1, y0, y1))
    else:
        cy = _choose_split(profile, y0, y1, x0, x1, vertical=False)
        halves = ((x0, x1, y0, cy), (x0, x1, cy, y1))
    for half in halves:
        _search_rectangle(profile, half, found, undecided, min_size)


def complex_dimensions(profile: RatioProfile, window: Window,
                       classification: LatticeClassification | None = None
                       ) -> ComplexDimensionSet:
    """Locate the poles of the scaling zeta function inside a window.

    Lattice profiles go through the polynomial change of variables
    z = lambda0^s; otherwise the window is subdivided by the argument
    principle and roots are polished by Newton iteration.
    """
    if classification is None:
        classification = classify_lattice(profile)
    if classification.is_lattice:
        poles = _lattice_poles(profile, window, classification)
        method = "LatticePolynomial"
        undecided = []
    else:
        found, undecided = [], []
        rect = (window.sigma_min, window.sigma_max, -window.T, window.T)
        _search_rectangle(profile, rect, found, undecided)
        poles = found
        method = "ArgumentPrinciple"
    poles.sort(key=lambda p: (p.omega.real, p.omega.imag))
    return ComplexDimensionSet(window=window, poles=tuple(poles), method=method,
                               undecided=tuple(tuple(r) for r in undecided))


def argument_principle_count(profile: RatioProfile, window: Window) -> int:
    """Total number of zeros of P in the window, counted with multiplicity."""
    rect = (window.sigma_min, window.sigma_max, -window.T, window.T)
    count, _ = _winding_with_retries(profile, rect)
    return count


def residue_check(profile: RatioProfile, omega: complex, rho: float = 1e-3,
                  n_nodes: int = 256, other_poles=()) -> complex:
    """Contour-integral residue of the scaling zeta at a simple pole.

    Trapezoidal rule on a circle of radius rho; the radius shrinks if another
    known pole comes within 2*rho.
    """
    omega = complex(omega)
    for other in other_poles:
        d = abs(complex(other) - omega)
        if 0 < d < 2 * rho:
            rho = d / 4
    theta = 2 * np.pi * np.arange(n_nodes) / n_nodes
    z = omega + rho * np.exp(1j * theta)
    vals = 1.0 / dirichlet_poly(profile, z)
    # (1/2pi i) * integral = mean of zeta(z) * (z - omega) over the circle
    return complex(np.mean(vals * rho * np.exp(1j * theta)))


def screen_bound(profile: RatioProfile, sigma: float, T: float,
                 n_samples: int = 4001,
                 classification: LatticeClassification | None = None) -> dict:
    """Empirical sup |zeta| and min |P| on the vertical segment Re(s) = sigma.

    Numeric evidence that a constant screen at sigma is languid with
    exponent 0.  In the lattice case sigma must stay 1e-6 away from every
    pole line.
    """
    if classification is None:
        classification = classify_lattice(profile)
    if classification.is_lattice:
        window = Window(sigma_min=sigma - 50, sigma_max=sigma + 50, T=max(T, 1.0))
        lines = sorted({round(p.omega.real, 9)
                        for p in _lattice_poles(profile, window, classification)})
        for line in lines:
            if abs(sigma - line) < 1e-6:
                raise ValueError(
                    f"screen sigma={sigma} lies on the pole line Re={line}")
    tau = np.linspace(-T, T, n_samples)
    p = dirichlet_poly(profile, sigma + 1j * tau)
    absp = np.abs(p)
    return {"sup_zeta": float(np.max(1.0 / absp)), "min_P": float(np.min(absp)),
            "sigma": sigma, "T": T, "n_samples": n_samples}


@dataclass(frozen=True)
class AdmissibilityReport:
    sigma0: float
    criterion: str                  # "LowerDim" | "Lattice" | "None"
    screen: float | None = None
    notes: str = ""


def gkf_structural_pairs(n: int, r: float):
    """The (ratio, multiplicity) pairs of a von Koch system, never merged.

    Keeps the two outer maps of ratio (1-r)/2 apart from the n-1 middle maps
    of ratio r even when the two ratios coincide; this is the grouping under
    which the lower-dimension bound lemma is stated.
    """
    ell = (1 - r) / 2
    pair_l, pair_r = (ell, 2), (r, n - 1)
    return (pair_l, pair_r) if ell >= r else (pair_r, pair_l)


def admissibility_report(profile: RatioProfile, sigma0: float,
                         structure=None) -> AdmissibilityReport:
    """Which admissibility criterion applies for remainders of order sigma0.

    LowerDim applies when sigma0 < D_l; otherwise the lattice criterion
    applies to lattice profiles (screens avoiding finitely many pole lines).
    ``structure`` optionally supplies unmerged (ratio, multiplicity) pairs
    for the D_l computation (see lower_dim_bound).
    """
    d_low = lower_dim_bound(structure if structure is not None else profile)
    if sigma0 < d_low - 1e-12:
        eps = (d_low - sigma0) / 2
        return AdmissibilityReport(sigma0=sigma0, criterion="LowerDim",
                                   screen=sigma0 + eps,
                                   notes=f"sigma0 < D_l = {d_low:.12g}")
    classification = classify_lattice(profile)
    if classification.is_lattice:
        window = Window(sigma_min=sigma0 - 10, sigma_max=moran_dimension(profile) + 1,
                        T=1.0)
        lines = sorted({p.omega.real for p in _lattice_poles(profile, window,
                                                             classification)})
        above = [x for x in lines if x > sigma0 + 1e-12]
        if above:
            screen = sigma0 + (above[0] - sigma0) / 2
        else:
            screen = sigma0 + 0.5
        return AdmissibilityReport(sigma0=sigma0, criterion="Lattice", screen=screen,
                                   notes="lattice profile; screen avoids pole lines "
                                         f"{[round(x, 9) for x in lines]}")
    return AdmissibilityReport(
        sigma0=sigma0, criterion="None",
        notes=f"sigma0 = {sigma0} is not below D_l = {d_low:.12g} and the "
              "profile is nonlattice (up to the search bound)")
