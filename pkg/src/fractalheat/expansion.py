"""Heat zeta functions, residues at complex dimensions, and explicit formulae.

The normalized heat content g(t) = t^{-N/2} E(t) satisfies the scaling
function equation g = L[g] + R with L[g](t) = sum_k m_k g(t/r_k^2), which
factorizes its Mellin transform as zeta_hat(s) = zeta_Phi(2s)(xi_hat + zeta_R).
Residues of zeta_hat(s/2) at the poles omega of zeta_Phi supply the
coefficients of the short-time expansion E(t) ~ sum r_omega t^{(N-omega)/2}.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AtPoleError, DivergenceError, FitWindowError
from .mellin import (SampledFunction, sfe_zeta_assemble, truncated_mellin,
                     xi_entire, ZETA_R_MARGIN)
from .series import TimeSeries
from .zeta import (ComplexDimensionSet, RatioProfile, dirichlet_poly,
                   dirichlet_poly_deriv)

POLE_GUARD = 1e-9
_RESIDUE_RHO = 1e-3
_RESIDUE_NODES = 256


class HeatZeta:
    """Mellin transform of the normalized heat content t^{-N/2} E(t).

    ``g`` must be sampled up to delta / r_min^2 so the entire part and the
    SFE remainder can both be formed; ``sigma_r`` is the asserted growth
    order of the remainder (0 for the model heat problem).
    """

    def __init__(self, profile: RatioProfile, g: SampledFunction,
                 delta: float = 1.0, sigma_r: float = 0.0, N: int = 2):
        if delta <= 0:
            raise ValueError("delta must be positive")
        self.profile = profile
        self.g = g
        self.delta = float(delta)
        self.sigma_r = float(sigma_r)
        self.N = N
        self._remainder = None

    @classmethod
    def from_heat_content(cls, profile: RatioProfile, E: TimeSeries,
                          delta: float = 1.0, sigma_r: float = 0.0,
                          sigma0: float | None = None, N: int = 2):
        """Normalize a measured E(t) series and wrap it as a HeatZeta."""
        from .zeta import moran_dimension
        if sigma0 is None:
            sigma0 = moran_dimension(profile) / 2
        g = SampledFunction.from_series(E.t, E.v / E.t ** (N / 2),
                                        sigma0=sigma0,
                                        description="normalized heat content")
        return cls(profile, g, delta=delta, sigma_r=sigma_r, N=N)

    def remainder(self) -> SampledFunction:
        """SFE remainder R(t) = g(t) - sum_k m_k g(t / r_k^2), on (0, delta]."""
        if self._remainder is None:
            r_min = self.profile.ratios[-1]
            needed = self.delta / r_min ** 2
            if self.g.t_max < needed * (1 - 1e-12):
                from .errors import CoverageError
                raise CoverageError(
                    f"remainder needs g up to {needed:.6g}, have {self.g.t_max:.6g}")
            t = self.g.t_grid[self.g.t_grid < self.delta * (1 - 1e-12)]
            t = np.append(t, self.delta)
            vals = np.asarray(self.g(t)).copy()
            for r, m in zip(self.profile.ratios, self.profile.multiplicities):
                vals -= m * np.asarray(self.g(t / r ** 2))
            self._remainder = SampledFunction(
                t, vals, sigma0=self.sigma_r, description="SFE remainder")
        return self._remainder

    def __call__(self, s: complex) -> complex:
        return heat_zeta_eval(self, s)


def heat_zeta_eval(hz: HeatZeta, s: complex) -> complex:
    """zeta_hat(s; delta) through the factorization zeta_Phi(2s)(xi_hat + zeta_R)."""
    s = complex(s)
    if abs(dirichlet_poly(hz.profile, 2 * s)) < POLE_GUARD:
        raise AtPoleError(f"2s = {2 * s:.6g} is within {POLE_GUARD} of a pole")
    return sfe_zeta_assemble(hz.profile, 2.0, hz.g, hz.remainder(),
                             hz.delta, s)


def heat_zeta_direct(hz: HeatZeta, s: complex) -> complex:
    """Direct transform M^delta[g](s), valid right of max(D/2, sigma_R)."""
    return truncated_mellin(hz.g, 0.0, hz.delta, complex(s)).value


def heat_residue(hz: HeatZeta, omega: complex, cross_check: bool = False,
                 check_tol: float = 1e-6) -> complex:
    """Expansion coefficient r_omega at a simple pole omega of zeta_Phi.

    Computed from the factorization as (xi_hat + zeta_R)(omega/2) divided by
    2 P'(omega); with ``cross_check`` a trapezoidal contour integral of
    zeta_hat(s/2) around omega must agree (it equals 2 r_omega).
    """
    omega = complex(omega)
    if abs(dirichlet_poly(hz.profile, omega)) > 1e-8:
        raise ValueError(f"omega = {omega:.6g} is not a pole of the scaling zeta")
    dp = dirichlet_poly_deriv(hz.profile, omega)
    if abs(dp) < 1e-12:
        raise AtPoleError("non-simple pole: P'(omega) vanishes")
    if omega.real / 2 <= hz.sigma_r + ZETA_R_MARGIN:
        raise DivergenceError(
            f"Re(omega)/2 = {omega.real / 2:.4g} not above sigma_R = {hz.sigma_r}")
    u = omega / 2
    h_val = (xi_entire(hz.profile, 2.0, hz.g, hz.delta, u)
             + truncated_mellin(hz.remainder(), 0.0, hz.delta, u).value)
    r = h_val / (2 * dp)
    if cross_check:
        theta = 2 * np.pi * np.arange(_RESIDUE_NODES) / _RESIDUE_NODES
        ring = omega + _RESIDUE_RHO * np.exp(1j * theta)
        vals = np.array([heat_zeta_eval(hz, z / 2) for z in ring])
        contour = np.mean(vals * _RESIDUE_RHO * np.exp(1j * theta))
        if abs(contour / 2 - r) > check_tol * max(abs(r), 1e-30):
            raise ArithmeticError(
                f"contour residue {contour / 2:.8g} disagrees with "
                f"factorization {r:.8g}")
    return complex(r)


def pochhammer(z: complex, k: int) -> complex:
    """Rising factorial (z)_k = z (z+1) ... (z+k-1), with (z)_0 = 1."""
    if k < 0:
        raise ValueError("k must be >= 0")
    out = 1.0 + 0.0j
    for j in range(k):
        out *= z + j
    return out


def explicit_formula_eval(dims: ComplexDimensionSet, k: int, N: int, t,
                          T: float | None = None) -> float:
    """Truncated residue sum for the k-th antiderivative of the heat content.

    Evaluates sum over poles (|Im omega| <= T, conjugate pairs together,
    innermost pairs first) of r_omega t^{(N-omega)/2+k} / ((N-omega)/2+1)_k.
    The pole set must be conjugate-closed; the imaginary part of the result
    is verified below 1e-10 relative and discarded.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    poles = [p for p in dims.poles
             if T is None or abs(p.omega.imag) <= T * (1 + 1e-12)]
    for p in poles:
        if p.multiplicity != 1:
            raise ValueError("explicit formula requires simple poles")
        if p.residue is None:
            raise ValueError("pole without a coefficient")
    # group into conjugate pairs (and real poles), innermost first
    reals = [p for p in poles if abs(p.omega.imag) < 1e-12]
    uppers = sorted((p for p in poles if p.omega.imag >= 1e-12),
                    key=lambda p: p.omega.imag)
    lowers = {round(-p.omega.imag, 9): p for p in poles if p.omega.imag <= -1e-12}
    t_arr = np.asarray(t, dtype=float)
    total = np.zeros(t_arr.shape, dtype=complex)

    def term(p):
        expo = (N - p.omega) / 2 + k
        return p.residue * t_arr ** expo / pochhammer((N - p.omega) / 2 + 1, k)

    for p in reals:
        total += term(p)
    for p in uppers:
        mate = lowers.pop(round(p.omega.imag, 9), None)
        if mate is None:
            raise ValueError(f"pole {p.omega:.6g} lacks its conjugate in the window")
        total += term(p) + term(mate)
    if lowers:
        raise ValueError("conjugate poles without upper-half partners")
    scale = np.max(np.abs(total)) if total.size else 0.0
    if scale > 0 and np.max(np.abs(total.imag)) > 1e-10 * scale:
        raise ArithmeticError(
            f"non-real reconstruction: imag/|value| = "
            f"{np.max(np.abs(total.imag)) / scale:.3g}")
    out = total.real
    return out if out.ndim else float(out)


def antiderivative(series: TimeSeries, k: int = 1,
                   small_t_exponent: float | None = None) -> TimeSeries:
    """k-fold antiderivative from 0, trapezoid on the grid plus power-law head.

    Below the first sample the integrand is modeled as c t^a with ``a``
    estimated from the first two samples when not given; every antiderivative
    vanishes at t = 0 by construction.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    t, v = series.t, series.v
    a = small_t_exponent
    for _ in range(k):
        if a is None:
            with np.errstate(divide="ignore", invalid="ignore"):
                a_est = (math.log(abs(v[1]) / max(abs(v[0]), 1e-300))
                         / math.log(t[1] / t[0])) if v[0] != 0 else 0.0
            a_cur = float(np.clip(a_est, -0.99, 50.0))
        else:
            a_cur = a
        head = v[0] * t[0] / (a_cur + 1)      # int_0^{t0} c tau^a dtau
        cum = np.concatenate([[0.0], np.cumsum(
            0.5 * (v[1:] + v[:-1]) * np.diff(t))])
        v = head + cum
        if a is not None:
            a = a + 1
    return TimeSeries(t=t, v=v)


@dataclass(frozen=True)
class ExpansionFit:
    """A fitted or reconstructed short-time expansion of the heat content."""

    N: int
    k: int
    delta: float
    poles: tuple          # dicts: {re, im, res_re, res_im, source}
    residual: TimeSeries | None
    meta: dict = field(default_factory=dict)

    def to_json(self, path=None, residual_csv_path: str | None = None) -> str:
        if self.residual is not None and residual_csv_path is not None:
            self.residual.to_csv(residual_csv_path)
        payload = {"N": self.N, "k": self.k, "delta": self.delta,
                   "poles": list(self.poles),
                   "residual_csv_path": residual_csv_path,
                   "meta": self.meta}
        text = json.dumps(payload, indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def logperiodic_fit(E: TimeSeries, D: float, period: float,
                    n_harmonics: int = 1, N: int = 2,
                    window: tuple | None = None) -> ExpansionFit:
    """Least-squares log-periodic expansion of a lattice heat content.

    Models E(t) = t^{(N-D)/2} (c_0 + sum_j c_j cos(2 pi j log t / period
    + phi_j)) over the window, which must span at least two multiplicative
    periods.  The (N - omega)/2 exponent halves pole frequencies, so harmonic
    j maps to the conjugate pole pair at D +- i 4 pi j / period (reported,
    not asserted).
    """
    t, v = E.t, E.v
    if window is not None:
        mask = (t >= window[0]) & (t <= window[1])
        t, v = t[mask], v[mask]
    if len(t) < 2 * n_harmonics + 3:
        raise FitWindowError("too few points for the requested harmonics")
    span = math.log(t[-1] / t[0])
    if span < 2 * period * (1 - 1e-9):
        raise FitWindowError(
            f"window spans {span / period:.2f} periods, need >= 2")
    x = np.log(t)
    y = v / t ** ((N - D) / 2)
    cols = [np.ones_like(x)]
    for j in range(1, n_harmonics + 1):
        cols += [np.cos(2 * np.pi * j * x / period),
                 np.sin(2 * np.pi * j * x / period)]
    basis = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    fitted = basis @ coef
    resid = y - fitted
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot else 1.0
    const_resid = y - np.mean(y)
    poles = [{"re": D, "im": 0.0, "res_re": float(coef[0]), "res_im": 0.0,
              "source": "fitted"}]
    harmonics = []
    for j in range(1, n_harmonics + 1):
        a, b = coef[2 * j - 1], coef[2 * j]
        amp, phase = float(np.hypot(a, b)), float(math.atan2(-b, a))
        harmonics.append({"j": j, "amplitude": amp, "phase": phase})
        im = 4 * np.pi * j / period
        # c_j cos(...) = Re[(a - i b) e^{i 2 pi j x / p}]; half goes to each
        # conjugate pole, modulo the (N - omega)/2 exponent shift
        poles += [{"re": D, "im": im, "res_re": float(a / 2),
                   "res_im": float(-b / 2), "source": "fitted"},
                  {"re": D, "im": -im, "res_re": float(a / 2),
                   "res_im": float(b / 2), "source": "fitted"}]
    meta = {"c0": float(coef[0]), "harmonics": harmonics, "r2": r2,
            "period": period, "D": D,
            "ss_resid": float(np.sum(resid ** 2)),
            "ss_resid_constant_only": float(np.sum(const_resid ** 2)),
            "n_points": int(len(t))}
    return ExpansionFit(N=N, k=0, delta=float(t[-1]), poles=tuple(poles),
                        residual=TimeSeries(t=t, v=resid * t ** ((N - D) / 2)),
                        meta=meta)
