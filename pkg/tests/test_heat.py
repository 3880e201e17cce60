"""Finite-difference heat content, Monte Carlo estimator, remainder fits."""

import math

import numpy as np
import pytest

from conftest import square_heat_exact
from fractalheat.errors import FitWindowError
from fractalheat.geometry import Polyline, gkf_system, rasterize, snowflake
from fractalheat.heat import (decomposition_remainder, fd_heat_solve,
                              mc_heat_content, remainder_order_fit)
from fractalheat.series import TimeSeries, log_grid
from fractalheat.zeta import gkf_profile


def unit_square():
    return Polyline(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float),
                    closed=True)


class TestFDHeat:
    def test_square_matches_series_solution(self):
        grid = rasterize(unit_square(), 128)
        t_grid = log_grid(25 * grid.h ** 2, 1e-1, per_decade=8)
        run = fd_heat_solve(grid, 1.0, t_grid)
        exact = square_heat_exact(t_grid)
        rel = np.abs(run.E.v - exact) / exact
        assert rel.max() < 0.02

    def test_monotone_and_bounded(self):
        grid = rasterize(unit_square(), 64)
        run = fd_heat_solve(grid, 1.0, log_grid(1e-3, 1.0, per_decade=6))
        assert np.all(np.diff(run.E.v) >= -1e-12)
        assert np.all(run.E.v <= grid.area * (1 + 1e-9))
        # full saturation at late times
        assert run.E.v[-1] > 0.999 * grid.area

    def test_diffusivity_time_rescaling(self):
        # E_C(t) = E_1(C t): diffusivity only rescales time
        grid = rasterize(unit_square(), 64)
        t_grid = log_grid(1e-3, 1e-2, per_decade=8)
        run_c = fd_heat_solve(grid, 4.0, t_grid)
        run_1 = fd_heat_solve(grid, 1.0, 4.0 * t_grid)
        assert np.allclose(run_c.E.v, run_1.E.v, rtol=1e-6, atol=1e-9)

    def test_grid_convergence(self):
        t_probe = 4e-3
        errs = []
        for res in (64, 128, 256):
            grid = rasterize(unit_square(), res)
            run = fd_heat_solve(grid, 1.0, np.array([t_probe]))
            errs.append(abs(run.E.v[0] - square_heat_exact([t_probe])[0]))
        assert errs[2] < errs[0]

    def test_too_coarse_time_grid_rejected(self):
        grid = rasterize(unit_square(), 128)
        with pytest.raises(Exception):
            fd_heat_solve(grid, 1.0, np.array([1e-7]))


class TestMonteCarlo:
    def test_square_agrees_with_series(self):
        t = 1e-2
        est = mc_heat_content(unit_square(), 1.0, t, 20000, seed=1,
                              bridge=True)
        exact = square_heat_exact([t])[0]
        assert abs(est["estimate"] - exact) < 3 * est["stderr"] + 0.01

    def test_seed_reproducibility(self):
        a = mc_heat_content(unit_square(), 1.0, 1e-2, 2000, seed=7)
        b = mc_heat_content(unit_square(), 1.0, 1e-2, 2000, seed=7)
        assert a["estimate"] == b["estimate"]
        c = mc_heat_content(unit_square(), 1.0, 1e-2, 2000, seed=8)
        assert a["estimate"] != c["estimate"]

    def test_stderr_shrinks_with_paths(self):
        small = mc_heat_content(unit_square(), 1.0, 1e-2, 1000, seed=0)
        big = mc_heat_content(unit_square(), 1.0, 1e-2, 16000, seed=0)
        assert big["stderr"] < small["stderr"]

    def test_bridge_correction_reduces_bias(self):
        # plain discrete-path MC misses boundary crossings between steps
        t = 1e-3
        exact = square_heat_exact([t])[0]
        plain = mc_heat_content(unit_square(), 1.0, t, 40000, seed=3)
        bridged = mc_heat_content(unit_square(), 1.0, t, 40000, seed=3,
                                  bridge=True)
        assert abs(bridged["estimate"] - exact) < abs(plain["estimate"] - exact)


class TestDecompositionRemainder:
    def test_remainder_smaller_than_series(self):
        # R(t) = E(t) - sum m_k E(r_k^2 t) should be subleading
        grid = rasterize(snowflake(gkf_system(3, 1 / 3), 3), 512)
        t_grid = log_grid(4e-4, 4e-2, per_decade=12)
        run = fd_heat_solve(grid, 1.0, t_grid)
        R = decomposition_remainder(gkf_profile(3, 1 / 3), run)
        interp = np.interp(R.t, run.E.t, run.E.v)
        assert np.max(np.abs(R.v)) < np.max(interp)

    def test_order_fit_requires_two_decades(self):
        t = np.geomspace(1e-3, 5e-3, 30)
        with pytest.raises(FitWindowError):
            remainder_order_fit(TimeSeries(t=t, v=t ** 1.5))

    def test_order_fit_recovers_power(self):
        t = np.geomspace(1e-4, 1e-1, 60)
        fit = remainder_order_fit(TimeSeries(t=t, v=3.0 * t ** 1.25))
        assert fit["slope"] == pytest.approx(1.25, abs=1e-6)
        assert fit["r2"] > 0.999999
