"""Scaling zeta functions, pole search, classification, admissibility."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fractalheat.errors import AtPoleError
from fractalheat.zeta import (ComplexDimensionSet, RatioProfile, Window,
                              admissibility_report, argument_principle_count,
                              classify_lattice, complex_dimensions,
                              dirichlet_poly, dirichlet_poly_deriv,
                              gkf_profile, gkf_structural_pairs,
                              lower_dim_bound, moran_dimension, residue_check,
                              scaling_zeta, screen_bound)

D_KOCH = math.log(4) / math.log(3)
KOCH = gkf_profile(3, 1 / 3)


# small pool of well-behaved profiles for property tests
profiles = st.sampled_from([
    RatioProfile.from_pairs([(0.5, 2)]),
    RatioProfile.from_pairs([(0.5, 1), (1 / 3, 1)]),
    RatioProfile.from_pairs([(0.4, 2), (0.2, 3)]),
    gkf_profile(3, 1 / 3),
    gkf_profile(4, 0.25),
    gkf_profile(5, 0.2),
])


class TestDirichletPoly:
    def test_koch_profile_merges_ratios(self):
        # l = (1-1/3)/2 = 1/3 equals r, so one ratio of multiplicity 4
        assert KOCH.ratios == (1 / 3,)
        assert KOCH.multiplicities == (4,)

    def test_value_at_zero(self):
        # P(0) = 1 - total multiplicity
        assert dirichlet_poly(KOCH, 0.0) == pytest.approx(-3.0)

    def test_derivative_matches_finite_difference(self):
        prof = RatioProfile.from_pairs([(0.5, 1), (0.3, 2)])
        s = 1.3 + 2.1j
        eps = 1e-6
        fd = (dirichlet_poly(prof, s + eps) - dirichlet_poly(prof, s - eps)) / (2 * eps)
        assert abs(dirichlet_poly_deriv(prof, s) - fd) < 1e-7

    def test_zeta_is_reciprocal(self):
        s = 2.0 + 1.0j
        assert scaling_zeta(KOCH, s) == pytest.approx(1 / dirichlet_poly(KOCH, s))

    def test_zeta_raises_at_pole(self):
        with pytest.raises(AtPoleError):
            scaling_zeta(KOCH, D_KOCH)


class TestMoran:
    def test_koch_dimension(self):
        assert moran_dimension(KOCH) == pytest.approx(D_KOCH, abs=1e-14)

    def test_two_halves(self):
        assert moran_dimension(RatioProfile.from_pairs([(0.5, 2)])) == \
            pytest.approx(1.0, abs=1e-14)

    @given(profiles)
    @settings(max_examples=20, deadline=None)
    def test_root_property(self, prof):
        d = moran_dimension(prof)
        assert abs(dirichlet_poly(prof, d)) < 1e-12
        # P is decreasing in mass: strictly positive above D, negative below
        assert dirichlet_poly(prof, d + 0.1).real > 0
        assert dirichlet_poly(prof, d - 0.1).real < 0


class TestLowerDimBound:
    def test_gkf4_is_zero(self):
        for r in (0.2, 0.25, 0.3):
            assert abs(lower_dim_bound(gkf_structural_pairs(4, r))) < 1e-12

    def test_gkf3_negative_gkf5_positive(self):
        assert lower_dim_bound(gkf_structural_pairs(3, 0.3)) < 0
        assert lower_dim_bound(gkf_structural_pairs(5, 0.2)) > 0

    def test_tied_ratios_give_minus_infinity(self):
        # GKF(3,1/3): l = r = 1/3 with the smallest-ratio mass >= 1
        assert lower_dim_bound(gkf_structural_pairs(3, 1 / 3)) == -math.inf

    def test_below_moran_dimension(self):
        pairs = gkf_structural_pairs(5, 0.2)
        d_low = lower_dim_bound(pairs)
        d_up = moran_dimension(RatioProfile.from_pairs(pairs))
        assert d_low < d_up


class TestClassifyLattice:
    def test_koch_is_lattice(self):
        c = classify_lattice(KOCH)
        assert c.is_lattice
        assert c.generator == pytest.approx(1 / 3, rel=1e-12)
        # pole lattice spacing is 2*pi / log(1/generator)
        assert 2 * math.pi / math.log(1 / c.generator) == \
            pytest.approx(2 * math.pi / math.log(3), rel=1e-12)

    def test_gkf4_quarter_is_nonlattice(self):
        # ratios 3/8 and 1/4: log(8/3)/log 4 is irrational
        c = classify_lattice(gkf_profile(4, 0.25))
        assert not c.is_lattice

    def test_power_related_ratios_are_lattice(self):
        c = classify_lattice(RatioProfile.from_pairs([(0.5, 1), (0.25, 2)]))
        assert c.is_lattice


class TestComplexDimensions:
    def test_koch_pole_lattice(self):
        window = Window(sigma_min=-1.0, sigma_max=2.0, T=20.0)
        dims = complex_dimensions(KOCH, window)
        assert len(dims) == 7
        res = sorted(dims, key=lambda p: p.omega.imag)
        for p in res:
            assert p.omega.real == pytest.approx(D_KOCH, abs=1e-9)
            assert p.multiplicity == 1
        spacing = np.diff([p.omega.imag for p in res])
        assert np.allclose(spacing, 2 * math.pi / math.log(3), atol=1e-8)
        assert argument_principle_count(KOCH, window) == 7

    def test_nonlattice_poles_are_zeros(self):
        prof = RatioProfile.from_pairs([(0.5, 1), (1 / 3, 1)])
        window = Window(sigma_min=-2.0, sigma_max=2.0, T=40.0)
        dims = complex_dimensions(prof, window)
        assert dims.undecided == ()
        for p in dims:
            assert abs(dirichlet_poly(prof, p.omega)) < 1e-10
        # conjugate symmetry
        locs = sorted((round(p.omega.real, 8), round(p.omega.imag, 8))
                      for p in dims)
        conj = sorted((re, -im) for re, im in locs)
        assert locs == conj

    def test_real_pole_is_moran_dimension(self):
        prof = RatioProfile.from_pairs([(0.5, 1), (1 / 3, 1)])
        dims = complex_dimensions(prof, Window(sigma_min=-1, sigma_max=2, T=5))
        real_poles = [p for p in dims if abs(p.omega.imag) < 1e-12]
        assert len(real_poles) == 1
        assert real_poles[0].omega.real == pytest.approx(
            moran_dimension(prof), abs=1e-12)

    def test_residues_match_derivative(self):
        window = Window(sigma_min=-1.0, sigma_max=2.0, T=20.0)
        dims = complex_dimensions(KOCH, window)
        for p in dims:
            expected = 1 / dirichlet_poly_deriv(KOCH, p.omega)
            assert abs(p.residue - expected) < 1e-10
            contour = residue_check(KOCH, p.omega)
            assert abs(contour - expected) < 1e-8

    def test_json_roundtrip(self, tmp_path):
        dims = complex_dimensions(KOCH, Window(sigma_min=-1, sigma_max=2, T=10))
        path = tmp_path / "dims.json"
        dims.to_json(path)
        for back in (ComplexDimensionSet.from_json(path),
                     ComplexDimensionSet.from_json(path.read_text())):
            assert len(back) == len(dims)
            for a, b in zip(sorted(dims, key=lambda p: p.omega.imag),
                            sorted(back, key=lambda p: p.omega.imag)):
                assert a.omega == pytest.approx(b.omega, abs=1e-15)
                assert a.residue == pytest.approx(b.residue, abs=1e-15)


class TestScreenBound:
    def test_screen_avoids_pole_line(self):
        # on a lattice profile the pole-free vertical line has bounded 1/P
        rep = screen_bound(KOCH, D_KOCH - 0.3, 50.0)
        assert np.isfinite(rep["sup_zeta"]) and rep["min_P"] > 0


class TestAdmissibility:
    def test_gkf5_lower_dim(self):
        rep = admissibility_report(gkf_profile(5, 0.2), 0.0,
                                   structure=gkf_structural_pairs(5, 0.2))
        assert rep.criterion == "LowerDim"
        assert rep.screen is not None and rep.screen > 0

    def test_koch_lattice(self):
        rep = admissibility_report(KOCH, 0.0,
                                   structure=gkf_structural_pairs(3, 1 / 3))
        assert rep.criterion == "Lattice"

    def test_gkf4_none(self):
        for r in (0.2, 0.25, 0.3):
            rep = admissibility_report(gkf_profile(4, r), 0.0,
                                       structure=gkf_structural_pairs(4, r))
            assert rep.criterion == "None"
