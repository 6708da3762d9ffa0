import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from gawbs.cylinder import (K_BOLTZMANN, bracket_roots, cylinder_modes, normalize_thermal, radial_characteristic,
                            radial_dispersion_roots, tr_determinant, tr_dispersion_roots, tr_matrix)
from gawbs.errors import NumericalError, ValidationError
from gawbs.geometry import FUSED_SILICA

# Oracle values computed independently (mpmath fine scan at step 1e-4 followed
# by 200 bisection steps at 40 digits; trapezoid rule on 1e5 + 1 radial points)
Y1_ORACLE = 1.998881634735599780
F_R00_127_ORACLE = 30039666.60427369  # Hz, a = 63.5 um
C2_R00_40_ORACLE = 6.9546261561870954e-34  # T = 300 K, L = 8 m, peak |u| = 1


def test_first_radial_root_matches_oracle():
    y = radial_dispersion_roots(FUSED_SILICA, 63.5e-6, 40e6)[0]
    assert y.y == pytest.approx(Y1_ORACLE, abs=1e-11)
    assert y.frequency == pytest.approx(F_R00_127_ORACLE, rel=1e-11)


def test_frequency_root_relation():
    for md in cylinder_modes(FUSED_SILICA, 40e-6, 300e6):
        assert md.frequency == md.y * FUSED_SILICA.v_longitudinal / (2 * math.pi * 40e-6)


def test_radial_count_127um_below_200mhz():
    modes = radial_dispersion_roots(FUSED_SILICA, 63.5e-6, 200e6)
    assert [m.m for m in modes] == [0, 1, 2, 3]


def test_tr_labels_127um_cover_observed_set():
    ms = {m.m for m in tr_dispersion_roots(FUSED_SILICA, 63.5e-6, 200e6)}
    assert {4, 6, 7, 9} <= ms


def test_radial_asymptotic_spacing():
    ys = np.array([m.y for m in radial_dispersion_roots(FUSED_SILICA, 40e-6, 2e9)])
    assert len(ys) > 25
    assert np.all(np.abs(np.diff(ys)[20:] - math.pi) < 0.05)


def test_residuals_vanish():
    a = FUSED_SILICA.alpha
    for md in radial_dispersion_roots(FUSED_SILICA, 40e-6, 500e6):
        terms = max(abs((1 - a * a) * special.j0(md.y)), abs(a * a * special.jv(2, md.y)))
        assert abs(radial_characteristic(md.y, a)) < 1e-10 * terms
    for md in tr_dispersion_roots(FUSED_SILICA, 40e-6, 500e6):
        m = tr_matrix(md.y, a)
        assert abs(tr_determinant(md.y, a)) < 1e-10 * np.abs(m).max() ** 2


def test_root_completeness_at_ten_times_resolution():
    a = FUSED_SILICA.alpha
    y_max = 2 * math.pi * 40e-6 * 400e6 / FUSED_SILICA.v_longitudinal
    for f, fam in ((lambda y: radial_characteristic(y, a), radial_dispersion_roots),
                   (lambda y: tr_determinant(y, a), tr_dispersion_roots)):
        fine = bracket_roots(f, y_max, step=0.001)
        coarse = [m.y for m in fam(FUSED_SILICA, 40e-6, 400e6)]
        assert len(fine) == len(coarse)
        np.testing.assert_allclose(fine, coarse, atol=1e-10)


def test_families_strictly_ordered():
    for fam in (radial_dispersion_roots, tr_dispersion_roots):
        modes = fam(FUSED_SILICA, 40e-6, 400e6)
        assert [m.m for m in modes] == list(range(len(modes)))
        assert np.all(np.diff([m.frequency for m in modes]) > 0)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.2, 5.0))
def test_scale_invariance(s):
    base = cylinder_modes(FUSED_SILICA, 40e-6, 200e6)
    scaled = cylinder_modes(FUSED_SILICA, 40e-6 * s, 200e6 / s)
    assert len(base) == len(scaled)
    for a, b in zip(base, scaled):
        assert b.y == pytest.approx(a.y, rel=1e-12)
        assert b.frequency * s == pytest.approx(a.frequency, rel=1e-12)


@pytest.mark.parametrize("family", [radial_dispersion_roots, tr_dispersion_roots])
def test_orthogonality(family):
    modes = family(FUSED_SILICA, 40e-6, 250e6)
    for i in range(len(modes)):
        for j in range(i + 1, len(modes)):
            def f(r, a=modes[i], b=modes[j]):
                ua, va = a.radial_profiles(r)
                ub, vb = b.radial_profiles(r)
                return (ua * ub + va * vb) * r
            cross = integrate.quad(f, 0, 40e-6, limit=400, epsrel=1e-10)[0]
            norm = math.sqrt(modes[i].modal_mass() * modes[j].modal_mass()) / FUSED_SILICA.density
            ang = 2 * math.pi if modes[i].n == 0 else math.pi
            assert abs(ang * cross) < 1e-6 * norm


@pytest.mark.parametrize("family", [radial_dispersion_roots, tr_dispersion_roots])
def test_free_surface_traction(family):
    lam, mu = FUSED_SILICA.lame_lambda, FUSED_SILICA.lame_mu
    for md in family(FUSED_SILICA, 40e-6, 300e6):
        r = np.linspace(1e-6, 40e-6, 400)
        theta = 0.3
        s_rr, s_tt, s_rt = md.polar_strain(r, theta)
        sig_rr = lam * (s_rr + s_tt) + 2 * mu * s_rr
        sig_rt = 2 * mu * s_rt
        scale = np.abs(sig_rr).max() + np.abs(sig_rt).max()
        assert abs(sig_rr[-1]) < 1e-9 * scale
        assert abs(sig_rt[-1]) < 1e-9 * scale


def test_peak_normalization():
    for md in cylinder_modes(FUSED_SILICA, 40e-6, 200e6):
        r = np.linspace(0, 40e-6, 20001)
        U, V = md.radial_profiles(r)
        assert np.hypot(U, V).max() == pytest.approx(1.0, abs=1e-8)


def test_thermal_amplitude_matches_trapezoid_oracle():
    md = radial_dispersion_roots(FUSED_SILICA, 40e-6, 60e6)[0]
    c2 = normalize_thermal(md, 300.0, 8.0).thermal_amplitude_sq
    assert c2 == pytest.approx(C2_R00_40_ORACLE, rel=1e-8)


def test_thermal_linearity():
    md = tr_dispersion_roots(FUSED_SILICA, 40e-6, 60e6)[0]
    base = normalize_thermal(md, 300.0, 8.0).thermal_amplitude_sq
    assert normalize_thermal(md, 600.0, 8.0).thermal_amplitude_sq == pytest.approx(2 * base, rel=1e-14)
    assert normalize_thermal(md, 300.0, 16.0).thermal_amplitude_sq == pytest.approx(base / 2, rel=1e-14)


def test_equipartition_energy():
    md = normalize_thermal(radial_dispersion_roots(FUSED_SILICA, 40e-6, 60e6)[0], 300.0, 8.0)
    energy = md.thermal_amplitude_sq * md.omega**2 * md.modal_mass() * 8.0 / 2
    assert energy == pytest.approx(K_BOLTZMANN * 300.0 / 2, rel=1e-12)


def test_thermal_rejects():
    md = radial_dispersion_roots(FUSED_SILICA, 40e-6, 60e6)[0]
    with pytest.raises(ValidationError):
        normalize_thermal(md, 0.0, 8.0)
    with pytest.raises(ValidationError):
        normalize_thermal(md, 300.0, -1.0)


def test_root_count_guard():
    with pytest.raises(NumericalError):
        radial_dispersion_roots(FUSED_SILICA, 1.0, 1e12)


def test_f_max_must_be_positive():
    with pytest.raises(ValidationError):
        tr_dispersion_roots(FUSED_SILICA, 40e-6, 0.0)
