import math
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gawbs.errors import ValidationError
from gawbs.spectrum import (SpectrumSettings, band_excess, line_shape, photon_flux, reduction_factor,
                            synthesize)


def mode(f, phase=1e-25, pol=2e-25, family="R"):
    return SimpleNamespace(frequency=f, phase_msq=phase, pol_msq=pol, family=family)


BASE = SpectrumSettings(f_start=5e6, f_stop=400e6)


def test_no_modes_is_shot_noise():
    s = synthesize([], BASE)
    assert np.all(s.phase_ratio == 1.0) and np.all(s.pol_ratio == 1.0)


def test_lorentzian_tail_ratio():
    fm, q = 100e6, 100.0
    gamma = fm / q  # FWHM
    grid = np.array([fm, fm + 10 * gamma])
    s = synthesize([mode(fm)], replace(BASE, q_factor=q, rbw_filter="none"), grid=grid)
    ex = s.phase_ratio - 1
    assert ex[1] / ex[0] == pytest.approx(1 / 401, rel=1e-6)


def test_line_shape_unit_area():
    f = np.linspace(0, 200e6, 400001)
    inside = 2 / math.pi * math.atan(100e6 / 0.5e6)  # Lorentzian mass within +-100 MHz
    for rbw in (None, 1e6):
        assert np.trapezoid(line_shape(f, 100e6, 1e6, rbw), f) == pytest.approx(inside, rel=1e-4)


def test_peak_value_formula():
    fm, q = 50e6, 200.0
    s = synthesize([mode(fm, phase=3e-25)], replace(BASE, q_factor=q, rbw_filter="none"), grid=np.array([fm]))
    k = (2 * math.pi * BASE.fiber_length / BASE.wavelength) ** 2
    psd = k * 3e-25 * 2 / (math.pi * fm / q)
    eta = BASE.detection_efficiency * BASE.visibility**2
    var = 1 + 4 * eta * photon_flux(BASE.optical_power, BASE.wavelength) * psd
    assert s.phase_ratio[0] == pytest.approx((var + 1) / 2, rel=1e-12)


@settings(max_examples=20)
@given(st.floats(0.1, 10), st.floats(0.1, 10))
def test_excess_linear_in_msq_and_power(a, p):
    m1 = [mode(60e6, 1e-25, 1e-25), mode(90e6, 2e-25, 5e-26)]
    ma = [mode(60e6, a * 1e-25, a * 1e-25), mode(90e6, a * 2e-25, a * 5e-26)]
    base = synthesize(m1, BASE)
    scaled = synthesize(ma, replace(BASE, optical_power=p * BASE.optical_power,
                                    pol_optical_power=p * BASE.pol_optical_power))
    np.testing.assert_allclose(scaled.phase_ratio - 1, a * p * (base.phase_ratio - 1), rtol=1e-9, atol=1e-15)
    np.testing.assert_allclose(scaled.pol_ratio - 1, a * p * (base.pol_ratio - 1), rtol=1e-9, atol=1e-15)


@settings(max_examples=20)
@given(st.lists(st.tuples(st.floats(6e6, 390e6), st.floats(0, 1e-24), st.floats(0, 1e-24)), max_size=8))
def test_ratio_never_below_baseline(ms):
    s = synthesize([mode(*m) for m in ms], BASE)
    assert np.all(s.phase_ratio >= 1 - 1e-12) and np.all(s.pol_ratio >= 1 - 1e-12)


def test_grid_halving_converged():
    ms = [mode(f, 1e-25 * (1 + i % 3)) for i, f in enumerate(np.linspace(20e6, 380e6, 17))]
    for s in (BASE, replace(BASE, q_factor=20.0, rbw_filter="none")):
        a = band_excess(synthesize(ms, s), (10e6, 200e6))
        b = band_excess(synthesize(ms, replace(s, step=s.grid_step / 2)), (10e6, 200e6))
        assert abs(a / b - 1) < 5e-3


def test_reduction_factor():
    ms = [mode(30e6), mode(120e6)]
    a = synthesize(ms, BASE)
    assert reduction_factor(a, a) == 1.0
    weak = synthesize([mode(30e6, 1e-26, 2e-26), mode(120e6, 1e-26, 2e-26)], BASE)
    assert reduction_factor(a, weak) == pytest.approx(10.0, rel=1e-9)
    assert reduction_factor(a, weak, channel="pol") == pytest.approx(10.0, rel=1e-9)


def test_reduction_errors():
    a = synthesize([mode(30e6)], BASE)
    with pytest.raises(ValidationError, match="different settings"):
        reduction_factor(a, synthesize([mode(30e6)], replace(BASE, temperature=301.0, f_stop=400e6)))
    with pytest.raises(ValidationError, match="no excess noise in reference band"):
        reduction_factor(a, synthesize([], BASE))


@pytest.mark.parametrize("kw", [dict(q_factor=0.0), dict(q_factor=-5.0), dict(rbw=0.0), dict(visibility=1.5),
                                dict(rbw_filter="box"), dict(f_start=5e8), dict(q_overrides=(("TR", 0.0),))])
def test_settings_validation(kw):
    with pytest.raises(ValidationError):
        replace(BASE, **kw)


def test_q_override_narrows_family():
    grid = np.array([80e6])
    bare = replace(BASE, rbw_filter="none")
    wide = synthesize([mode(80e6, family="TR")], bare, grid=grid)
    narrow = synthesize([mode(80e6, family="TR")], replace(bare, q_overrides=(("TR", 400.0),)), grid=grid)
    assert (narrow.phase_ratio[0] - 1) == pytest.approx(4 * (wide.phase_ratio[0] - 1), rel=1e-9)


def test_bare_lorentzian_undersampled_lines_are_grid_sensitive():
    """Why the analyzer filter is on by default: a 0.2 MHz wide line on a 0.25 MHz grid."""
    s = replace(BASE, rbw_filter="none")
    a = band_excess(synthesize([mode(20e6)], s), (10e6, 200e6))
    b = band_excess(synthesize([mode(20e6)], replace(s, step=s.grid_step / 2)), (10e6, 200e6))
    assert abs(a / b - 1) > 5e-3
