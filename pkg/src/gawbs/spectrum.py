"""Shot-noise-referenced GAWBS spectra synthesized from modal couplings.

Each acoustic mode contributes a unit-area Lorentzian of FWHM ``f_m / Q`` to
the phase (or polarization) power spectral density.  The homodyne difference
signal normalized to shot noise is::

    <dY^2>(f) = 1 + 4 eta Ndot S(f),     V-/V_SN = (<dY^2> + 1) / 2

with ``Ndot`` the photon flux and ``eta`` the detection efficiency times the
squared interferometric contrast.  By default each line is convolved with a
Gaussian resolution-bandwidth filter, as a swept analyzer records it; this
keeps lines narrower than the grid step resolvable.  ``rbw_filter="none"``
reports the bare Lorentzian sum.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import voigt_profile

from .errors import ValidationError

H_PLANCK = 6.62607015e-34
C_LIGHT = 299792458.0
_FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class SpectrumSettings:
    rbw: float = 1e6
    vbw: float = 30.0
    averages: int = 10
    optical_power: float = 0.9e-3
    pol_optical_power: float = 1.8e-3
    wavelength: float = 1064e-9
    fiber_length: float = 8.0
    detection_efficiency: float = 0.86
    visibility: float = 0.70
    pol_extinction: float = 0.02
    temperature: float = 300.0
    q_factor: float = 100.0
    q_overrides: tuple = ()  # ((family, Q), ...)
    rbw_filter: str = "gaussian"
    f_start: float = 5e6
    f_stop: float = 500e6
    step: Optional[float] = None

    def __post_init__(self):
        for name in ("rbw", "optical_power", "pol_optical_power", "wavelength", "fiber_length",
                     "temperature", "vbw"):
            if not getattr(self, name) > 0:
                raise ValidationError("must be > 0", name)
        for name in ("detection_efficiency", "visibility"):
            if not 0 < getattr(self, name) <= 1:
                raise ValidationError("must lie in (0, 1]", name)
        if not 0 <= self.pol_extinction < 1:
            raise ValidationError("must lie in [0, 1)", "pol_extinction")
        if not self.q_factor > 0:
            raise ValidationError("Q must be > 0", "q_factor")
        for fam, q in self.q_overrides:
            if not q > 0:
                raise ValidationError(f"Q override for {fam} must be > 0", "q_overrides")
        if self.rbw_filter not in ("gaussian", "none"):
            raise ValidationError("must be 'gaussian' or 'none'", "rbw_filter")
        if not 0 <= self.f_start < self.f_stop:
            raise ValidationError("need 0 <= f_start < f_stop", "f_start")
        if self.averages < 1:
            raise ValidationError("must be >= 1", "averages")

    @property
    def grid_step(self) -> float:
        return self.step if self.step is not None else self.rbw / 4.0

    def grid(self):
        n = int(round((self.f_stop - self.f_start) / self.grid_step)) + 1
        return self.f_start + self.grid_step * np.arange(n)

    def q_for(self, family: str) -> float:
        return dict(self.q_overrides).get(family, self.q_factor)

    def hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def phase_efficiency(self) -> float:
        return self.detection_efficiency * self.visibility**2

    @property
    def pol_efficiency(self) -> float:
        return self.detection_efficiency * (1.0 - self.pol_extinction) ** 2


@dataclass(frozen=True, eq=False)
class NoiseSpectrum:
    grid: np.ndarray
    phase_ratio: np.ndarray
    pol_ratio: np.ndarray
    settings: SpectrumSettings
    label: str = ""
    meta: dict = field(default_factory=dict)

    def channel(self, name: str):
        if name == "phase":
            return self.phase_ratio
        if name in ("pol", "polarization"):
            return self.pol_ratio
        raise ValidationError(f"unknown channel {name!r}", "channel")


def photon_flux(power: float, wavelength: float) -> float:
    return power * wavelength / (H_PLANCK * C_LIGHT)


def line_shape(f, center, fwhm, rbw: Optional[float] = None):
    """Unit-area Lorentzian, optionally convolved with a Gaussian RBW filter."""
    f = np.asarray(f, dtype=float)
    if rbw is None:
        half = 0.5 * fwhm
        return (half / math.pi) / ((f - center) ** 2 + half * half)
    return voigt_profile(f - center, rbw * _FWHM_TO_SIGMA, 0.5 * fwhm)


def _psd(grid, modes, key, settings):
    k_opt = (2.0 * math.pi * settings.fiber_length / settings.wavelength) ** 2
    rbw = settings.rbw if settings.rbw_filter == "gaussian" else None
    s = np.zeros_like(grid)
    for md in modes:
        msq = getattr(md, key)
        if msq == 0.0:
            continue
        q = settings.q_for(getattr(md, "family", ""))
        s += k_opt * msq * line_shape(grid, md.frequency, md.frequency / q, rbw)
    return s


def synthesize(modes: Sequence, settings: SpectrumSettings, grid=None, label: str = "",
               meta: Optional[dict] = None) -> NoiseSpectrum:
    """Spectrum from modes carrying ``frequency``, ``phase_msq`` and ``pol_msq``.

    ``phase_msq``/``pol_msq`` are thermal mean squares of the optical-mode
    averaged index change (see :class:`gawbs.photoelastic.CouplingCoefficient`).
    """
    for md in modes:
        if not md.frequency > 0:
            raise ValidationError("mode frequencies must be > 0", "frequency")
    grid = settings.grid() if grid is None else np.asarray(grid, dtype=float)
    s_phase = _psd(grid, modes, "phase_msq", settings)
    s_pol = _psd(grid, modes, "pol_msq", settings)
    n_ph = photon_flux(settings.optical_power, settings.wavelength)
    n_pol = photon_flux(settings.pol_optical_power, settings.wavelength)
    var_phase = 1.0 + 4.0 * settings.phase_efficiency * n_ph * s_phase
    var_pol = 1.0 + 4.0 * settings.pol_efficiency * n_pol * s_pol
    return NoiseSpectrum(grid, eq1_forward(var_phase), eq1_forward(var_pol), settings, label,
                         dict(meta or {}))


def eq1_forward(variance):
    """Difference-to-shot-noise variance ratio for a quadrature variance."""
    return 0.5 * (np.asarray(variance, dtype=float) + 1.0)


def band_excess(spec: NoiseSpectrum, band, channel: str = "phase") -> float:
    """``integral (ratio - 1) df`` over ``band`` (trapezoid on the grid)."""
    lo, hi = band
    sel = (spec.grid >= lo) & (spec.grid <= hi)
    if np.count_nonzero(sel) < 2:
        raise ValidationError("band contains fewer than two grid points", "band")
    return float(np.trapezoid(spec.channel(channel)[sel] - 1.0, spec.grid[sel]))


def reduction_factor(a: NoiseSpectrum, b: NoiseSpectrum, band=(10e6, 200e6), channel: str = "phase") -> float:
    """Band-integrated excess of ``a`` divided by that of ``b``."""
    if not np.array_equal(a.grid, b.grid):
        raise ValidationError("spectra have different frequency grids", "grid")
    if a.settings.hash() != b.settings.hash():
        raise ValidationError("spectra were synthesized with different settings", "settings")
    den = band_excess(b, band, channel)
    if not den > 0:
        raise ValidationError("no excess noise in reference band", "band")
    return band_excess(a, band, channel) / den
