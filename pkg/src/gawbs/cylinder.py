"""Analytic transverse modes of an infinite, traction-free solid cylinder.

Two families couple to a centered optical mode: the radial modes R(0,m)
(``n = 0``, pure radial displacement) and the mixed torsional-radial modes
TR(2,m) (``n = 2``).  Torsional ``n = 0`` and flexural ``n = 1`` modes are not
computed; their overlap with a symmetric optical mode vanishes.

Frequencies are parameterized by the dimensionless root
``y = omega * a / v_longitudinal``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import integrate, optimize, special

from .errors import NumericalError, ValidationError
from .geometry import Material

K_BOLTZMANN = 1.380649e-23

GRID_STEP = 0.01
MAX_ROOTS = 10**6
_R_FLOOR = 1e-9  # fraction of the radius; avoids 0/0 in J2(kr)/r^2 at the axis


def _j(n, x):
    return special.jv(n, x)


def _j2p(x):
    return _j(1, x) - 2.0 * _j(2, x) / x


def _j2pp(x):
    return -_j2p(x) / x - (1.0 - 4.0 / x**2) * _j(2, x)


def radial_characteristic(y, alpha):
    """Free-surface condition for R(0,m): ``(1 - a^2) J0(y) - a^2 J2(y)``."""
    y = np.asarray(y, dtype=float)
    return (1.0 - alpha**2) * _j(0, y) - alpha**2 * _j(2, y)


def tr_matrix(y, alpha):
    """Boundary-traction matrix of the n = 2 potentials at ``r = a``.

    Rows are ``sigma_rr / mu`` and ``sigma_rtheta / mu`` (radius scaled to 1);
    columns are the amplitudes of ``phi = A J2(h r) cos 2t`` and
    ``psi = B J2(k r) sin 2t``.  Returns an array of shape ``(..., 2, 2)``.
    """
    y = np.asarray(y, dtype=float)
    h = y
    k = y / alpha
    lam_mu = 1.0 / alpha**2 - 2.0
    m = np.empty(y.shape + (2, 2))
    m[..., 0, 0] = -lam_mu * h**2 * _j(2, h) + 2.0 * h**2 * _j2pp(h)
    m[..., 0, 1] = 4.0 * (k * _j2p(k) - _j(2, k))
    m[..., 1, 0] = -4.0 * h * _j2p(h) + 4.0 * _j(2, h)
    m[..., 1, 1] = -(k**2) * _j2pp(k) + k * _j2p(k) - 4.0 * _j(2, k)
    return m


def tr_determinant(y, alpha):
    m = tr_matrix(y, alpha)
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def _bisect_all(f, lo, hi, tol=1e-12):
    """Vectorized bisection over many brackets with sign changes."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    flo = f(lo)
    while np.any(hi - lo > tol):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
    return 0.5 * (lo + hi)


def bracket_roots(f, y_max, step=GRID_STEP, y_min=None):
    """Roots of ``f`` on ``(0, y_max]`` by sign-change scan then bisection."""
    if y_min is None:
        y_min = step
    n = int(math.ceil((y_max - y_min) / step)) + 1
    grid = np.linspace(y_min, y_max, max(n, 2))
    vals = f(grid)
    exact = np.flatnonzero(vals == 0.0)
    idx = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)
    roots = _bisect_all(f, grid[idx], grid[idx + 1]) if idx.size else np.empty(0)
    return np.sort(np.concatenate([roots, grid[exact]]))


@dataclass(frozen=True)
class CylinderMode:
    """One analytic mode of the free cylinder.

    ``coeffs`` holds the potential amplitudes ``(A, B)`` scaled so that the
    peak displacement magnitude along a radius is 1 m per unit modal amplitude.
    """

    family: str
    n: int
    m: int
    frequency: float
    y: float
    radius: float
    material: Material
    coeffs: tuple
    thermal_amplitude_sq: Optional[float] = None

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.frequency

    @property
    def label(self) -> str:
        return f"{self.family}({self.n},{self.m})"

    def _wavenumbers(self):
        h = self.y / self.radius
        return h, h / self.material.alpha

    def radial_profiles(self, r):
        """Radial amplitude functions ``(U, V)``; ``u_r = U cos(n t)``, ``u_t = V sin(n t)``."""
        r = np.maximum(np.asarray(r, dtype=float), _R_FLOOR * self.radius)
        h, k = self._wavenumbers()
        A, B = self.coeffs
        if self.n == 0:
            return A * _j(1, h * r), np.zeros_like(r)
        U = A * h * _j2p(h * r) + 2.0 * B * _j(2, k * r) / r
        V = -2.0 * A * _j(2, h * r) / r - B * k * _j2p(k * r)
        return U, V

    def displacement(self, r, theta):
        """Polar displacement components ``(u_r, u_theta)`` per unit amplitude."""
        U, V = self.radial_profiles(r)
        return U * np.cos(self.n * theta), V * np.sin(self.n * theta)

    def polar_strain(self, r, theta):
        """Tensor strain components ``(S_rr, S_tt, S_rt)``."""
        r = np.maximum(np.asarray(r, dtype=float), _R_FLOOR * self.radius)
        theta = np.asarray(theta, dtype=float)
        h, k = self._wavenumbers()
        A, B = self.coeffs
        if self.n == 0:
            s_rr = A * h * (_j(0, h * r) - _j(1, h * r) / (h * r))
            s_tt = A * _j(1, h * r) / r
            return s_rr, s_tt, np.zeros(np.broadcast(r, theta).shape)
        U, V = self.radial_profiles(r)
        dU = A * h**2 * _j2pp(h * r) + 2.0 * B * (k * _j2p(k * r) / r - _j(2, k * r) / r**2)
        dV = -2.0 * A * (h * _j2p(h * r) / r - _j(2, h * r) / r**2) - B * k**2 * _j2pp(k * r)
        c, s = np.cos(2 * theta), np.sin(2 * theta)
        s_rr = dU * c
        s_tt = (U + 2.0 * V) / r * c
        s_rt = 0.5 * (dV - V / r - 2.0 * U / r) * s
        return s_rr, s_tt, s_rt

    def strain(self, x, y):
        """Cartesian tensor strain ``(S_xx, S_yy, S_xy)`` at points ``(x, y)``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        r = np.hypot(x, y)
        t = np.arctan2(y, x)
        s_rr, s_tt, s_rt = self.polar_strain(r, t)
        c, s = np.cos(t), np.sin(t)
        sxx = s_rr * c * c + s_tt * s * s - 2.0 * s_rt * s * c
        syy = s_rr * s * s + s_tt * c * c + 2.0 * s_rt * s * c
        sxy = (s_rr - s_tt) * s * c + s_rt * (c * c - s * s)
        return sxx, syy, sxy

    def divergence(self, r, theta):
        s_rr, s_tt, _ = self.polar_strain(r, theta)
        return s_rr + s_tt

    def modal_mass(self, epsrel=1e-8) -> float:
        """``integral rho |u|^2 dA`` over the cross-section (kg/m per amplitude^2)."""

        def integrand(r):
            U, V = self.radial_profiles(r)
            return (U * U + V * V) * r

        brk = np.linspace(0.0, self.radius, int(self.y / self.material.alpha) + 2)[1:-1]
        val, _ = integrate.quad(integrand, 0.0, self.radius, epsrel=epsrel, epsabs=0.0,
                                limit=500, points=brk if brk.size else None)
        angular = 2.0 * math.pi if self.n == 0 else math.pi
        return self.material.density * angular * val


def _frequency(y, radius, material):
    return y * material.v_longitudinal / (2.0 * math.pi * radius)


def _y_max(material, radius, f_max):
    if not f_max > 0:
        raise ValidationError("must be > 0", "f_max")
    if not radius > 0:
        raise ValidationError("must be > 0", "radius")
    y_max = 2.0 * math.pi * radius * f_max / material.v_longitudinal
    # roots of either family are spaced at least ~pi * alpha apart
    if y_max / (math.pi * material.alpha) > MAX_ROOTS:
        raise NumericalError(f"f_max={f_max:g} Hz requests more than {MAX_ROOTS} roots")
    return y_max


def _normalized(mode_coeffs, y, n, radius, material, m):
    proto = CylinderMode("R" if n == 0 else "TR", n, m, _frequency(y, radius, material),
                         float(y), radius, material, mode_coeffs)
    r = np.linspace(0.0, radius, 4001)
    U, V = proto.radial_profiles(r)
    mag = np.hypot(U, V)
    k = int(np.argmax(mag))
    peak = float(mag[k])
    if 0 < k < len(r) - 1:
        res = optimize.minimize_scalar(lambda t: -float(np.hypot(*proto.radial_profiles(np.array([t])))[0]),
                                       bounds=(r[k - 1], r[k + 1]), method="bounded",
                                       options={"xatol": 1e-13 * radius})
        peak = max(peak, -float(res.fun))
    A, B = mode_coeffs
    return replace(proto, coeffs=(A / peak, B / peak))


def radial_dispersion_roots(material: Material, radius: float, f_max: float, step=GRID_STEP):
    """R(0,m) modes with frequency up to ``f_max``, ordered by frequency."""
    y_max = _y_max(material, radius, f_max)
    a = material.alpha
    ys = bracket_roots(lambda y: radial_characteristic(y, a), y_max, step)
    return [_normalized((1.0, 0.0), y, 0, radius, material, m) for m, y in enumerate(ys)]


def tr_null_vector(y, alpha):
    """Potential amplitudes ``(A, B)`` spanning the null space at a root."""
    mat = tr_matrix(y, alpha)
    row = mat[0] if np.abs(mat[0]).max() >= np.abs(mat[1]).max() else mat[1]
    return float(row[1]), float(-row[0])


def tr_dispersion_roots(material: Material, radius: float, f_max: float, step=GRID_STEP):
    """TR(2,m) modes with frequency up to ``f_max``, ordered by frequency."""
    y_max = _y_max(material, radius, f_max)
    a = material.alpha
    ys = bracket_roots(lambda y: tr_determinant(y, a), y_max, step)
    modes = []
    for m, y in enumerate(ys):
        A, B = tr_null_vector(y, a)
        # convert potential amplitudes from scaled-radius units to meters
        modes.append(_normalized((A * radius, B * radius), y, 2, radius, material, m))
    return modes


def cylinder_modes(material: Material, radius: float, f_max: float):
    """Both families, merged and sorted by frequency."""
    modes = radial_dispersion_roots(material, radius, f_max) + tr_dispersion_roots(material, radius, f_max)
    return sorted(modes, key=lambda md: (md.frequency, md.n, md.m))


def thermal_amplitude_sq(omega: float, modal_mass: float, temperature: float, length: float) -> float:
    """Classical equipartition: ``<c^2> omega^2 m L / 2 = k_B T / 2``."""
    if not temperature > 0:
        raise ValidationError("must be > 0", "temperature")
    if not length > 0:
        raise ValidationError("must be > 0", "fiber_length")
    if not omega > 0:
        raise ValidationError("zero-frequency mode has no restoring force", "frequency")
    return K_BOLTZMANN * temperature / (omega**2 * modal_mass * length)


def normalize_thermal(mode: CylinderMode, temperature: float, fiber_length: float,
                      material: Optional[Material] = None) -> CylinderMode:
    """Return ``mode`` with its equipartition mean-square amplitude filled in."""
    if material is not None and material != mode.material:
        mode = replace(mode, material=material)
    if not mode.frequency > 0:
        raise ValidationError("zero-frequency mode has no restoring force", "frequency")
    c2 = thermal_amplitude_sq(mode.omega, mode.modal_mass(), temperature, fiber_length)
    return replace(mode, thermal_amplitude_sq=c2)
