"""Strain-induced index modulation and its overlap with the optical mode.

With the isotropic strain-optic tensor and plane strain (``S_zz = 0``)::

    dn_x = -(n^3 / 2) (p11 S_xx + p12 S_yy)
    dn_y = -(n^3 / 2) (p12 S_xx + p11 S_yy)
    dn_xy = -(n^3 / 2) * 2 p44 S_xy

``S_xy`` is the tensor (not engineering) shear strain.  The phase channel
averages ``(dn_x + dn_y) / 2`` over the optical intensity, the polarization
channel averages the birefringence along the polarization axis ``psi``,
``dn_biref cos 2psi + 2 dn_xy sin 2psi`` (the factor 2 keeps it a proper
tensor projection, so rotating field and optics together changes nothing).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ValidationError
from .geometry import FiberCrossSection, OpticalMode, region_of, GLASS
from .mesh import TriMesh

WEIGHTINGS = ("intensity", "amplitude")

# Degree-5 seven-point rule on the reference triangle (barycentric, weights sum to 1)
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
    [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
])
_W = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)
# four congruent children of a triangle, as barycentric corner coordinates
_CHILDREN = np.array([
    [[1, 0, 0], [0.5, 0.5, 0], [0.5, 0, 0.5]],
    [[0.5, 0.5, 0], [0, 1, 0], [0, 0.5, 0.5]],
    [[0.5, 0, 0.5], [0, 0.5, 0.5], [0, 0, 1]],
    [[0.5, 0.5, 0], [0, 0.5, 0.5], [0.5, 0, 0.5]],
])


@dataclass(frozen=True, eq=False)
class IndexModulationField:
    """Index perturbation per unit modal amplitude.

    Mesh fields carry per-triangle arrays; analytic fields carry a ``sampler``
    ``(x, y) -> (dn_iso, dn_biref, dn_shear)`` valid inside ``radius``.
    """

    dn_iso: Optional[np.ndarray] = None
    dn_biref: Optional[np.ndarray] = None
    dn_shear: Optional[np.ndarray] = None
    mesh: Optional[TriMesh] = None
    sampler: Optional[Callable] = None
    radius: Optional[float] = None
    cross_section: Optional[FiberCrossSection] = None

    def sample(self, x, y):
        """Evaluate all three components at points; NaN outside the glass."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if self.sampler is not None:
            iso, bi, sh = (np.array(c, dtype=float) for c in self.sampler(x, y))
            out = np.hypot(x, y) > self.radius * (1 + 1e-12)
            for c in (iso, bi, sh):
                c[out] = np.nan
            return iso, bi, sh
        tri = _trifinder(self.mesh)(x, y)
        res = []
        for comp in (self.dn_iso, self.dn_biref, self.dn_shear):
            v = np.full(x.shape, np.nan)
            v[tri >= 0] = comp[tri[tri >= 0]]
            res.append(v)
        return tuple(res)

    def scaled(self, factor: float) -> "IndexModulationField":
        if self.sampler is not None:
            s = self.sampler
            return IndexModulationField(sampler=lambda x, y: tuple(factor * c for c in s(x, y)),
                                        radius=self.radius, cross_section=self.cross_section)
        return IndexModulationField(factor * self.dn_iso, factor * self.dn_biref, factor * self.dn_shear,
                                    self.mesh, cross_section=self.cross_section)


def index_components(sxx, syy, sxy, material):
    """``(dn_iso, dn_biref, dn_shear)`` for tensor strain components."""
    n3 = material.refractive_index**3
    sxx, syy, sxy = (np.asarray(s, dtype=float) for s in (sxx, syy, sxy))
    dn_x = -0.5 * n3 * (material.p11 * sxx + material.p12 * syy)
    dn_y = -0.5 * n3 * (material.p12 * sxx + material.p11 * syy)
    dn_iso = 0.5 * (dn_x + dn_y)
    dn_biref = dn_x - dn_y
    dn_shear = -0.5 * n3 * 2.0 * material.p44 * sxy
    return dn_iso, dn_biref, dn_shear


def index_modulation(strain, material, mesh: Optional[TriMesh] = None) -> IndexModulationField:
    """Index field from a strain array of shape (..., 3) or a mode object.

    Accepts a per-triangle strain array (with ``mesh``), a ``FemMode``
    (uses its mesh), or an analytic ``CylinderMode``.
    """
    if hasattr(strain, "polar_strain"):  # analytic cylinder mode
        mode = strain

        def sampler(x, y):
            return index_components(*mode.strain(x, y), material)

        return IndexModulationField(sampler=sampler, radius=mode.radius)
    if hasattr(strain, "ops"):  # FemMode
        mesh = strain.ops.mesh
        strain = strain.strain
    s = np.asarray(strain, dtype=float)
    if not np.all(np.isfinite(s)):
        raise ValidationError("strain components must be finite", "strain")
    iso, bi, sh = index_components(s[..., 0], s[..., 1], s[..., 2], material)
    return IndexModulationField(iso, bi, sh, mesh)


def _weight_fn(om: OpticalMode, weighting: str):
    if weighting == "intensity":
        return om.intensity
    if weighting == "amplitude":
        return om.amplitude
    raise ValidationError(f"unknown weighting {weighting!r}; use one of {WEIGHTINGS}", "overlap_weighting")


def _within_waists(points, om: OpticalMode, k=3.0):
    c, s = math.cos(om.orientation), math.sin(om.orientation)
    dx = points[..., 0] - om.center[0]
    dy = points[..., 1] - om.center[1]
    u, v = c * dx + s * dy, -s * dx + c * dy
    return (u / om.waist_x) ** 2 + (v / om.waist_y) ** 2 <= k * k


def triangle_weights(mesh: TriMesh, om: OpticalMode, weighting: str = "intensity"):
    """``integral_t w dA`` for every triangle ``t`` of the mesh.

    Triangles near the optical mode (any vertex or centroid within 3 waists, or
    larger than a waist) are split once and integrated with a degree-5 rule;
    the rest use the centroid rule.
    """
    w = _weight_fn(om, weighting)
    p = mesh.nodes[mesh.triangles]  # (T, 3, 2)
    area = np.abs(mesh.signed_areas())
    cen = p.mean(axis=1)
    out = area * w(cen[:, 0], cen[:, 1])
    size = np.sqrt(area)
    near = (_within_waists(cen, om) | _within_waists(p, om).any(axis=1)
            | (size > min(om.waist_x, om.waist_y)) & _within_waists(cen, om, 12.0))
    idx = np.flatnonzero(near)
    if idx.size:
        pn = p[idx]
        child = np.einsum("cij,tjk->tcik", _CHILDREN, pn)  # (t, 4, 3, 2)
        qp = np.einsum("qj,tcjk->tcqk", _BARY, child)  # (t, 4, 7, 2)
        vals = w(qp[..., 0], qp[..., 1])
        out[idx] = area[idx] * 0.25 * np.einsum("tcq,q->t", vals, _W)
    return out


@dataclass(frozen=True)
class CouplingCoefficient:
    """Optical-mode-averaged index modulation of one acoustic mode."""

    mode_id: int
    family: str
    n: object
    m: object
    frequency: float
    phase_coupling: float
    pol_coupling: float
    thermal_amplitude_sq: Optional[float] = None

    @property
    def phase_msq(self) -> float:
        """Thermal mean-square of the averaged isotropic index change."""
        return (self.thermal_amplitude_sq or 0.0) * self.phase_coupling**2

    @property
    def pol_msq(self) -> float:
        return (self.thermal_amplitude_sq or 0.0) * self.pol_coupling**2


def _polar_nodes(om: OpticalMode, n_r=48, n_panels=4, n_theta=128, extent=8.0):
    """Quadrature nodes/weights for integrals against the optical mode in polar form."""
    x, w = np.polynomial.legendre.leggauss(n_r)
    rmax = extent * om.max_waist
    edges = np.linspace(0.0, rmax, n_panels + 1)
    r = np.concatenate([0.5 * (b - a) * x + 0.5 * (a + b) for a, b in zip(edges[:-1], edges[1:])])
    wr = np.concatenate([0.5 * (b - a) * w for a, b in zip(edges[:-1], edges[1:])])
    t = 2 * math.pi * np.arange(n_theta) / n_theta
    R, T = np.meshgrid(r, t, indexing="ij")
    W = (wr * r)[:, None] * (2 * math.pi / n_theta) * np.ones_like(T)
    X = om.center[0] + R * np.cos(T)
    Y = om.center[1] + R * np.sin(T)
    return X, Y, W


def overlap(field: IndexModulationField, om: OpticalMode, weights=None, weighting: str = "intensity",
            polarization_angle: Optional[float] = None, mode_id: int = 0, family: str = "",
            n=None, m=None, frequency: float = float("nan"),
            thermal_amplitude_sq: Optional[float] = None) -> CouplingCoefficient:
    """Average the index field over the optical mode.

    ``weights`` may carry precomputed :func:`triangle_weights` for mesh fields.
    ``polarization_angle`` defaults to the optical-mode orientation.
    """
    psi = om.orientation if polarization_angle is None else polarization_angle
    if field.cross_section is not None and region_of(om.center, field.cross_section) != GLASS:
        raise ValidationError("optical mode is centered outside the glass", "optical_mode")
    if field.sampler is not None:
        if math.hypot(*om.center) >= field.radius:
            raise ValidationError("optical mode is centered outside the glass", "optical_mode")
        X, Y, W = _polar_nodes(om)
        inside = np.hypot(X, Y) <= field.radius
        wfun = _weight_fn(om, weighting)
        ww = np.where(inside, W * wfun(X, Y), 0.0)
        iso, bi, sh = field.sampler(np.where(inside, X, 0.0), np.where(inside, Y, 0.0))
    else:
        if weights is None:
            weights = triangle_weights(field.mesh, om, weighting)
        ww = weights
        iso, bi, sh = field.dn_iso, field.dn_biref, field.dn_shear
    phase = float(np.sum(iso * ww))
    pol = float(np.sum((bi * math.cos(2 * psi) + 2.0 * sh * math.sin(2 * psi)) * ww))
    return CouplingCoefficient(mode_id, family, n, m, frequency, phase, pol, thermal_amplitude_sq)


def _trifinder(mesh: TriMesh):
    from matplotlib.tri import Triangulation

    tri = Triangulation(mesh.nodes[:, 0], mesh.nodes[:, 1], mesh.triangles)
    return tri.get_trifinder()


def cross_section_profile(field: IndexModulationField, axis: str = "x", n_points: int = 512,
                          extent: Optional[float] = None):
    """Sample ``dn_iso`` on the horizontal (``x``) or vertical (``y``) center line.

    Returns ``(positions, values)``; points in holes or outside are NaN gaps.
    """
    if axis not in ("x", "y"):
        raise ValidationError("axis must be 'x' or 'y'", "axis")
    if n_points < 512:
        raise ValidationError("at least 512 samples required", "n_points")
    if extent is None:
        if field.radius is not None:
            extent = field.radius
        else:
            extent = float(np.hypot(*field.mesh.nodes.T).max())
    pos = np.linspace(-extent, extent, n_points)
    zero = np.zeros_like(pos)
    x, y = (pos, zero) if axis == "x" else (zero, pos)
    iso, _, _ = field.sample(x, y)
    return pos, iso
