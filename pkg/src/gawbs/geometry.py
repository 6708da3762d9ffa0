"""Materials and parametric fiber cross-sections.

Two kinds of cross-section are supported: the solid standard fiber (a disk)
and a hexagonal-lattice photonic crystal fiber with an elliptical core.  All
lengths are in meters.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import GeometryError, ValidationError

GLASS = "glass"
HOLE = "hole"
OUTSIDE = "outside"

BOUNDARY_TOL = 1e-12  # m; points this close to an interface count as glass


@dataclass(frozen=True)
class Material:
    """Isotropic elastic and elasto-optic material constants (SI units)."""

    density: float = 2203.0
    v_longitudinal: float = 5996.0
    v_shear: float = 3740.0
    refractive_index: float = 1.45
    p11: float = 0.121
    p12: float = 0.270
    p44: Optional[float] = None
    isotropic: bool = True

    def __post_init__(self):
        if self.p44 is None:
            object.__setattr__(self, "p44", 0.5 * (self.p11 - self.p12))
        if not self.density > 0:
            raise ValidationError("must be > 0", "density")
        if not 0 < self.v_shear < self.v_longitudinal:
            raise ValidationError("need 0 < v_shear < v_longitudinal", "v_shear")
        if not self.refractive_index > 0:
            raise ValidationError("must be > 0", "refractive_index")
        if self.isotropic and abs(self.p44 - 0.5 * (self.p11 - self.p12)) > 1e-12:
            raise ValidationError("p44 must equal (p11 - p12)/2 for an isotropic material", "p44")
        if self.lame_lambda < 0:
            warnings.warn("negative Lame lambda (v_longitudinal < sqrt(2) v_shear)", stacklevel=2)

    @property
    def lame_mu(self) -> float:
        return self.density * self.v_shear**2

    @property
    def lame_lambda(self) -> float:
        return self.density * (self.v_longitudinal**2 - 2.0 * self.v_shear**2)

    @property
    def alpha(self) -> float:
        """Shear-to-longitudinal velocity ratio."""
        return self.v_shear / self.v_longitudinal


FUSED_SILICA = Material()


@dataclass(frozen=True)
class Hole:
    center: tuple
    radius: float


@dataclass(frozen=True)
class Ellipse:
    semi_axis_x: float
    semi_axis_y: float
    rotation: float = 0.0

    def to_local(self, x, y):
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return c * x + s * y, -s * x + c * y

    def contains(self, x, y) -> bool:
        u, v = self.to_local(x, y)
        return (u / self.semi_axis_x) ** 2 + (v / self.semi_axis_y) ** 2 <= 1.0

    def distance_to_boundary(self, x, y) -> float:
        """Euclidean distance from (x, y) to the ellipse outline."""
        u, v = self.to_local(x, y)
        a, b = self.semi_axis_x, self.semi_axis_y
        # coarse parametric scan, then polish with golden-section refinement
        t = np.linspace(0.0, 2 * math.pi, 721)
        d2 = (a * np.cos(t) - u) ** 2 + (b * np.sin(t) - v) ** 2
        k = int(np.argmin(d2))
        lo, hi = t[k] - 2 * math.pi / 720, t[k] + 2 * math.pi / 720
        g = (math.sqrt(5) - 1) / 2

        def f(tt):
            return (a * math.cos(tt) - u) ** 2 + (b * math.sin(tt) - v) ** 2

        for _ in range(80):
            m1 = hi - g * (hi - lo)
            m2 = lo + g * (hi - lo)
            if f(m1) < f(m2):
                hi = m2
            else:
                lo = m1
        return math.sqrt(f(0.5 * (lo + hi)))

    def intersects_circle(self, center, radius) -> bool:
        if self.contains(*center):
            return True
        return self.distance_to_boundary(*center) < radius


@dataclass(frozen=True)
class LatticeSpec:
    pitch: float
    hole_diameter: float
    holey_region_radius: float
    rings: int
    core_rotation: float = 0.0


@dataclass(frozen=True)
class FiberCrossSection:
    """Outer glass disk with circular air holes and an optional core ellipse."""

    outer_radius: float
    holes: tuple = ()
    core: Optional[Ellipse] = None
    material: Material = FUSED_SILICA
    lattice_spec: Optional[LatticeSpec] = None
    name: str = "fiber"

    def __post_init__(self):
        if not self.outer_radius > 0:
            raise ValidationError("must be > 0", "outer_radius")
        object.__setattr__(self, "holes", tuple(self.holes))
        _check_holes(self.outer_radius, self.holes, self.core)
        if self.lattice_spec is not None:
            expected = _lattice_holes(self.lattice_spec, self.core)[0]
            if tuple(expected) != self.holes:
                raise GeometryError("hole list does not match the lattice specification")

    @property
    def glass_area(self) -> float:
        return math.pi * (self.outer_radius**2 - sum(h.radius**2 for h in self.holes))

    def scaled(self, s: float) -> "FiberCrossSection":
        """Copy with every length multiplied by ``s``."""
        holes = tuple(Hole((h.center[0] * s, h.center[1] * s), h.radius * s) for h in self.holes)
        core = None
        if self.core is not None:
            core = Ellipse(self.core.semi_axis_x * s, self.core.semi_axis_y * s, self.core.rotation)
        return FiberCrossSection(self.outer_radius * s, holes, core, self.material, None, self.name)


def _check_holes(outer_radius, holes, core):
    for i, h in enumerate(holes):
        if not h.radius > 0:
            raise GeometryError(f"hole {i} has non-positive radius")
        if math.hypot(*h.center) + h.radius >= outer_radius:
            raise GeometryError(f"hole {i} is not strictly inside the outer circle")
        if core is not None and core.intersects_circle(h.center, h.radius):
            raise GeometryError(f"hole {i} intersects the core ellipse")
    if len(holes) > 1:
        c = np.array([h.center for h in holes])
        r = np.array([h.radius for h in holes])
        d = np.hypot(c[:, None, 0] - c[None, :, 0], c[:, None, 1] - c[None, :, 1])
        overlap = d <= r[:, None] + r[None, :]
        np.fill_diagonal(overlap, False)
        if overlap.any():
            i, j = np.argwhere(overlap)[0]
            raise GeometryError(f"holes {i} and {j} overlap")


@dataclass(frozen=True)
class OpticalMode:
    """Elliptical Gaussian guided mode; waists are 1/e field-amplitude radii."""

    center: tuple = (0.0, 0.0)
    waist_x: float = 2.25e-6
    waist_y: float = 2.25e-6
    orientation: float = 0.0
    wavelength: float = 1064e-9
    power: float = 0.9e-3

    def __post_init__(self):
        if not (self.waist_x > 0 and self.waist_y > 0):
            raise ValidationError("waists must be > 0", "waist")
        if not self.wavelength > 0:
            raise ValidationError("must be > 0", "wavelength")

    def _local(self, x, y):
        dx = np.asarray(x) - self.center[0]
        dy = np.asarray(y) - self.center[1]
        c, s = math.cos(self.orientation), math.sin(self.orientation)
        return c * dx + s * dy, -s * dx + c * dy

    def intensity(self, x, y):
        """Normalized intensity |E|^2; integrates to 1 over the plane."""
        u, v = self._local(x, y)
        norm = 2.0 / (math.pi * self.waist_x * self.waist_y)
        return norm * np.exp(-2.0 * (u / self.waist_x) ** 2 - 2.0 * (v / self.waist_y) ** 2)

    def amplitude(self, x, y):
        """Field amplitude |E| normalized to unit integral over the plane."""
        u, v = self._local(x, y)
        norm = 1.0 / (math.pi * self.waist_x * self.waist_y)
        return norm * np.exp(-((u / self.waist_x) ** 2) - (v / self.waist_y) ** 2)

    @property
    def max_waist(self) -> float:
        return max(self.waist_x, self.waist_y)


def build_standard_fiber(cladding_diameter: float, mfd: float, material: Material = FUSED_SILICA,
                         wavelength: float = 1064e-9, power: float = 0.9e-3):
    """Solid fiber with a circular Gaussian mode of waist ``mfd / 2``."""
    if not cladding_diameter > 0:
        raise ValidationError("must be > 0", "cladding_diameter")
    if not mfd > 0:
        raise ValidationError("must be > 0", "mfd")
    if mfd >= cladding_diameter:
        raise ValidationError("mode field larger than the cladding", "mfd")
    cs = FiberCrossSection(0.5 * cladding_diameter, (), None, material, name="standard")
    w = 0.5 * mfd
    return cs, OpticalMode((0.0, 0.0), w, w, 0.0, wavelength, power)


def hexagonal_sites(pitch: float, radius: float):
    """Hexagonal lattice sites with ``|site| <= radius`` in deterministic order.

    Sites are ordered by ring distance, then by polar angle in [0, 2pi).
    The central site is included.
    """
    n = int(math.ceil(radius / (pitch * math.sqrt(3) / 2))) + 1
    sites = []
    for i in range(-n, n + 1):
        for j in range(-n, n + 1):
            # a1 = (1, 0), a2 = (1/2, sqrt(3)/2); integer distances keep sorting exact
            x = pitch * (i + 0.5 * j)
            y = pitch * (math.sqrt(3) / 2 * j)
            norm2 = i * i + i * j + j * j
            if pitch * math.sqrt(norm2) <= radius * (1 + 1e-12):
                ang = math.atan2(j * math.sqrt(3) / 2, i + 0.5 * j) % (2 * math.pi)
                sites.append((norm2, round(ang, 12), x, y))
    sites.sort()
    return [(x, y) for _, _, x, y in sites]


def _lattice_holes(spec: LatticeSpec, core: Optional[Ellipse], omit_colliding: bool = True):
    r = 0.5 * spec.hole_diameter
    holes, colliding = [], []
    for x, y in hexagonal_sites(spec.pitch, spec.holey_region_radius):
        if x == 0.0 and y == 0.0:
            continue
        if core is not None and core.intersects_circle((x, y), r):
            colliding.append((x, y))
            continue
        holes.append(Hole((x, y), r))
    if colliding and not omit_colliding:
        sites = ", ".join(f"({x * 1e6:.3f}, {y * 1e6:.3f}) um" for x, y in colliding)
        raise GeometryError(f"lattice sites collide with the core: {sites}")
    return holes, colliding


def build_pcf(cladding_diameter: float, pitch: float, hole_diameter: float,
              holey_region_diameter: float, core_axes: tuple, *,
              material: Material = FUSED_SILICA, core_rotation: float = 0.0,
              waist_factor: float = 1.0, omit_colliding: bool = True,
              wavelength: float = 1064e-9, power: float = 0.9e-3):
    """Hexagonal-lattice PCF with an elliptical core.

    ``core_axes`` are the full core diameters ``(d1, d2)``.  Lattice sites whose
    hole would touch the core ellipse are left solid; with
    ``omit_colliding=False`` they raise :class:`GeometryError` instead.
    The optical waists are ``waist_factor`` times the core semi-axes.
    """
    for name, val in (("cladding_diameter", cladding_diameter), ("pitch", pitch),
                      ("hole_diameter", hole_diameter),
                      ("holey_region_diameter", holey_region_diameter)):
        if not val > 0:
            raise ValidationError("must be > 0", name)
    if hole_diameter >= pitch:
        raise ValidationError("holes touch: hole_diameter must be < pitch", "hole_diameter")
    if holey_region_diameter >= cladding_diameter:
        raise ValidationError("holey region exceeds the cladding", "holey_region_diameter")
    d1, d2 = core_axes
    if not (d1 > 0 and d2 > 0):
        raise ValidationError("must be > 0", "core_axes")
    if 0.5 * max(d1, d2) >= pitch:
        raise ValidationError("core does not fit inside the innermost lattice ring", "core_axes")
    core = Ellipse(0.5 * d1, 0.5 * d2, core_rotation)
    rings = int(math.floor(0.5 * holey_region_diameter / (pitch * math.sqrt(3) / 2)))
    spec = LatticeSpec(pitch, hole_diameter, 0.5 * holey_region_diameter, rings, core_rotation)
    holes, _ = _lattice_holes(spec, core, omit_colliding)
    cs = FiberCrossSection(0.5 * cladding_diameter, tuple(holes), core, material, spec, name="pcf")
    om = OpticalMode((0.0, 0.0), waist_factor * core.semi_axis_x, waist_factor * core.semi_axis_y,
                     core_rotation, wavelength, power)
    return cs, om


def region_of(point, cs: FiberCrossSection) -> str:
    """Classify ``point`` as ``"glass"``, ``"hole"`` or ``"outside"``."""
    x, y = point
    if math.hypot(x, y) > cs.outer_radius + BOUNDARY_TOL:
        return OUTSIDE
    for h in cs.holes:
        if math.hypot(x - h.center[0], y - h.center[1]) < h.radius - BOUNDARY_TOL:
            return HOLE
    return GLASS


def glass_mask(x, y, cs: FiberCrossSection):
    """Vectorized :func:`region_of` test for glass membership."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = np.hypot(x, y) <= cs.outer_radius + BOUNDARY_TOL
    for h in cs.holes:
        inside &= np.hypot(x - h.center[0], y - h.center[1]) >= h.radius - BOUNDARY_TOL
    return inside
