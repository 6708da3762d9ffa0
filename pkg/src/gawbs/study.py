"""End-to-end pipeline: cross-section, modes, couplings, spectra.

A :class:`FiberStudy` bundles everything computed for one fiber so the CLI and
the regression tests share one code path.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from .config import RunConfig
from .cylinder import cylinder_modes, normalize_thermal
from .errors import ValidationError
from .fem import INTERIOR, TORSIONAL, FemOperatorPair, assemble, solve_modes
from .geometry import FiberCrossSection, Material, OpticalMode, build_pcf, build_standard_fiber
from .mesh import TriMesh, mesh_cross_section, refine_uniform
from .photoelastic import index_modulation, overlap, triangle_weights
from .spectrum import NoiseSpectrum, SpectrumSettings, reduction_factor, synthesize

# FEM modes of one angular order closer than this (relative) are one (n, m) pair
PAIR_GAP = 5e-3


def material_from(cfg: RunConfig) -> Material:
    m = cfg["material"]
    kw = dict(density=m["density"], v_longitudinal=m["v_longitudinal"], v_shear=m["v_shear"],
              refractive_index=m["refractive_index"], p11=m["p11"], p12=m["p12"])
    if m["p44"] is not None:
        kw["p44"] = m["p44"]
    return Material(**kw)


def fiber_from(cfg: RunConfig):
    """``(cross_section, optical_mode)`` described by the [fiber] section."""
    f = cfg["fiber"]
    mat = material_from(cfg)
    wl = cfg["optical_mode"]["wavelength"]
    power = cfg["spectrum"]["optical_power"]
    if f["kind"] == "standard":
        cs, om = build_standard_fiber(f["cladding_diameter"], f["mfd"], mat, wl, power)
    else:
        cs, om = build_pcf(f["cladding_diameter"], f["pitch"], f["hole_diameter"],
                           f["holey_region_diameter"], (f["core_d1"], f["core_d2"]), material=mat,
                           core_rotation=f["core_rotation"], waist_factor=f["waist_factor"],
                           wavelength=wl, power=power)
    if f["name"]:
        cs = FiberCrossSection(cs.outer_radius, cs.holes, cs.core, cs.material, cs.lattice_spec, f["name"])
    return cs, om


def spectrum_settings(cfg: RunConfig) -> SpectrumSettings:
    s = cfg["spectrum"]
    q = tuple((fam, s[key]) for fam, key in (("R", "q_r"), ("TR", "q_tr")) if s[key] is not None)
    return SpectrumSettings(
        rbw=s["rbw"], vbw=s["vbw"], averages=s["averages"], optical_power=s["optical_power"],
        pol_optical_power=s["pol_optical_power"], wavelength=cfg["optical_mode"]["wavelength"],
        fiber_length=s["fiber_length"], detection_efficiency=s["detection_efficiency"],
        visibility=s["visibility"], pol_extinction=s["pol_extinction"], temperature=s["temperature"],
        q_factor=s["q_factor"], q_overrides=q, rbw_filter=s["rbw_filter"], f_start=s["f_start"],
        f_stop=s["f_stop"])


def band_of(cfg: RunConfig):
    s = cfg["spectrum"]
    if not s["band_lo"] < s["band_hi"]:
        raise ValidationError("band_lo must be below band_hi", "band_lo")
    return (s["band_lo"], s["band_hi"])


def family_of(order) -> str:
    if order == 0:
        return "R"
    if order == 2:
        return "TR"
    if order == TORSIONAL:
        return "T"
    if order == INTERIOR:
        return "I"
    return f"N{order}"


def label_fem_modes(modes):
    """``(family, n, m)`` for every FEM mode.

    Modes are grouped by angular order; within an order, frequency-sorted modes
    are numbered m = 0, 1, ...; for n >= 1 two modes closer than ``PAIR_GAP``
    (the split degenerate pair) share one m.
    """
    labels = [None] * len(modes)
    by_order = {}
    for i, md in enumerate(modes):
        by_order.setdefault(md.angular_order, []).append(i)
    for order, idx in by_order.items():
        idx = sorted(idx, key=lambda i: modes[i].frequency)
        pair = isinstance(order, int) and order >= 1
        m, prev, size = -1, None, 0
        for i in idx:
            f = modes[i].frequency
            if pair and prev is not None and size < 2 and (f - prev) <= PAIR_GAP * f:
                size += 1
            else:
                m += 1
                size = 1
            prev = f
            n = order if isinstance(order, int) else -1
            labels[i] = (family_of(order), n, m)
    return labels


@dataclass(eq=False)
class FiberStudy:
    """Modes and couplings of one fiber.

    ``labels`` are ``(family, n, m)``.  For FEM studies R/TR modes carry the
    m of the matching free-cylinder mode, or -1 when the microstructure has
    no cylinder counterpart; other families are numbered by frequency.
    """

    name: str
    cross_section: FiberCrossSection
    optical_mode: OpticalMode
    model: str
    modes: list
    labels: list
    couplings: list
    mesh: Optional[TriMesh] = None
    ops: Optional[FemOperatorPair] = None
    meta: dict = field(default_factory=dict)

    def spectrum(self, settings: SpectrumSettings, grid=None) -> NoiseSpectrum:
        return synthesize(self.couplings, settings, grid, label=self.name, meta=dict(self.meta))


def build_mesh(cs: FiberCrossSection, cfg: RunConfig) -> TriMesh:
    m = cfg["mesh"]
    mesh = mesh_cross_section(cs, m["h"], m["min_angle"], m["hole_segments"], m["grading"])
    if m["refine"]:
        mesh = refine_uniform(mesh, cs)
    return mesh


def _coupling_args(cfg: RunConfig):
    o = cfg["optical_mode"]
    return dict(weighting=o["overlap_weighting"], polarization_angle=o["polarization_angle"])


def run_fem(cfg: RunConfig, mesh: Optional[TriMesh] = None, f_max: Optional[float] = None) -> FiberStudy:
    """Mesh (unless given), solve and couple every FEM mode up to ``f_max``."""
    cs, om = fiber_from(cfg)
    f_max = cfg["solver"]["f_max"] if f_max is None else f_max
    s = cfg["spectrum"]
    with threadpool_limits(cfg["solver"]["threads"]):
        if mesh is None:
            mesh = build_mesh(cs, cfg)
        ops = assemble(mesh, cs.material)
        modes = solve_modes(ops, f_max=f_max, rigid_cut=cfg["solver"]["rigid_cut"],
                            temperature=s["temperature"], fiber_length=s["fiber_length"])
    groups = label_fem_modes(modes)
    cyl = match_cylinder(cs, modes, groups)
    labels = [(fam, n, c[1] if c is not None else -1) if fam in ("R", "TR") else (fam, n, m)
              for (fam, n, m), c in zip(groups, cyl)]
    args = _coupling_args(cfg)
    w = triangle_weights(mesh, om, args["weighting"])
    couplings = []
    for md, (fam, n, m) in zip(modes, labels):
        fld = index_modulation(md, cs.material)
        couplings.append(overlap(fld, om, weights=w, mode_id=md.index, family=fam, n=n, m=m,
                                 frequency=md.frequency, thermal_amplitude_sq=md.thermal_amplitude_sq,
                                 **args))
    meta = {"model": "fem", "nodes": mesh.n_nodes, "triangles": mesh.n_triangles,
            "threads": cfg["solver"]["threads"], "f_max": f_max}
    return FiberStudy(cs.name, cs, om, "fem", modes, labels, couplings, mesh, ops, meta)


def run_analytic(cfg: RunConfig, f_max: Optional[float] = None) -> FiberStudy:
    """Free-cylinder modes of the outer radius (holes ignored)."""
    cs, om = fiber_from(cfg)
    f_max = cfg["solver"]["f_max"] if f_max is None else f_max
    s = cfg["spectrum"]
    modes = [normalize_thermal(md, s["temperature"], s["fiber_length"])
             for md in cylinder_modes(cs.material, cs.outer_radius, f_max)]
    args = _coupling_args(cfg)
    couplings = []
    for i, md in enumerate(modes):
        fld = index_modulation(md, cs.material)
        couplings.append(overlap(fld, om, mode_id=i, family=md.family, n=md.n, m=md.m,
                                 frequency=md.frequency, thermal_amplitude_sq=md.thermal_amplitude_sq,
                                 **args))
    labels = [(md.family, md.n, md.m) for md in modes]
    meta = {"model": "analytic", "threads": cfg["solver"]["threads"], "f_max": f_max}
    return FiberStudy(cs.name, cs, om, "analytic", modes, labels, couplings, meta=meta)


_CACHE: "OrderedDict[tuple, FiberStudy]" = OrderedDict()
CACHE_SIZE = 4


def clear_cache() -> None:
    _CACHE.clear()


def run_study(cfg: RunConfig, mesh: Optional[TriMesh] = None, f_max: Optional[float] = None) -> FiberStudy:
    """FEM or analytic study as configured.

    Results for configurations without an explicit mesh are memoized per
    process (the computation is deterministic), so a CLI call and a library
    call with the same configuration share one solve.
    """
    if cfg["solver"]["model"] == "analytic":
        if cfg["fiber"]["kind"] != "standard":
            raise ValidationError("the analytic model only describes solid fibers", "model")
        return run_analytic(cfg, f_max)
    if mesh is not None:
        return run_fem(cfg, mesh, f_max)
    key = (cfg.to_text(), f_max)
    if key in _CACHE:
        _CACHE.move_to_end(key)
        return _CACHE[key]
    st = run_fem(cfg, None, f_max)
    _CACHE[key] = st
    while len(_CACHE) > CACHE_SIZE:
        _CACHE.popitem(last=False)
    return st


def compare_fibers(reference: RunConfig, candidate: RunConfig):
    """Studies, spectra and reduction summary of ``reference`` over ``candidate``.

    Both configurations must produce identical spectrum settings and bands.
    """
    sa, sb = spectrum_settings(reference), spectrum_settings(candidate)
    if sa.hash() != sb.hash():
        raise ValidationError("refusing to combine spectra with different settings hashes", "settings")
    band = band_of(reference)
    if band != band_of(candidate):
        raise ValidationError("the two configurations use different bands", "band")
    studies = [run_study(reference), run_study(candidate)]
    spectra = [studies[0].spectrum(sa), studies[1].spectrum(sb)]
    summary = compare_spectra(spectra[0], spectra[1], band)
    return studies, spectra, summary


def compare_spectra(reference: NoiseSpectrum, candidate: NoiseSpectrum, band) -> dict:
    """Band-integrated excess noise of ``reference`` over that of ``candidate``."""
    return {
        "reduction_phase": reduction_factor(reference, candidate, band, "phase"),
        "reduction_pol": reduction_factor(reference, candidate, band, "pol"),
        "band": [float(band[0]), float(band[1])],
        "settings_hash": reference.settings.hash(),
    }


def peak_annotations(study: FiberStudy, spec: NoiseSpectrum, channel: str, top: int = 8):
    """``(frequency, ratio, "(n,m)")`` for the strongest labelled R/TR lines."""
    key = "phase_msq" if channel == "phase" else "pol_msq"
    total = {}
    for c, (fam, n, m) in zip(study.couplings, study.labels):
        if fam in ("R", "TR") and m >= 0:
            msq, f = total.get((n, m), (0.0, c.frequency))
            total[(n, m)] = (msq + getattr(c, key), f)
    ranked = sorted(total.items(), key=lambda t: -t[1][0])
    vals = spec.channel(channel)
    out = []
    for (n, m), (msq, f) in ranked:
        if msq <= 0 or not spec.grid[0] <= f <= spec.grid[-1]:
            continue
        j = int(np.argmin(np.abs(spec.grid - f)))
        out.append((f, float(vals[j]), f"({n},{m})"))
        if len(out) >= top:
            break
    return out


def modal_density(study: FiberStudy, lo: float, hi: float) -> int:
    return sum(1 for md in study.modes if lo < md.frequency <= hi)


def radial_average_abs(values: np.ndarray, positions: np.ndarray, radius: float) -> float:
    """Mean of ``|values|`` over samples with ``|position| < radius`` (NaN skipped)."""
    sel = (np.abs(positions) < radius) & np.isfinite(values)
    if not sel.any():
        raise ValidationError("no samples inside the averaging radius", "radius")
    return float(np.mean(np.abs(values[sel])))


def fundamental_radial(study: FiberStudy):
    """Index of the lowest mode labelled ``(0, 0)`` in the R family."""
    for i, (fam, n, m) in enumerate(study.labels):
        if fam == "R" and m == 0:
            return i
    raise ValidationError("no radial mode found", "modes")


def _align(fem_f, ana_f, skip):
    """Order-preserving alignment minimizing sum |f_fem / f_ana - 1| (+ ``skip`` per gap)."""
    n, k = len(fem_f), len(ana_f)
    cost = np.full((n + 1, k + 1), np.inf)
    cost[0, :] = skip * np.arange(k + 1)
    cost[:, 0] = skip * np.arange(n + 1)
    move = np.zeros((n + 1, k + 1), dtype=int)
    for i in range(1, n + 1):
        for j in range(1, k + 1):
            opts = (cost[i - 1, j - 1] + abs(fem_f[i - 1] / ana_f[j - 1] - 1.0),
                    cost[i - 1, j] + skip, cost[i, j - 1] + skip)
            move[i, j] = int(np.argmin(opts))
            cost[i, j] = opts[move[i, j]]
    pairs, i, j = {}, n, k
    while i > 0 and j > 0:
        if move[i, j] == 0:
            pairs[i - 1] = j - 1
            i, j = i - 1, j - 1
        elif move[i, j] == 1:
            i -= 1
        else:
            j -= 1
    return pairs


def match_cylinder(cs: FiberCrossSection, modes, groups, skip: float = 0.06):
    """Free-cylinder ``(n, m)`` for FEM modes of angular order 0 and 2.

    ``groups`` are the :func:`label_fem_modes` labels (the split n = 2 pair is
    one group).  Groups of each order are aligned in frequency order with the
    R (TR) modes of a solid cylinder of the same outer radius; leaving a group
    or a cylinder mode unmatched costs ``skip`` (a relative detuning), so extra
    modes created by the microstructure stay unmatched (``None``).
    """
    out = [None] * len(modes)
    if not modes:
        return out
    f_top = max(md.frequency for md in modes)
    ref = cylinder_modes(cs.material, cs.outer_radius, f_top * (1 + skip))
    for order in (0, 2):
        members = {}
        for i, (md, lab) in enumerate(zip(modes, groups)):
            if md.angular_order == order:
                members.setdefault(lab[2], []).append(i)
        keys = sorted(members)
        fem_f = [float(np.mean([modes[i].frequency for i in members[g]])) for g in keys]
        ana = [md for md in ref if md.n == order]
        for gi, aj in _align(fem_f, [a.frequency for a in ana], skip).items():
            for i in members[keys[gi]]:
                out[i] = (order, ana[aj].m)
    return out


def cylinder_labels(study: FiberStudy):
    """``(n, m)`` of the matched cylinder mode per study mode, else ``None``."""
    return [(n, m) if fam in ("R", "TR") and m >= 0 else None for fam, n, m in study.labels]
