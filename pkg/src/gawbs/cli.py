"""Command-line entry point.

Every run writes into ``<out>/<command>-<hash>/`` where the hash covers the
command, the effective configuration and any input files.  The directory
holds the artifacts, the effective configuration (``config*.ini``) and a
``run.json`` manifest.  Exit status: 0 success, 1 invalid input, 2 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import hashlib
import json
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import detect_and_assign, read_trace, to_ratio
from .config import RunConfig, reference_pcf_config, reference_standard_config, parse_value
from .cylinder import cylinder_modes
from .errors import GawbsError, MeshError, MeshParseError, NumericalError, ValidationError
from .mesh import read_mesh, write_mesh
from .photoelastic import cross_section_profile, index_modulation
from .plotting import emit_field, emit_plot
from .study import (build_mesh, compare_fibers, fiber_from, fundamental_radial, peak_annotations,
                    radial_average_abs, run_analytic, run_fem, run_study, spectrum_settings)

OUTPUT_ENV = "GAWBS_OUTPUT_DIR"
FIELD_CHOICES = ("coupled", "all", "none")


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


class Run:
    """Artifact sink for one command invocation."""

    def __init__(self, command: str, configs: dict, inputs=(), out=None):
        h = hashlib.sha256(command.encode())
        for name in sorted(configs):
            h.update(name.encode())
            h.update(configs[name].to_text().encode())
        for path in inputs:
            try:
                h.update(Path(path).read_bytes())
            except OSError as exc:
                raise ValidationError(f"cannot read input {path}: {exc}", "input") from None
        self.command = command
        self.hash = h.hexdigest()[:12]
        from_cfg = next((c["output"]["directory"] for c in configs.values() if c["output"]["directory"]), None)
        base = Path(out or from_cfg or os.environ.get(OUTPUT_ENV) or "gawbs-out")
        self.dir = base / f"{command}-{self.hash}"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.artifacts = []
        self.info = {}
        for name, cfg in sorted(configs.items()):
            fname = "config.ini" if name == "" else f"config-{name}.ini"
            self._write(fname, f"# config_hash={self.hash}\n" + cfg.to_text())
        self.threads = max(int(cfg["solver"]["threads"]) for cfg in configs.values()) if configs else 1

    def _write(self, name, text):
        (self.dir / name).write_text(text, encoding="utf-8")
        self.artifacts.append(name)
        return self.dir / name

    def csv(self, name, header, rows):
        buf = io.StringIO()
        buf.write(f"# config_hash={self.hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows([_fmt(v) for v in row] for row in rows)
        return self._write(name, buf.getvalue())

    def json(self, name, obj):
        obj = dict(obj, config_hash=self.hash)
        return self._write(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def text(self, name, text):
        return self._write(name, text)

    def finish(self):
        manifest = {"command": self.command, "config_hash": self.hash, "version": __version__,
                    "threads": self.threads, "artifacts": sorted(self.artifacts), **self.info}
        (self.dir / "run.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                           encoding="utf-8")
        return self.dir


def _load(path, base=None) -> RunConfig:
    return RunConfig.from_file(path, base) if path else (base or RunConfig.defaults())


def _config(args) -> RunConfig:
    cfg = _load(getattr(args, "config", None))
    over = {
        "mesh": {"h": getattr(args, "h", None), "min_angle": getattr(args, "min_angle", None)},
        "solver": {"f_max": getattr(args, "f_max", None), "threads": getattr(args, "threads", None)},
    }
    for sec, kv in over.items():
        kv = {k: v for k, v in kv.items() if v is not None}
        if kv:
            cfg = cfg.with_overrides(sec, **kv)
    return cfg


def _positive(kind):
    def parse(text):
        try:
            v = parse_value(kind, text, "argument", 0)
        except ValidationError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
        if not v > 0:
            raise argparse.ArgumentTypeError("must be > 0")
        return v
    return parse


# -- subcommands ---------------------------------------------------------------------------


def cmd_modes(args):
    cfg = _config(args)
    cs, _ = fiber_from(cfg)
    run = Run("modes", {"": cfg}, out=args.out)
    modes = cylinder_modes(cs.material, cs.outer_radius, cfg["solver"]["f_max"])
    rows = [(m.family, m.n, m.m, m.frequency, m.y) for m in modes]
    header = ("family", "n", "m", "frequency_Hz", "y_root")
    run.csv("modes.csv", header, rows)
    if args.format == "text":
        lines = [f"{'family':<7}{'n':>3}{'m':>4}{'frequency_Hz':>22}{'y_root':>22}"]
        lines += [f"{r[0]:<7}{r[1]:>3}{r[2]:>4}{r[3]:>22.10e}{r[4]:>22.15f}" for r in rows]
        run.text("modes.txt", "\n".join(lines) + "\n")
        print("\n".join(lines))
    return run


def cmd_mesh(args):
    cfg = _config(args)
    cs, _ = fiber_from(cfg)
    run = Run("mesh", {"": cfg}, out=args.out)
    mesh = build_mesh(cs, cfg)
    write_mesh(mesh, run.dir / f"mesh-{run.hash}.gawbsmesh")
    run.artifacts.append(f"mesh-{run.hash}.gawbsmesh")
    ang = np.degrees(mesh.min_angles())
    run.info.update(nodes=mesh.n_nodes, triangles=mesh.n_triangles, min_angle_deg=float(ang.min()),
                    area=float(np.abs(mesh.signed_areas()).sum()), glass_area=cs.glass_area)
    return run


def _mesh_arg(args):
    if args.mesh:
        return read_mesh(args.mesh), [args.mesh]
    return None, []


def cmd_fem_modes(args):
    cfg = _config(args)
    mesh, inputs = _mesh_arg(args)
    run = Run("fem-modes", {"": cfg}, inputs, out=args.out)
    st = run_fem(cfg, mesh)
    rows = [(md.index, md.frequency, md.angular_order, fam, n, m)
            for md, (fam, n, m) in zip(st.modes, st.labels)]
    run.csv("fem-modes.csv", ("index", "frequency_Hz", "angular_order", "family", "n", "m"), rows)
    for md in st.modes:
        if args.fields == "none" or (args.fields == "coupled" and md.angular_order not in (0, 2)):
            continue
        s = md.strain
        rows = zip(range(len(s)), s[:, 0], s[:, 1], s[:, 2], md.energy_density, md.divergence)
        run.csv(f"field-{md.index:04d}.csv",
                ("triangle_index", "Sxx", "Syy", "Sxy", "energy_density", "divergence"), rows)
    if cfg["output"]["plots"] and st.modes:
        md = st.modes[fundamental_radial(st)] if any(f == "R" for f, _, _ in st.labels) else st.modes[0]
        run.text("energy-density.svg", emit_field(st.mesh, md.energy_density,
                                                  f"{md.frequency / 1e6:.2f} MHz", "energy density"))
    run.info.update(modes=len(st.modes), nodes=st.mesh.n_nodes, triangles=st.mesh.n_triangles)
    return run


def _coupling_rows(st):
    return [(c.mode_id, c.family, c.n, c.m, c.frequency, c.phase_coupling, c.pol_coupling, c.phase_msq,
             c.pol_msq) for c in st.couplings]


COUPLING_HEADER = ("mode_id", "family", "n", "m", "frequency_Hz", "phase_coupling", "pol_coupling",
                   "phase_msq", "pol_msq")


def cmd_overlap(args):
    cfg = _config(args)
    mesh, inputs = _mesh_arg(args)
    run = Run("overlap", {"": cfg}, inputs, out=args.out)
    st = run_study(cfg, mesh=mesh) if cfg["solver"]["model"] == "fem" else run_study(cfg)
    run.csv("overlap.csv", COUPLING_HEADER, _coupling_rows(st))
    return run


def _spectrum_configs(args, defaults):
    settings = _load(args.settings) if args.settings else None
    geos = args.geometry or []
    cfgs = [_load(g, settings) for g in geos] if geos else [d(settings) for d in defaults]
    if args.band:
        cfgs = [c.with_overrides("spectrum", band_lo=args.band[0], band_hi=args.band[1]) for c in cfgs]
    if args.threads:
        cfgs = [c.with_overrides("solver", threads=args.threads) for c in cfgs]
    return cfgs


def _default_std(settings):
    return reference_standard_config() if settings is None else _merge_fiber(settings, reference_standard_config())


def _default_pcf(settings):
    return reference_pcf_config() if settings is None else _merge_fiber(settings, reference_pcf_config())


def _merge_fiber(settings: RunConfig, fiber: RunConfig) -> RunConfig:
    vals = {s: dict(v) for s, v in settings.values.items()}
    vals["fiber"] = dict(fiber["fiber"])
    return RunConfig(vals)


def _spectra_run(command, args, defaults, require_pair):
    cfgs = _spectrum_configs(args, defaults)
    if require_pair and len(cfgs) != 2:
        raise ValidationError("compare needs exactly two geometries", "geometry")
    if len(cfgs) > 2:
        raise ValidationError("at most two geometries", "geometry")
    names = []
    for i, c in enumerate(cfgs):
        nm = c["fiber"]["name"] or f"fiber{i}"
        names.append(nm if nm not in names else f"{nm}{i}")
    run = Run(command, dict(zip(names, cfgs)), out=args.out)
    if len(cfgs) == 2:
        studies, spectra, summary = compare_fibers(*cfgs)
        summary.update(reference=names[0], candidate=names[1],
                       modes={nm: len(st.modes) for nm, st in zip(names, studies)})
    else:
        studies = [run_study(cfgs[0])]
        spectra = [studies[0].spectrum(spectrum_settings(cfgs[0]))]
        summary = None
    for nm, st, sp in zip(names, studies, spectra):
        run.csv(f"spectrum-{nm}.csv", ("freq_Hz", "phase_ratio", "pol_ratio"),
                zip(sp.grid, sp.phase_ratio, sp.pol_ratio))
        run.csv(f"overlap-{nm}.csv", COUPLING_HEADER, _coupling_rows(st))
    if summary is not None:
        run.json("summary.json", summary)
        run.info["summary"] = summary
        print(json.dumps({k: summary[k] for k in ("reduction_phase", "reduction_pol", "band")}))
    if cfgs[0]["output"]["plots"]:
        for ch, ylabel in (("phase", "V-/V_SN"), ("pol", "V-/V_SN (polarization)")):
            series = [(nm, sp.grid, sp.channel(ch)) for nm, sp in zip(names, spectra)]
            labels = peak_annotations(studies[0], spectra[0], ch)
            run.text(f"spectrum-{ch}.svg", emit_plot(series, {
                "xlabel": "frequency (MHz)", "ylabel": ylabel, "xscale": 1e-6, "labels": labels,
                "title": f"{ch} noise"}))
    return run


def cmd_spectrum(args):
    return _spectra_run("spectrum", args, (_default_std,), False)


def cmd_compare(args):
    return _spectra_run("compare", args, (_default_std, _default_pcf), True)


def cmd_assign(args):
    cfg = _config(args)
    inputs = [args.signal, args.shot] + ([args.electronic] if args.electronic else [])
    run = Run("assign", {"": cfg}, inputs, out=args.out)
    sig = read_trace(args.signal, "signal")
    shot = read_trace(args.shot, "shot_noise")
    elec = read_trace(args.electronic, "electronic") if args.electronic else None
    ratio = to_ratio(sig, shot, elec)
    if cfg["solver"]["model"] == "analytic" or cfg["fiber"]["kind"] == "standard":
        st = run_analytic(cfg)
    else:
        st = run_fem(cfg)
    predicted = [c for c in st.couplings if c.family in ("R", "TR") and c.m >= 0]
    res = detect_and_assign(ratio, predicted, args.tolerance, args.prominence)
    rows = [(a.peak_frequency, a.peak_ratio, a.label, a.mode.family if a.mode else "",
             a.detuning if a.detuning is not None else "", "yes" if a.matched else "no") for a in res]
    header = ("peak_Hz", "ratio", "label", "family", "detuning_Hz", "matched")
    run.csv("assign.csv", header, rows)
    md = ["| peak (MHz) | ratio | label | family | detuning (kHz) | matched |", "|---|---|---|---|---|---|"]
    for a in res:
        det = f"{a.detuning / 1e3:.1f}" if a.detuning is not None else ""
        md.append(f"| {a.peak_frequency / 1e6:.3f} | {a.peak_ratio:.4f} | {a.label} | "
                  f"{a.mode.family if a.mode else ''} | {det} | {'yes' if a.matched else 'no'} |")
    run.text("assign.md", "\n".join(md) + "\n")
    print("\n".join(md))
    return run


def cmd_profile(args):
    cfg = _config(args)
    mesh, inputs = _mesh_arg(args)
    run = Run("profile", {"": cfg}, inputs, out=args.out)
    if cfg["solver"]["model"] == "analytic":
        st = run_study(cfg)
    else:
        st = run_study(cfg, mesh=mesh)
    i = fundamental_radial(st) if args.mode is None else args.mode
    if not 0 <= i < len(st.modes):
        raise ValidationError(f"mode index {i} out of range (0..{len(st.modes) - 1})", "mode")
    md = st.modes[i]
    fld = index_modulation(md, st.cross_section.material)
    c2 = md.thermal_amplitude_sq or 1.0
    fld = fld.scaled(c2**0.5)
    pos, iso = cross_section_profile(fld, args.axis, args.points)
    run.csv("profile.csv", ("position_m", "dn_iso_rms"), zip(pos, iso))
    core_avg = radial_average_abs(iso, pos, args.core_radius)
    run.info.update(mode_index=i, frequency_Hz=md.frequency, core_average_abs_dn=core_avg)
    if cfg["output"]["plots"]:
        ok = np.isfinite(iso)
        run.text("profile.svg", emit_plot([(st.name, pos[ok] * 1e6, iso[ok])], {
            "xlabel": f"{args.axis} (um)", "ylabel": "rms dn", "title": f"{md.frequency / 1e6:.2f} MHz"}))
    return run


# -- argument parsing ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gawbs", description="Thermal GAWBS noise of solid and PCF fibers.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", "--geometry", dest="config", help="run configuration file")
        sp.add_argument("--out", help=f"output directory (default: [output] directory, ${OUTPUT_ENV}, ./gawbs-out)")
        sp.add_argument("--threads", type=int, help="BLAS/LAPACK thread count")

    sp = sub.add_parser("modes", help="analytic R and TR cylinder modes")
    common(sp)
    sp.add_argument("--f-max", type=_positive("frequency"))
    sp.add_argument("--format", choices=("csv", "text"), default="csv")
    sp.set_defaults(func=cmd_modes)

    sp = sub.add_parser("mesh", help="mesh the fiber cross-section")
    common(sp)
    sp.add_argument("--h", type=_positive("length"), help="target element size")
    sp.add_argument("--min-angle", type=float)
    sp.set_defaults(func=cmd_mesh)

    sp = sub.add_parser("fem-modes", help="plane-strain FEM eigenmodes")
    common(sp)
    sp.add_argument("--mesh", help="mesh file (default: mesh the configured fiber)")
    sp.add_argument("--f-max", type=_positive("frequency"))
    sp.add_argument("--h", type=_positive("length"))
    sp.add_argument("--fields", choices=FIELD_CHOICES, default="coupled",
                    help="per-mode field files: angular order 0/2 only, all, or none")
    sp.set_defaults(func=cmd_fem_modes)

    sp = sub.add_parser("overlap", help="per-mode phase and polarization couplings")
    common(sp)
    sp.add_argument("--mesh")
    sp.add_argument("--f-max", type=_positive("frequency"))
    sp.add_argument("--h", type=_positive("length"))
    sp.set_defaults(func=cmd_overlap)

    for name, func, doc in (("spectrum", cmd_spectrum, "noise spectra of one or two fibers"),
                            ("compare", cmd_compare, "standard fiber versus PCF study")):
        sp = sub.add_parser(name, help=doc)
        sp.add_argument("--geometry", action="append", help="fiber configuration (repeat for two)")
        sp.add_argument("--settings", help="configuration applied under each geometry")
        sp.add_argument("--band", nargs=2, type=_positive("frequency"), metavar=("LO", "HI"))
        sp.add_argument("--out")
        sp.add_argument("--threads", type=int)
        sp.set_defaults(func=func)

    sp = sub.add_parser("assign", help="detect and label peaks in measured traces")
    common(sp)
    sp.add_argument("--signal", required=True)
    sp.add_argument("--shot", required=True)
    sp.add_argument("--electronic")
    sp.add_argument("--f-max", type=_positive("frequency"))
    sp.add_argument("--tolerance", type=_positive("frequency"))
    sp.add_argument("--prominence", type=float, default=3.0)
    sp.set_defaults(func=cmd_assign)

    sp = sub.add_parser("profile", help="index-modulation cut through the fiber center")
    common(sp)
    sp.add_argument("--mesh")
    sp.add_argument("--f-max", type=_positive("frequency"))
    sp.add_argument("--h", type=_positive("length"))
    sp.add_argument("--mode", type=int, help="mode index (default: fundamental radial)")
    sp.add_argument("--axis", choices=("x", "y"), default="x")
    sp.add_argument("--points", type=int, default=1024)
    sp.add_argument("--core-radius", type=_positive("length"), default=2e-6)
    sp.set_defaults(func=cmd_profile)
    return p


def _origin(exc) -> str:
    """Module of the innermost package frame that raised ``exc``."""
    mod = "gawbs"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        name = frame.f_globals.get("__name__", "")
        if name.startswith("gawbs."):
            mod = name
    return mod


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "config", None) and not Path(args.config).is_file():
            raise ValidationError(f"config file not found: {args.config}", "config")
        run = args.func(args)
        out = run.finish()
    except (ValidationError, MeshParseError) as exc:
        print(f"error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, MeshError) as exc:
        print(f"numerical failure [{_origin(exc)}]: {exc}", file=sys.stderr)
        return 2
    except GawbsError as exc:
        print(f"error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
