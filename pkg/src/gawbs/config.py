"""Run configuration: a small sectioned key/value format.

::

    [fiber]
    kind = pcf
    cladding_diameter = 127 um
    pitch = 1.6um

Lengths accept ``m``, ``mm``, ``um``, ``nm`` suffixes; frequencies accept
``Hz``, ``kHz``, ``MHz``, ``GHz``; bare numbers are SI.  Unknown sections or
keys are rejected with their line number.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError

_LENGTH = {"m": 1.0, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9}
_FREQ = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}
_POWER = {"w": 1.0, "mw": 1e-3, "uw": 1e-6}
_NUM = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-zµ%]*)\s*$")

# section -> key -> (kind, default)
SCHEMA = {
    "material": {
        "density": ("float", 2203.0),
        "v_longitudinal": ("float", 5996.0),
        "v_shear": ("float", 3740.0),
        "refractive_index": ("float", 1.45),
        "p11": ("float", 0.121),
        "p12": ("float", 0.270),
        "p44": ("float", None),
    },
    "fiber": {
        "kind": ("str", "standard"),
        "name": ("str", None),
        "cladding_diameter": ("length", 80e-6),
        "mfd": ("length", 4.5e-6),
        "pitch": ("length", 1.6e-6),
        "hole_diameter": ("length", 1.28e-6),
        "holey_region_diameter": ("length", 10e-6),
        "core_d1": ("length", 2.4e-6),
        "core_d2": ("length", 1.5e-6),
        "core_rotation": ("float", 0.0),
        "waist_factor": ("float", 1.0),
    },
    "optical_mode": {
        "wavelength": ("length", 1064e-9),
        "polarization_angle": ("float", None),
        "overlap_weighting": ("str", "intensity"),
    },
    "mesh": {
        "h": ("length", 2e-6),
        "min_angle": ("float", 25.0),
        "hole_segments": ("int", 32),
        "grading": ("float", 0.3),
        "refine": ("bool", False),
    },
    "solver": {
        "model": ("str", "fem"),
        "f_max": ("frequency", 400e6),
        "rigid_cut": ("frequency", 1e3),
        "threads": ("int", 1),
    },
    "spectrum": {
        "rbw": ("frequency", 1e6),
        "vbw": ("frequency", 30.0),
        "averages": ("int", 10),
        "optical_power": ("power", 0.9e-3),
        "pol_optical_power": ("power", 1.8e-3),
        "fiber_length": ("length", 8.0),
        "detection_efficiency": ("float", 0.86),
        "visibility": ("float", 0.70),
        "pol_extinction": ("float", 0.02),
        "temperature": ("float", 300.0),
        "q_factor": ("float", 100.0),
        "q_r": ("float", None),
        "q_tr": ("float", None),
        "rbw_filter": ("str", "gaussian"),
        "f_start": ("frequency", 5e6),
        "f_stop": ("frequency", 400e6),
        "band_lo": ("frequency", 10e6),
        "band_hi": ("frequency", 200e6),
    },
    "output": {
        "directory": ("str", None),
        "plots": ("bool", True),
    },
}


def parse_value(kind, text, key, lineno):
    text = text.strip()
    if kind == "str":
        return text
    if kind == "bool":
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValidationError(f"line {lineno}: {key} expects a boolean, got {text!r}", key)
    if kind == "int":
        try:
            return int(text)
        except ValueError:
            raise ValidationError(f"line {lineno}: {key} expects an integer, got {text!r}", key) from None
    m = _NUM.match(text)
    if not m:
        raise ValidationError(f"line {lineno}: {key} expects a number, got {text!r}", key)
    val, unit = float(m.group(1)), m.group(2)
    table = {"length": _LENGTH, "frequency": _FREQ, "power": _POWER}.get(kind)
    if unit:
        if table is None:
            raise ValidationError(f"line {lineno}: {key} takes no unit, got {unit!r}", key)
        factor = table.get(unit) if kind == "length" else table.get(unit.lower())
        if factor is None:
            raise ValidationError(f"line {lineno}: unknown unit {unit!r} for {key}", key)
        val *= factor
    if not math.isfinite(val):
        raise ValidationError(f"line {lineno}: {key} must be finite", key)
    return val


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls({s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})

    @classmethod
    def from_text(cls, text: str, base: "RunConfig" = None) -> "RunConfig":
        cfg = cls.defaults() if base is None else cls({s: dict(v) for s, v in base.values.items()})
        section = None
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip()
                if section not in SCHEMA:
                    raise ValidationError(f"line {lineno}: unknown section [{section}]", section)
                continue
            if "=" not in line:
                raise ValidationError(f"line {lineno}: expected 'key = value'", "config")
            if section is None:
                raise ValidationError(f"line {lineno}: key outside of a section", "config")
            key, val = (p.strip() for p in line.split("=", 1))
            if key not in SCHEMA[section]:
                raise ValidationError(f"line {lineno}: unknown key {key!r} in [{section}]", key)
            kind = SCHEMA[section][key][0]
            cfg.values[section][key] = parse_value(kind, val, key, lineno)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path, base: "RunConfig" = None) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}", "config") from None
        return cls.from_text(text, base)

    def validate(self):
        kind = self["fiber"]["kind"]
        if kind not in ("standard", "pcf"):
            raise ValidationError("fiber kind must be 'standard' or 'pcf'", "kind")
        if self["solver"]["model"] not in ("fem", "analytic"):
            raise ValidationError("solver model must be 'fem' or 'analytic'", "model")
        if self["optical_mode"]["overlap_weighting"] not in ("intensity", "amplitude"):
            raise ValidationError("overlap_weighting must be 'intensity' or 'amplitude'", "overlap_weighting")

    def __getitem__(self, section):
        return self.values[section]

    def with_overrides(self, section, **kw) -> "RunConfig":
        vals = {s: dict(v) for s, v in self.values.items()}
        for k, v in kw.items():
            if k not in SCHEMA[section]:
                raise ValidationError(f"unknown key {k!r} in [{section}]", k)
            vals[section][k] = v
        cfg = RunConfig(vals)
        cfg.validate()
        return cfg

    def to_text(self) -> str:
        """Canonical serialization (every key, fixed order, repr floats)."""
        out = []
        for s, keys in SCHEMA.items():
            out.append(f"[{s}]")
            for k in keys:
                v = self.values[s][k]
                if v is None:
                    continue
                if isinstance(v, bool):
                    v = "true" if v else "false"
                elif isinstance(v, float):
                    v = repr(v)
                out.append(f"{k} = {v}")
            out.append("")
        return "\n".join(out)

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:12]


def reference_standard_config() -> RunConfig:
    """Solid 80 um standard fiber with a 4.5 um mode field."""
    return RunConfig.defaults().with_overrides("fiber", kind="standard", cladding_diameter=80e-6, mfd=4.5e-6,
                                               name="standard")


def reference_pcf_config() -> RunConfig:
    """127 um hexagonal-lattice PCF with the 2.4 x 1.5 um elliptical core."""
    return RunConfig.defaults().with_overrides("fiber", kind="pcf", cladding_diameter=127e-6, name="pcf")
