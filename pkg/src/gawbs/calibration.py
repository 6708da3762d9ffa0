"""Reduction of spectrum-analyzer traces to shot-noise-referenced ratios.

A trace file is CSV with one header comment::

    # rbw_hz=1e6 vbw_hz=30 averages=10 kind=signal
    freq_hz,power_dbm
    1.0e7,-78.2
    ...
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.signal import find_peaks

from .errors import CalibrationError, ValidationError

KINDS = ("signal", "shot_noise", "electronic")


@dataclass(frozen=True, eq=False)
class Trace:
    grid: np.ndarray
    power: np.ndarray  # dBm per bin
    kind: str = "signal"
    rbw: float = 1e6
    vbw: float = 30.0
    averages: int = 10

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        p = np.asarray(self.power, dtype=float)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "power", p)
        if g.shape != p.shape or g.ndim != 1:
            raise ValidationError("grid and power must be 1-D arrays of equal length", "trace")
        if np.any(np.diff(g) <= 0):
            raise ValidationError("frequency grid must be strictly increasing", "grid")
        if not np.all(np.isfinite(p)):
            raise ValidationError("trace powers must be finite", "power")
        if self.kind not in KINDS:
            raise ValidationError(f"kind must be one of {KINDS}", "kind")

    @property
    def linear_mw(self):
        return 10.0 ** (self.power / 10.0)

    @property
    def effective_averages(self) -> float:
        """Independent samples per bin: sweep averages times video smoothing."""
        return self.averages * max(1.0, self.rbw / self.vbw)


@dataclass(frozen=True, eq=False)
class RatioTrace:
    grid: np.ndarray
    ratio: np.ndarray
    sigma: np.ndarray  # one-standard-error per bin
    rbw: float


def read_trace(path, kind: Optional[str] = None) -> Trace:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    meta = {"rbw_hz": 1e6, "vbw_hz": 30.0, "averages": 10, "kind": kind or "signal"}
    freqs, powers = [], []
    for lineno, line in enumerate(lines, 1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            for tok in s[1:].split():
                if "=" not in tok:
                    continue
                k, v = tok.split("=", 1)
                if k not in meta:
                    raise ValidationError(f"line {lineno}: unknown header key {k!r}", k)
                if k == "kind":
                    if kind is None:
                        meta[k] = v
                else:
                    meta[k] = float(v)
            continue
        if s.lower().startswith("freq"):
            continue
        parts = s.split(",")
        try:
            f, p = float(parts[0]), float(parts[1])
        except (ValueError, IndexError):
            raise ValidationError(f"line {lineno}: expected 'freq_hz,power_dbm'", "trace") from None
        freqs.append(f)
        powers.append(p)
    return Trace(np.array(freqs), np.array(powers), meta["kind"], meta["rbw_hz"], meta["vbw_hz"],
                 int(meta["averages"]))


def write_trace(trace: Trace, path) -> None:
    rows = [f"# rbw_hz={trace.rbw:.17g} vbw_hz={trace.vbw:.17g} averages={trace.averages} kind={trace.kind}",
            "freq_hz,power_dbm"]
    rows += [f"{f:.17g},{p:.17g}" for f, p in zip(trace.grid.tolist(), trace.power.tolist())]
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def encode_dbm(grid, ratio, shot_level_dbm: float = -80.0, rbw=1e6, vbw=30.0, averages=10):
    """Signal and shot-noise traces (dBm) that reproduce ``ratio`` exactly."""
    grid = np.asarray(grid, dtype=float)
    shot = np.full(grid.shape, float(shot_level_dbm))
    sig = shot + 10.0 * np.log10(np.asarray(ratio, dtype=float))
    return (Trace(grid, sig, "signal", rbw, vbw, averages),
            Trace(grid, shot, "shot_noise", rbw, vbw, averages))


def to_ratio(signal: Trace, shot: Trace, electronic: Optional[Trace] = None) -> RatioTrace:
    """Per-bin ``V-/V_SN`` with the electronic floor optionally removed."""
    traces = [signal, shot] + ([electronic] if electronic is not None else [])
    for t in traces[1:]:
        if not np.array_equal(t.grid, signal.grid):
            raise CalibrationError("traces have different frequency grids", "grid")
        if t.rbw != signal.rbw:
            raise CalibrationError("traces have different resolution bandwidths", "rbw")
    s = signal.linear_mw
    n = shot.linear_mw
    if electronic is not None:
        e = electronic.linear_mw
        bad = np.flatnonzero(n <= e)
        if bad.size:
            raise CalibrationError(f"shot noise not above the electronic floor at bins {bad.tolist()[:20]}",
                                   "electronic")
        s = s - e
        n = n - e
    ratio = s / n
    rel = math.sqrt(1.0 / signal.effective_averages + 1.0 / shot.effective_averages)
    return RatioTrace(signal.grid, ratio, np.abs(ratio) * rel, signal.rbw)


def invert_eq1(ratio):
    """Phase-quadrature variance from the difference-to-shot-noise ratio."""
    r = np.asarray(ratio, dtype=float)
    if np.any(r < 0.5):
        raise CalibrationError("ratio below the invertible range (< 0.5); check calibration", "ratio")
    v = 2.0 * r - 1.0
    return float(v) if v.ndim == 0 else v


@dataclass(frozen=True)
class PredictedMode:
    family: str
    n: int
    m: int
    frequency: float


@dataclass(frozen=True)
class PeakAssignment:
    peak_frequency: float
    peak_ratio: float
    mode: Optional[PredictedMode]
    detuning: Optional[float]
    matched: bool

    @property
    def label(self) -> str:
        """Inset-number label ``(n,m)``; empty for unmatched peaks."""
        return f"({self.mode.n},{self.mode.m})" if self.mode is not None else ""


def detect_peaks(trace: RatioTrace, prominence: float = 3.0):
    """Indices of local maxima exceeding the median by ``prominence`` standard errors."""
    r = trace.ratio
    med = float(np.median(r))
    idx, props = find_peaks(r, prominence=prominence * trace.sigma.min() if r.size else 0.0)
    keep = r[idx] - med > prominence * trace.sigma[idx]
    return idx[keep]


def _as_predicted(m) -> PredictedMode:
    if isinstance(m, PredictedMode):
        return m
    return PredictedMode(str(getattr(m, "family", "")), getattr(m, "n", -1), getattr(m, "m", -1),
                         float(m.frequency))


def detect_and_assign(trace: RatioTrace, predicted: Sequence, tolerance: Optional[float] = None,
                      prominence: float = 3.0):
    """Detect peaks and match them greedily to the nearest predicted modes.

    Each predicted mode is used at most once; peaks further than ``tolerance``
    (default: the RBW) from every free mode are reported unmatched.
    """
    if not predicted:
        raise ValidationError("empty prediction list", "predicted")
    tol = trace.rbw if tolerance is None else tolerance
    if not tol > 0:
        raise ValidationError("tolerance must be > 0", "tolerance")
    preds = [_as_predicted(m) for m in predicted]
    peaks = detect_peaks(trace, prominence)
    pf = trace.grid[peaks]
    mf = np.array([m.frequency for m in preds])
    pairs = []
    for i, f in enumerate(pf):
        d = np.abs(mf - f)
        for j in np.flatnonzero(d <= tol):
            pairs.append((d[j], i, int(j)))
    pairs.sort()
    used_p, used_m, match = set(), set(), {}
    for d, i, j in pairs:
        if i in used_p or j in used_m:
            continue
        used_p.add(i)
        used_m.add(j)
        match[i] = j
    out = []
    for i, f in enumerate(pf):
        if i in match:
            m = preds[match[i]]
            out.append(PeakAssignment(float(f), float(trace.ratio[peaks[i]]), m, float(f - m.frequency), True))
        else:
            out.append(PeakAssignment(float(f), float(trace.ratio[peaks[i]]), None, None, False))
    return out
