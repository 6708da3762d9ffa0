"""SVG figures rendered with matplotlib (Agg, no timestamps)."""

from __future__ import annotations

import io
import math
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import ValidationError  # noqa: E402

HEADROOM = 0.05
_LINESTYLES = ("-", ":", "--", "-.")


def y_limits(values: Sequence[np.ndarray], log: bool = False):
    """Axis limits leaving at least ``HEADROOM`` of the data span on both sides.

    For a flat series the span is taken as the magnitude of the value (or 1).
    Log axes pad in decades.
    """
    v = np.concatenate([np.ravel(a) for a in values])
    if log:
        v = v[v > 0]
        if v.size == 0:
            raise ValidationError("log axis needs positive values", "values")
        lo, hi = math.log10(v.min()), math.log10(v.max())
        span = hi - lo if hi > lo else 1.0
        return 10 ** (lo - HEADROOM * span), 10 ** (hi + HEADROOM * span)
    lo, hi = float(v.min()), float(v.max())
    span = hi - lo
    if span <= 0:
        span = abs(hi) if hi != 0 else 1.0
    return lo - HEADROOM * span, hi + HEADROOM * span


def _check_series(series):
    if not series:
        raise ValidationError("nothing to plot: empty series list", "series")
    out = []
    for k, s in enumerate(series):
        label, grid, values = s
        g = np.asarray(grid, dtype=float)
        v = np.asarray(values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape or g.size == 0:
            raise ValidationError(f"series {k} ({label!r}): grid and values must be equal-length 1-D", "series")
        bad = np.flatnonzero(~np.isfinite(v))
        if bad.size:
            raise ValidationError(f"series {k} ({label!r}) has non-finite values at indices "
                                  f"{bad.tolist()[:20]}", "values")
        out.append((str(label), g, v))
    return out


def _svg(fig) -> str:
    buf = io.StringIO()
    with matplotlib.rc_context({"svg.hashsalt": "gawbs", "svg.fonttype": "path"}):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def emit_plot(series, style: Optional[dict] = None) -> str:
    """Overlay ``(label, grid, values)`` series and return an SVG document.

    ``style`` keys: ``title``, ``xlabel``, ``ylabel``, ``yscale`` (``linear`` or
    ``log``), ``xscale`` (multiplies the grid, e.g. 1e-6 for MHz), ``labels``
    (list of ``(x, y, text)`` peak annotations in grid units).
    """
    style = dict(style or {})
    data = _check_series(series)
    log = style.get("yscale", "linear") == "log"
    xs = float(style.get("xscale", 1.0))
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for k, (label, g, v) in enumerate(data):
        ax.plot(g * xs, v, _LINESTYLES[k % len(_LINESTYLES)], color="k" if k == 0 else f"C{k}",
                lw=1.0, label=label)
    if log:
        ax.set_yscale("log")
    ax.set_ylim(*y_limits([v for _, _, v in data], log))
    for x, y, text in style.get("labels", ()):
        ax.annotate(text, (x * xs, y), textcoords="offset points", xytext=(0, 4), ha="center", fontsize=7)
    ax.set_xlabel(style.get("xlabel", ""))
    ax.set_ylabel(style.get("ylabel", ""))
    if style.get("title"):
        ax.set_title(style["title"])
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    return _svg(fig)


def emit_field(mesh, values, title: str = "", label: str = "") -> str:
    """Per-triangle scalar field (e.g. strain energy density) as a flat-shaded SVG."""
    v = np.asarray(values, dtype=float)
    if v.shape != (mesh.n_triangles,):
        raise ValidationError("need one value per triangle", "values")
    bad = np.flatnonzero(~np.isfinite(v))
    if bad.size:
        raise ValidationError(f"non-finite values at triangles {bad.tolist()[:20]}", "values")
    fig, ax = plt.subplots(figsize=(5.0, 4.6))
    tpc = ax.tripcolor(mesh.nodes[:, 0] * 1e6, mesh.nodes[:, 1] * 1e6, mesh.triangles, facecolors=v,
                       cmap="viridis", rasterized=False)
    fig.colorbar(tpc, ax=ax, label=label)
    ax.set_aspect("equal")
    ax.set_xlabel("x (um)")
    ax.set_ylabel("y (um)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _svg(fig)
