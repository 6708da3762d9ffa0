import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gawbs.config import RunConfig, reference_pcf_config, reference_standard_config, parse_value
from gawbs.errors import ValidationError
from gawbs.plotting import HEADROOM, emit_plot, y_limits


@pytest.mark.parametrize("kind,text,value", [
    ("length", "127 um", 127e-6), ("length", "127µm", 127e-6), ("length", "0.5mm", 5e-4),
    ("length", "3e-6", 3e-6), ("frequency", "200 MHz", 2e8), ("frequency", "1.5ghz", 1.5e9),
    ("frequency", "30 Hz", 30.0), ("power", "0.9 mW", 9e-4), ("float", "0.27", 0.27),
])
def test_units(kind, text, value):
    assert parse_value(kind, text, "k", 1) == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize("kind,text,msg", [
    ("length", "3 parsec", "unknown unit"), ("float", "2 um", "takes no unit"), ("length", "abc", "expects a number"),
    ("int", "2.5", "integer"), ("bool", "maybe", "boolean"), ("float", "inf", "expects a number"),
])
def test_bad_values(kind, text, msg):
    with pytest.raises(ValidationError, match=f"line 7: .*{msg}"):
        parse_value(kind, text, "k", 7)


def test_unknown_key_reports_line():
    with pytest.raises(ValidationError, match=r"line 3: unknown key 'bogus' in \[fiber\]"):
        RunConfig.from_text("[fiber]\nkind = pcf\nbogus = 3\n")
    with pytest.raises(ValidationError, match=r"line 1: unknown section \[optics\]"):
        RunConfig.from_text("[optics]\n")
    with pytest.raises(ValidationError, match="line 1: key outside"):
        RunConfig.from_text("h = 2\n")


def test_enum_validation():
    with pytest.raises(ValidationError, match="kind"):
        RunConfig.from_text("[fiber]\nkind = holey\n")
    with pytest.raises(ValidationError, match="model"):
        RunConfig.from_text("[solver]\nmodel = magic\n")


def test_canonical_text_roundtrip():
    for cfg in (reference_standard_config(), reference_pcf_config(),
                RunConfig.from_text("[mesh]\nh = 3 um\nrefine = yes\n[spectrum]\nq_factor = 80\n")):
        again = RunConfig.from_text(cfg.to_text())
        assert again.values == cfg.values
        assert again.hash() == cfg.hash()


def test_comments_and_whitespace_do_not_change_hash():
    a = RunConfig.from_text("[mesh]\nh = 3 um\n")
    b = RunConfig.from_text("# note\n\n[mesh]   \n  h=3um   # inline\n")
    assert a.hash() == b.hash()


def test_overrides():
    cfg = reference_standard_config().with_overrides("solver", f_max=1e8)
    assert cfg["solver"]["f_max"] == 1e8
    assert reference_standard_config()["solver"]["f_max"] != 1e8
    with pytest.raises(ValidationError):
        cfg.with_overrides("solver", nope=1)


def test_reference_presets():
    assert reference_standard_config()["fiber"]["cladding_diameter"] == 80e-6
    assert reference_pcf_config()["fiber"]["cladding_diameter"] == 127e-6
    assert reference_pcf_config()["fiber"]["kind"] == "pcf"


# -- plotting -----------------------------------------------------------------------------

def test_emit_plot_is_valid_svg():
    g = np.linspace(0, 1, 50)
    svg = emit_plot([("a", g, g**2), ("b", g, 1 - g)], {"title": "t", "labels": [(0.5, 0.25, "(0,1)")]})
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")


def test_emit_plot_deterministic():
    g = np.linspace(0, 1, 50)
    assert emit_plot([("a", g, g)]) == emit_plot([("a", g, g)])


def test_emit_plot_errors():
    with pytest.raises(ValidationError, match="empty"):
        emit_plot([])
    v = np.ones(10)
    v[[2, 5]] = np.nan
    with pytest.raises(ValidationError, match=r"indices \[2, 5\]"):
        emit_plot([("x", np.arange(10.0), v)])
    with pytest.raises(ValidationError):
        emit_plot([("x", np.arange(10.0), np.ones(9))])


@given(st.floats(-1e6, 1e6, allow_subnormal=False))
def test_flat_series_padding(c):
    lo, hi = y_limits([np.full(20, c)])
    span = abs(c) if c != 0 else 1.0
    assert c - lo >= HEADROOM * span * (1 - 1e-12)
    assert hi - c >= HEADROOM * span * (1 - 1e-12)


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30))
def test_padding_at_least_five_percent(vals):
    v = np.array(vals)
    lo, hi = y_limits([v])
    span = v.max() - v.min()
    if span > 0:
        assert v.min() - lo >= 0.05 * span * (1 - 1e-9)
        assert hi - v.max() >= 0.05 * span * (1 - 1e-9)
