import os
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from conclab.montecarlo import ExperimentReport
from conclab.plots import emit_plots, scaling_chart, tail_chart

GOLDEN = Path(__file__).parent / "golden"


def _tail_report():
    t = np.linspace(0.0, 4.0, 5)
    surv = np.exp(-t)
    rows = [{"t": float(a), "survival": float(s), "ci_low": float(0.9 * s), "ci_high": float(min(1.0, 1.1 * s)),
             "rhs_hanson_wright": float(min(1.0, 2 * np.exp(-a / 2)))} for a, s in zip(t, surv)]
    return ExperimentReport("tail", {"experiment": "tail"}, 0, rows, {})


def _scaling_report():
    rows = [{"N": N, "delta": d, "median": 1.0 / (d * np.sqrt(N))}
            for d in (0.5, 1.0) for N in (100, 400, 1600)]
    return ExperimentReport("cov", {"experiment": "cov"}, 0, rows, {})


@pytest.mark.parametrize("report,name", [(_tail_report, "tail.svg"),
                                         (_scaling_report, "scaling_delta_0.5.svg")])
def test_golden(tmp_path, report, name):
    files = emit_plots(report(), tmp_path)
    assert name in files
    got = (tmp_path / name).read_text()
    golden = GOLDEN / name
    if os.environ.get("CONCLAB_REGEN_GOLDEN"):
        golden.write_text(got)
    assert got == golden.read_text()


def test_emit_plots_deterministic(tmp_path):
    a = emit_plots(_tail_report(), tmp_path / "a")
    b = emit_plots(_tail_report(), tmp_path / "b")
    assert a == b
    assert (tmp_path / "a" / a[0]).read_bytes() == (tmp_path / "b" / b[0]).read_bytes()


def test_empty_report_warns(tmp_path):
    rep = ExperimentReport("x", {}, 0, [], {})
    with pytest.warns(RuntimeWarning):
        assert emit_plots(rep, tmp_path) == []
    assert list(tmp_path.iterdir()) == []


def test_single_point_valid_svg():
    svg = tail_chart([1.0], [0.5], [0.4], [0.6], {"bound": [0.7]}, title="one")
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    svg = scaling_chart([10.0], [0.1], "one", "N", "err")
    assert ET.fromstring(svg).tag.endswith("svg")


def test_nonfinite_and_escaping():
    svg = tail_chart([0.0, 1.0, 2.0], [1.0, 0.0, 0.0], [0.9, 0.0, 0.0], [1.0, 0.1, 0.05],
                     {"a<b": [1.0, np.inf, 0.5]}, title="x & y")
    ET.fromstring(svg)
    assert "x &amp; y" in svg


def test_records_without_chart_columns(tmp_path):
    rep = ExperimentReport("x", {}, 0, [{"a": 1.0}], {})
    assert emit_plots(rep, tmp_path) == []
