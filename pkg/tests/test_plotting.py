import re
import xml.etree.ElementTree as ET

import pytest

from mammodg.errors import MalformedCurveFile
from mammodg.plotting import AXES_RECT, FIG_SIZE, froc_step_xy, plot_froc, plot_scatter
from mammodg.subgroup import ScatterRecord

SVG = "{http://www.w3.org/2000/svg}"


def _write_curve(path, rows):
    path.write_text("threshold,fppi,tpr\n" + "".join(f"{t},{f},{r}\n" for t, f, r in rows))
    return path


def _series(svg_path):
    root = ET.parse(svg_path).getroot()
    out = {}
    for g in root.iter(f"{SVG}g"):
        gid = g.get("id", "")
        if gid.startswith("froc-series-"):
            d = g.find(f"{SVG}path").get("d")
            nums = [float(v) for v in re.findall(r"-?\d+(?:\.\d+)?", d)]
            out[gid] = list(zip(nums[0::2], nums[1::2]))
    return out


def _y_svg(v):
    height = FIG_SIZE[1] * 72
    return height - (AXES_RECT[1] + AXES_RECT[3] * v) * height


def test_step_xy_holds_last_value():
    assert froc_step_xy([0, 0.5], [0.2, 0.4]) == ([0.0, 0.5, 1.0], [0.2, 0.4, 0.4])
    assert froc_step_xy([0, 1.0], [0.2, 0.4]) == ([0.0, 1.0], [0.2, 0.4])


def test_three_point_curve_coordinates(tmp_path):
    c = _write_curve(tmp_path / "c.csv", [("inf", 0, 0), (0.9, 0, 0.5), (0.5, 0.5, 0.75), (0.3, 1.0, 1.0)])
    plot_froc([c], tmp_path / "f.svg")
    series = _series(tmp_path / "f.svg")
    assert list(series) == ["froc-series-0"]
    ys = {round(y, 6) for _, y in series["froc-series-0"]}
    for v in (0.5, 0.75, 1.0):
        assert round(_y_svg(v), 6) in ys
    assert _y_svg(0.5) == pytest.approx(129.6)


def test_single_point_curve_one_series(tmp_path):
    c = _write_curve(tmp_path / "c.csv", [("inf", 0, 0)])
    plot_froc([c], tmp_path / "f.svg")
    assert len(_series(tmp_path / "f.svg")) == 1


def test_two_curves_deterministic(tmp_path):
    a = _write_curve(tmp_path / "a.csv", [("inf", 0, 0), (0.5, 0.25, 0.5)])
    b = _write_curve(tmp_path / "b.csv", [("inf", 0, 0), (0.7, 0.0, 0.8)])
    plot_froc([a, b], tmp_path / "1.svg", labels=["alpha", "beta"])
    plot_froc([a, b], tmp_path / "2.svg", labels=["alpha", "beta"])
    assert (tmp_path / "1.svg").read_bytes() == (tmp_path / "2.svg").read_bytes()
    text = (tmp_path / "1.svg").read_text()
    assert len(_series(tmp_path / "1.svg")) == 2
    assert "alpha" in text and "beta" in text
    assert "<dc:date>" not in text


def test_bad_curve_file(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("fppi,tpr\n0,0\n")
    with pytest.raises(MalformedCurveFile):
        plot_froc([bad], tmp_path / "x.svg")


def test_scatter_plot(tmp_path):
    recs = [ScatterRecord("a", 5.0, 4.0, True), ScatterRecord("b", 12.0, 9.0, False)]
    plot_scatter(recs, tmp_path / "s.svg", title="demo")
    plot_scatter(recs, tmp_path / "t.svg", title="demo")
    text = (tmp_path / "s.svg").read_text()
    assert 'id="scatter-detected"' in text and 'id="scatter-missed"' in text
    assert (tmp_path / "s.svg").read_bytes() == (tmp_path / "t.svg").read_bytes()
    plot_scatter(recs, tmp_path / "s.png")
    assert (tmp_path / "s.png").read_bytes()[:4] == b"\x89PNG"
