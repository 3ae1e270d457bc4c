"""Tests for the SVG rate-distortion plot."""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET

from rave.plotting import rd_plot_svg

SVG_NS = "{http://www.w3.org/2000/svg}"


def _polylines(svg: str) -> dict[str, list[tuple[float, float]]]:
    root = ET.fromstring(svg)
    lines = {}
    for node in root.iter(f"{SVG_NS}polyline"):
        points = [
            tuple(float(v) for v in pair.split(","))
            for pair in node.attrib["points"].split()
        ]
        lines[node.attrib["data-name"]] = points
    return lines


def test_should_draw_one_polyline_per_series() -> None:
    # Arrange
    series = {
        "local": [(100.0, 20.0), (300.0, 26.0), (200.0, 24.0)],
        "global": [(100.0, 19.0), (300.0, 25.5)],
    }

    # Act
    lines = _polylines(rd_plot_svg(series))

    # Assert
    assert set(lines) == {"local", "global"}
    assert len(lines["local"]) == 3
    xs = [x for x, _ in lines["local"]]
    assert xs == sorted(xs)


def test_should_drop_infinite_psnr_points() -> None:
    lines = _polylines(rd_plot_svg({"local": [(1.0, 30.0), (2.0, math.inf)]}))

    assert len(lines["local"]) == 1


def test_should_render_higher_quality_higher_on_the_canvas() -> None:
    lines = _polylines(rd_plot_svg({"s": [(1.0, 10.0), (2.0, 40.0)]}))

    (_, y_low), (_, y_high) = lines["s"]
    assert y_high < y_low


def test_should_escape_labels_and_stay_well_formed() -> None:
    svg = rd_plot_svg({"a<b": [(1.0, 1.0)]}, title="R & D")

    root = ET.fromstring(svg)

    assert root.tag == f"{SVG_NS}svg"
    assert "R &amp; D" in svg
    assert "a<b" in _polylines(svg)


def test_should_produce_valid_plot_when_no_series_has_points() -> None:
    svg = rd_plot_svg({})

    assert ET.fromstring(svg).tag == f"{SVG_NS}svg"
