import math

import numpy as np
import pytest

from conftest import random_classified_graph, t_fixture
from oracles import draw_line
from rootpipe.graph import build_graph, classify_main
from rootpipe.rsml import RsmlError, RsmlParseError, parse_rsml, write_rsml


def assert_round_trip(graph, plant_id="p1"):
    doc = parse_rsml(write_rsml(graph, plant_id, time_hours=12.5))
    assert doc.unit == "mm" and doc.resolution == graph.mm_per_pixel and doc.time_hours == 12.5
    (plant,) = doc.plants
    (main,) = plant.roots
    assert plant.id == plant_id and main.label == "main"
    assert np.abs(main.polyline - graph.main_polyline() * graph.mm_per_pixel).max() <= 1e-6
    laterals = graph.lateral_roots()
    assert len(main.children) == len(laterals)
    for child, lat in zip(main.children, laterals):
        assert child.label == "lateral" and child.children == []
        assert np.abs(child.polyline - np.asarray(lat.polyline) * graph.mm_per_pixel).max() <= 1e-6
        assert float(child.annotations["length_mm"]) == pytest.approx(lat.length_mm, abs=1e-9)


def test_straight_main_root():
    skel = draw_line((60, 20), (10, 0), (10, 50))
    g = classify_main(build_graph(skel, (10, 0), 0.04))
    doc = parse_rsml(write_rsml(g, "solo"))
    (main,) = doc.plants[0].roots
    assert main.children == [] and main.length_mm == pytest.approx(50 * 0.04)


def test_main_with_two_laterals():
    skel = draw_line((120, 120), (50, 0), (50, 99)) | draw_line((120, 120), (50, 30), (80, 30))
    skel |= draw_line((120, 120), (50, 60), (20, 60))
    g = classify_main(build_graph(skel, (50, 0), 0.05))
    (main,) = parse_rsml(write_rsml(g, "p")).plants[0].roots
    assert len(main.children) == 2
    assert_round_trip(g)


def test_skipped_lateral_ids():
    g = classify_main(build_graph(t_fixture(), (50, 0), 1.0))
    (main,) = parse_rsml(write_rsml(g, "p", lateral_ids=[None])).plants[0].roots
    assert main.children == []


def test_random_round_trips(rng):
    for _ in range(20):
        assert_round_trip(random_classified_graph(rng))


def test_output_is_stable():
    g = classify_main(build_graph(t_fixture(), (50, 0), 0.04))
    assert write_rsml(g, "p") == write_rsml(g, "p")


def test_empty_and_unclassified_rejected():
    g = build_graph(t_fixture(), (50, 0), 1.0)
    with pytest.raises(RsmlError):
        write_rsml(g, "p")
    empty = type(g)((), (), (0.0, 0.0), 1.0)
    with pytest.raises(RsmlError):
        write_rsml(empty, "p")


MINIMAL = """<?xml version="1.0"?>
<rsml>
  <metadata><version>1.0</version><unit>mm</unit><resolution>0.04</resolution><extra>kept out</extra></metadata>
  <scene><plant id="x"><root id="r"><geometry><polyline>
    <point x="1.0" y="2.0"/><point x="4.0" y="6.0"/>
  </polyline></geometry></root></plant></scene>
</rsml>
"""


def test_minimal_hand_written_document():
    doc = parse_rsml(MINIMAL)
    (root,) = doc.plants[0].roots
    assert root.length_mm == pytest.approx(5.0)
    assert doc.software is None and doc.time_hours is None


def test_pixel_units_scaled_by_resolution():
    doc = parse_rsml(MINIMAL.replace("<unit>mm</unit>", "<unit>px</unit>"))
    assert doc.plants[0].roots[0].length_mm == pytest.approx(0.2)
    with pytest.raises(RsmlParseError):
        parse_rsml(MINIMAL.replace("<unit>mm</unit>", "<unit>px</unit>").replace("<resolution>0.04</resolution>", ""))
    with pytest.raises(RsmlParseError):
        parse_rsml(MINIMAL.replace("<unit>mm</unit>", "<unit>inch</unit>"))


def test_truncated_document_reports_offset():
    text = write_rsml(classify_main(build_graph(t_fixture(), (50, 0), 0.04)), "p")
    cut = text[: len(text) // 2]
    with pytest.raises(RsmlParseError) as info:
        parse_rsml(cut)
    assert info.value.offset is not None and 0 < info.value.offset <= len(cut.encode())
    assert "byte offset" in str(info.value)


def test_missing_geometry_and_short_polyline():
    with pytest.raises(RsmlParseError):
        parse_rsml(MINIMAL.replace('<point x="4.0" y="6.0"/>', ""))
    no_geom = '<rsml><scene><plant id="x"><root id="r"/></plant></scene></rsml>'
    with pytest.raises(RsmlParseError):
        parse_rsml(no_geom)
    assert math.isnan(parse_rsml('<rsml><scene/></rsml>').resolution)
