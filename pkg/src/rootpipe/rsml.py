"""Root System Markup Language export and import (a documented subset).

Subset: ``rsml > metadata, scene > plant > root > (geometry > polyline >
point)*, annotations?, root*``. Coordinates are written in millimetres with
the origin at the ROI top-left; laterals nest one level under the main root.
Per-root metrics are stored as ``<annotation name=... value=.../>``.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from .graph import RootGraph

RSML_VERSION = "1.0"
SOFTWARE = "rootpipe"


class RsmlError(ValueError):
    pass


class RsmlParseError(RsmlError):
    """Malformed document; ``offset`` is the byte offset of the failure when known."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass
class RsmlRoot:
    id: str
    label: str
    polyline: np.ndarray  # (k, 2) x, y in mm
    annotations: dict[str, str] = field(default_factory=dict)
    children: list["RsmlRoot"] = field(default_factory=list)

    @property
    def length_mm(self) -> float:
        return float(np.hypot(*np.diff(self.polyline, axis=0).T).sum())


@dataclass
class RsmlPlant:
    id: str
    roots: list[RsmlRoot] = field(default_factory=list)


@dataclass
class RsmlDocument:
    version: str
    unit: str
    resolution: float
    plants: list[RsmlPlant]
    time_hours: float | None = None
    software: str | None = None


def _fmt(x: float) -> str:
    # shortest round-tripping representation keeps coordinates exact and output stable
    return repr(float(x))


def _add_root(parent, root_id: str, label: str, polyline_mm, annotations) -> ET.Element:
    el = ET.SubElement(parent, "root", {"id": root_id, "label": label})
    poly = ET.SubElement(ET.SubElement(el, "geometry"), "polyline")
    for x, y in np.asarray(polyline_mm, dtype=float):
        ET.SubElement(poly, "point", {"x": _fmt(x), "y": _fmt(y)})
    if annotations:
        ann = ET.SubElement(el, "annotations")
        for name in sorted(annotations):
            ET.SubElement(ann, "annotation", {"name": name, "value": str(annotations[name])})
    return el


def write_rsml(
    graph: RootGraph,
    plant_id: str,
    time_hours: float | None = None,
    lateral_ids=None,
    annotations: dict | None = None,
) -> str:
    """Serialise a classified graph of one plant; coordinates are converted to mm.

    ``lateral_ids`` gives a stable id per entry of ``graph.lateral_roots()``;
    a None entry leaves that lateral out.
    """
    if not graph.edges:
        raise RsmlError(f"plant {plant_id}: empty graph")
    if not graph.classified:
        raise RsmlError(f"plant {plant_id}: graph is not classified")
    mpp = graph.mm_per_pixel
    rsml = ET.Element("rsml")
    meta = ET.SubElement(rsml, "metadata")
    ET.SubElement(meta, "version").text = RSML_VERSION
    ET.SubElement(meta, "unit").text = "mm"
    ET.SubElement(meta, "resolution").text = _fmt(mpp)
    if time_hours is not None:
        ET.SubElement(meta, "time-hours").text = _fmt(time_hours)
    ET.SubElement(meta, "software").text = SOFTWARE
    plant = ET.SubElement(ET.SubElement(rsml, "scene"), "plant", {"id": plant_id})
    main_poly = graph.main_polyline().astype(float)
    if len(main_poly) < 2:
        raise RsmlError(f"plant {plant_id}: main root has fewer than 2 points")
    main_ann = {"length_mm": _fmt(sum(e.length_mm for e in graph.edges_of_class("main")))}
    main_ann.update(annotations or {})
    main = _add_root(plant, f"{plant_id}.main", "main", main_poly * mpp, main_ann)
    laterals = graph.lateral_roots()
    ids = list(range(len(laterals))) if lateral_ids is None else list(lateral_ids)
    for lid, lat in zip(ids, laterals):
        if lid is None:
            continue
        _add_root(main, f"{plant_id}.lat{lid}", "lateral", np.asarray(lat.polyline, dtype=float) * mpp,
                  {"length_mm": _fmt(lat.length_mm)})
    ET.indent(rsml)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(rsml, encoding="unicode") + "\n"


def _byte_offset(text: str, line: int, column: int) -> int:
    """Byte offset of a 1-based line and 0-based character column."""
    lines = text.splitlines(keepends=True)
    if line - 1 >= len(lines):
        return len(text.encode("utf-8"))
    head = "".join(lines[: line - 1]) + lines[line - 1][:column]
    return len(head.encode("utf-8"))


def _parse_root(el: ET.Element, scale: float) -> RsmlRoot:
    rid = el.get("id", "")
    points = [
        (float(p.get("x")), float(p.get("y")))
        for p in el.findall("./geometry/polyline/point")
    ]
    if el.find("./geometry/polyline") is None:
        raise RsmlParseError(f"root {rid!r} has no geometry")
    if len(points) < 2:
        raise RsmlParseError(f"root {rid!r} polyline has fewer than 2 points")
    ann = {a.get("name"): a.get("value") for a in el.findall("./annotations/annotation")}
    return RsmlRoot(
        rid,
        el.get("label", ""),
        np.array(points, dtype=float) * scale,
        ann,
        [_parse_root(c, scale) for c in el.findall("root")],
    )


def parse_rsml(text: str | bytes) -> RsmlDocument:
    """Parse the RSML subset; unknown elements are ignored."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        line, col = exc.position
        raise RsmlParseError(f"malformed RSML: {exc}", _byte_offset(text, line, col)) from None
    if root.tag != "rsml":
        raise RsmlParseError(f"root element is <{root.tag}>, expected <rsml>", 0)
    meta = root.find("metadata")

    def meta_text(tag):
        el = meta.find(tag) if meta is not None else None
        return el.text.strip() if el is not None and el.text else None

    unit = meta_text("unit") or "mm"
    res_text = meta_text("resolution")
    resolution = float(res_text) if res_text else math.nan
    if unit in ("mm", "millimetre", "millimeter"):
        scale = 1.0
    elif unit in ("px", "pixel", "pixels"):
        if math.isnan(resolution):
            raise RsmlParseError("pixel units without a resolution")
        scale = resolution
    else:
        raise RsmlParseError(f"unsupported unit {unit!r}")
    time_text = meta_text("time-hours")
    plants = [
        RsmlPlant(p.get("id", ""), [_parse_root(r, scale) for r in p.findall("root")])
        for p in root.findall("./scene/plant")
    ]
    return RsmlDocument(
        meta_text("version") or RSML_VERSION, "mm", resolution, plants,
        float(time_text) if time_text else None, meta_text("software"),
    )
