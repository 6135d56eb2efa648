"""OSM tags -> six static classes, with centerline expansion and sidewalk inference."""
from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import shapely
from shapely.geometry import LineString, MultiPolygon, Polygon
from shapely.ops import linemerge, unary_union

from mia.classes import SemanticClass
from mia.geodesy import UtmFrame
from mia.osm.geometry import (GeometryError, expand_centerline, offset_polyline,
                              oriented_square, side_region)
from mia.osm.parse import OsmGraph

RULES_SCHEMA = "mia-tag-rules"
RULES_VERSION = 1


@dataclass(frozen=True)
class Rule:
    cls: SemanticClass
    element: str
    match: tuple
    geometry: str
    width: str | None = None

    def matches(self, tags: dict) -> bool:
        for key, allowed in self.match:
            value = tags.get(key)
            if value is None:
                return False
            if allowed != "*" and value not in allowed:
                return False
        return True


@dataclass(frozen=True)
class TagRules:
    rules: tuple
    lane_width: float
    road_widths: dict
    sidewalk_width: float
    crossing_default: float
    suppression_margin: float
    min_mapped_overlap: float

    @classmethod
    def from_dict(cls, doc: dict) -> "TagRules":
        if doc.get("schema") != RULES_SCHEMA or doc.get("version") != RULES_VERSION:
            raise ValueError(f"unsupported tag rule table {doc.get('schema')!r} "
                             f"v{doc.get('version')!r}")
        rules = []
        for r in doc["rules"]:
            match = tuple((k, v if v == "*" else tuple(v)) for k, v in r["match"].items())
            if r["element"] not in ("node", "way", "area"):
                raise ValueError(f"rule element must be node/way/area, got {r['element']!r}")
            rules.append(Rule(SemanticClass.from_label(r["class"]), r["element"], match,
                              r["geometry"], r.get("width")))
        w = doc["widths"]
        inf = doc.get("sidewalk_inference", {})
        return cls(tuple(rules), float(w["lane_width"]), dict(w["road"]),
                   float(w["sidewalk"]), float(w["crossing_default"]),
                   float(inf.get("suppression_margin", 3.0)),
                   float(inf.get("min_mapped_overlap", 0.5)))

    @classmethod
    def load(cls, path=None) -> "TagRules":
        if path is None:
            text = resources.files("mia.osm").joinpath("tag_rules.json").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_dict(json.loads(text))

    def road_width(self, tags: dict) -> float:
        lanes = tags.get("lanes")
        if lanes:
            try:
                n = float(lanes.split(";")[0])
                if n > 0:
                    return n * self.lane_width
            except ValueError:
                pass
        return float(self.road_widths.get(tags.get("highway"), self.road_widths["residential"]))


_DEFAULT_RULES = None


def default_rules() -> TagRules:
    global _DEFAULT_RULES
    if _DEFAULT_RULES is None:
        _DEFAULT_RULES = TagRules.load()
    return _DEFAULT_RULES


@dataclass
class SemanticGeometry:
    cls: SemanticClass
    shape: Polygon | MultiPolygon
    source: str
    inferred: bool = False
    centerline: np.ndarray | None = None
    width: float | None = None


@dataclass
class ClassificationReport:
    total: int = 0
    per_class: Counter = field(default_factory=Counter)
    dropped: int = 0
    dropped_tags: Counter = field(default_factory=Counter)

    @property
    def classified(self) -> int:
        return sum(self.per_class.values())


@dataclass
class Classification:
    geometries: list
    report: ClassificationReport


def _project_nodes(graph: OsmGraph, frame: UtmFrame) -> dict:
    ids = list(graph.nodes)
    if not ids:
        return {}
    lat = np.array([graph.nodes[i].lat for i in ids])
    lon = np.array([graph.nodes[i].lon for i in ids])
    e, n = frame.forward(lat, lon)
    return {i: (float(x), float(y)) for i, x, y in zip(ids, e, n)}


def _assemble_rings(chains: list) -> list:
    """Join open member ways end-to-end; returns closed coordinate rings."""
    if not chains:
        return []
    merged = linemerge([LineString(c) for c in chains if len(c) >= 2])
    parts = getattr(merged, "geoms", [merged])
    return [np.asarray(p.coords) for p in parts if p.is_ring]


def _polygonal(geom):
    if geom.is_empty:
        return None
    if not geom.is_valid:
        geom = shapely.make_valid(geom)
    if isinstance(geom, (Polygon, MultiPolygon)):
        out = geom
    else:
        polys = [g for g in getattr(geom, "geoms", []) if isinstance(g, (Polygon, MultiPolygon))]
        if not polys:
            return None
        out = unary_union(polys)
    return out if out.area > 0 else None


def _tag_key(tags: dict) -> str:
    if not tags:
        return "<untagged>"
    k = sorted(tags)[0]
    return f"{k}={tags[k]}"


def _area_shape(kind, eid, graph, xy):
    if kind == "way":
        way = graph.ways[eid]
        if not way.closed:
            return None
        return _polygonal(Polygon([xy[n] for n in way.nodes]))
    rel = graph.relations[eid]
    if rel.tags.get("type") != "multipolygon":
        return None
    outer, inner = [], []
    for m in rel.members:
        if m.type != "way" or m.ref not in graph.ways:
            continue
        coords = [xy[n] for n in graph.ways[m.ref].nodes]
        (inner if m.role == "inner" else outer).append(coords)
    shells = [Polygon(r) for r in _assemble_rings(outer) if len(r) >= 4]
    holes = [Polygon(r) for r in _assemble_rings(inner) if len(r) >= 4]
    if not shells:
        return None
    shape = unary_union([_polygonal(s) or Polygon() for s in shells])
    if holes:
        shape = shape.difference(unary_union([_polygonal(h) or Polygon() for h in holes]))
    return _polygonal(shape)


def classify(graph: OsmGraph, rules: TagRules | None = None,
             frame: UtmFrame | None = None) -> Classification:
    """Map every tagged element to at most one class.

    Elements are visited as tagged nodes, then ways, then relations, each in id
    order; the first rule that matches and yields a non-degenerate shape wins.
    """
    rules = rules or default_rules()
    if frame is None:
        if not graph.nodes:
            return Classification([], ClassificationReport())
        pts = list(graph.nodes.values())
        frame = UtmFrame.for_points([p.lat for p in pts], [p.lon for p in pts])
    xy = _project_nodes(graph, frame)

    road_rules = [r for r in rules.rules if r.width == "road"]
    road_width = {}
    roads_at_node = defaultdict(list)
    for wid in sorted(graph.ways):
        tags = graph.ways[wid].tags
        if any(r.matches(tags) for r in road_rules):
            road_width[wid] = rules.road_width(tags)
            for n in graph.ways[wid].nodes:
                roads_at_node[n].append(wid)

    def parent_width(node_ids):
        widths = [road_width[w] for n in node_ids for w in roads_at_node.get(n, ())]
        return max(widths) if widths else rules.crossing_default

    def width_for(rule, kind, eid):
        if rule.width == "road":
            return road_width[eid]
        if rule.width == "sidewalk":
            return rules.sidewalk_width
        if rule.width == "crossing":
            nodes = [eid] if kind == "node" else graph.ways[eid].nodes
            return parent_width(nodes)
        return float(rule.width)

    def build(rule, kind, eid):
        if rule.geometry == "polygon":
            if rule.element != "area":
                return None, None
            return _area_shape(kind, eid, graph, xy), None
        if rule.geometry == "centerline":
            line = np.array([xy[n] for n in graph.ways[eid].nodes])
            return expand_centerline(line, width_for(rule, kind, eid)), line
        if rule.geometry == "square":
            w = width_for(rule, kind, eid)
            direction = (1.0, 0.0)
            for parent in roads_at_node.get(eid, ()):
                nodes = graph.ways[parent].nodes
                k = nodes.index(eid)
                a = xy[nodes[max(k - 1, 0)]]
                b = xy[nodes[min(k + 1, len(nodes) - 1)]]
                if a != b:
                    direction = (b[0] - a[0], b[1] - a[1])
                    break
            return oriented_square(xy[eid], direction, w), None
        raise ValueError(f"unknown geometry kind {rule.geometry!r}")

    elements = ([("node", i, graph.node_tags[i]) for i in sorted(graph.node_tags)]
                + [("way", i, graph.ways[i].tags) for i in sorted(graph.ways)]
                + [("relation", i, graph.relations[i].tags) for i in sorted(graph.relations)])
    report = ClassificationReport(total=len(elements))
    out = []
    for kind, eid, tags in elements:
        placed = False
        for rule in rules.rules:
            if rule.element == "node" and kind != "node":
                continue
            if rule.element == "way" and kind != "way":
                continue
            if rule.element == "area" and kind == "node":
                continue
            if not rule.matches(tags):
                continue
            try:
                shape, line = build(rule, kind, eid)
            except GeometryError:
                shape, line = None, None
            if shape is None:
                continue
            width = road_width.get(eid) if rule.width == "road" else None
            out.append(SemanticGeometry(rule.cls, shape, f"{kind}/{eid}", False, line, width))
            report.per_class[rule.cls] += 1
            placed = True
            break
        if not placed:
            report.dropped += 1
            report.dropped_tags[_tag_key(tags)] += 1
    return Classification(out, report)


_SIDE_VALUES = {"both": ("left", "right"), "left": ("left",), "right": ("right",)}


def sidewalk_sides(tags: dict) -> tuple:
    sides = set(_SIDE_VALUES.get(tags.get("sidewalk", ""), ()))
    if tags.get("sidewalk:both") == "yes":
        sides.update(("left", "right"))
    for side in ("left", "right"):
        value = tags.get(f"sidewalk:{side}")
        if value == "yes":
            sides.add(side)
        elif value in ("no", "separate"):
            sides.discard(side)
    return tuple(s for s in ("left", "right") if s in sides)


def infer_sidewalks(graph: OsmGraph, classification: Classification | None = None,
                    rules: TagRules | None = None,
                    frame: UtmFrame | None = None) -> list[SemanticGeometry]:
    """Sidewalk polygons for roads whose tags announce sidewalks nobody drew."""
    rules = rules or default_rules()
    if classification is None:
        classification = classify(graph, rules, frame)
    geoms = classification.geometries
    mapped = [LineString(g.centerline) for g in geoms
              if g.cls == SemanticClass.SIDEWALK and not g.inferred and g.centerline is not None]
    mapped_union = unary_union(mapped) if mapped else None

    out = []
    for g in geoms:
        if g.cls != SemanticClass.ROAD or g.centerline is None or not g.source.startswith("way/"):
            continue
        wid = int(g.source.split("/")[1])
        sides = sidewalk_sides(graph.ways[wid].tags)
        if not sides:
            continue
        half = g.width / 2.0
        road_len = LineString(g.centerline).length
        for side in sides:
            sign = 1.0 if side == "left" else -1.0
            if mapped_union is not None:
                region = side_region(g.centerline, sign * (half + rules.suppression_margin))
                overlap = mapped_union.intersection(region).length
                if overlap >= rules.min_mapped_overlap * road_len:
                    continue
            offset = sign * (half + rules.sidewalk_width / 2.0)
            for part in offset_polyline(g.centerline, offset):
                try:
                    shape = expand_centerline(part, rules.sidewalk_width)
                except GeometryError:
                    continue
                out.append(SemanticGeometry(SemanticClass.SIDEWALK, shape,
                                            f"{g.source}:{side}", True, part,
                                            rules.sidewalk_width))
    return out
