"""OSM XML and Overpass-JSON readers producing a plain in-memory graph."""
from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

from mia.geodesy import GeoPoint


class OsmParseError(ValueError):
    def __init__(self, message, offset=None, missing=()):
        super().__init__(message)
        self.offset = offset
        self.missing = tuple(missing)


@dataclass(frozen=True)
class Way:
    nodes: tuple
    tags: dict

    @property
    def closed(self) -> bool:
        return len(self.nodes) >= 4 and self.nodes[0] == self.nodes[-1]


@dataclass(frozen=True)
class Member:
    type: str
    ref: int
    role: str = ""


@dataclass(frozen=True)
class Relation:
    members: tuple
    tags: dict


@dataclass
class OsmGraph:
    nodes: dict = field(default_factory=dict)
    node_tags: dict = field(default_factory=dict)
    ways: dict = field(default_factory=dict)
    relations: dict = field(default_factory=dict)

    def validate(self):
        missing = sorted({ref for w in self.ways.values() for ref in w.nodes
                          if ref not in self.nodes})
        if missing:
            shown = ", ".join(str(m) for m in missing[:20])
            raise OsmParseError(f"ways reference missing nodes: {shown}", missing=missing)
        return self

    def merge(self, other: "OsmGraph") -> "OsmGraph":
        """Union of two extracts; elements present in both must agree by id."""
        out = OsmGraph(dict(self.nodes), dict(self.node_tags), dict(self.ways),
                       dict(self.relations))
        out.nodes.update(other.nodes)
        out.node_tags.update(other.node_tags)
        out.ways.update(other.ways)
        out.relations.update(other.relations)
        return out

    @property
    def element_count(self) -> int:
        return len(self.node_tags) + len(self.ways) + len(self.relations)


def _byte_offset_of_line_col(document: bytes, line: int, col: int) -> int:
    lines = document.split(b"\n")
    return sum(len(x) + 1 for x in lines[: max(line - 1, 0)]) + col


def _parse_xml(document: bytes) -> OsmGraph:
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        line, col = exc.position
        offset = _byte_offset_of_line_col(document, line, col)
        raise OsmParseError(f"malformed OSM XML at byte {offset}: {exc}", offset=offset) from None
    g = OsmGraph()
    for el in root:
        tags = {t.get("k"): t.get("v") for t in el.findall("tag")}
        if el.tag == "node":
            nid = int(el.get("id"))
            g.nodes[nid] = GeoPoint(float(el.get("lat")), float(el.get("lon")))
            if tags:
                g.node_tags[nid] = tags
        elif el.tag == "way":
            refs = tuple(int(nd.get("ref")) for nd in el.findall("nd"))
            g.ways[int(el.get("id"))] = Way(refs, tags)
        elif el.tag == "relation":
            members = tuple(Member(m.get("type"), int(m.get("ref")), m.get("role") or "")
                            for m in el.findall("member"))
            g.relations[int(el.get("id"))] = Relation(members, tags)
    return g


def _parse_overpass_json(document: bytes) -> OsmGraph:
    text = document.decode("utf-8")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise OsmParseError(f"malformed Overpass JSON at byte {offset}: {exc.msg}",
                            offset=offset) from None
    g = OsmGraph()
    try:
        for el in payload["elements"]:
            tags = dict(el.get("tags", {}))
            kind = el["type"]
            if kind == "node":
                g.nodes[int(el["id"])] = GeoPoint(float(el["lat"]), float(el["lon"]))
                if tags:
                    g.node_tags[int(el["id"])] = tags
            elif kind == "way":
                g.ways[int(el["id"])] = Way(tuple(int(r) for r in el["nodes"]), tags)
            elif kind == "relation":
                members = tuple(Member(m["type"], int(m["ref"]), m.get("role", ""))
                                for m in el.get("members", []))
                g.relations[int(el["id"])] = Relation(members, tags)
    except (KeyError, TypeError) as exc:
        raise OsmParseError(f"Overpass JSON element missing field {exc}") from None
    return g


def parse_osm(document: bytes, format: str = "xml") -> OsmGraph:
    if isinstance(document, str):
        document = document.encode("utf-8")
    if format == "xml":
        g = _parse_xml(document)
    elif format in ("overpass-json", "json"):
        g = _parse_overpass_json(document)
    else:
        raise ValueError(f"unknown OSM format {format!r}")
    return g.validate()


def sniff_format(document: bytes) -> str:
    head = document.lstrip()[:1]
    return "overpass-json" if head == b"{" else "xml"
