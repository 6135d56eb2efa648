from mia.osm.classify import (Classification, ClassificationReport, SemanticGeometry,
                              TagRules, classify, default_rules, infer_sidewalks)
from mia.osm.geometry import GeometryError, expand_centerline
from mia.osm.parse import OsmGraph, OsmParseError, parse_osm

__all__ = [
    "Classification", "ClassificationReport", "GeometryError", "OsmGraph",
    "OsmParseError", "SemanticGeometry", "TagRules", "classify", "default_rules",
    "expand_centerline", "infer_sidewalks", "parse_osm",
]
