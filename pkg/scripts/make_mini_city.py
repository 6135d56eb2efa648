"""Regenerate the offline ``mini-city`` fixture shipped in ``mia/fixtures``.

A synthetic street grid around downtown Pittsburgh with Mapillary-style image
payloads that exercise every filter stage. Output is deterministic.

    python scripts/make_mini_city.py [OUT_DIR]
"""
from __future__ import annotations

import io
import json
import math
import shutil
import sys
from pathlib import Path
from xml.sax.saxutils import quoteattr

import numpy as np
from PIL import Image

LAT0, LON0 = 40.4406, -79.9959
M_PER_DEG_LAT = 111_320.0
M_PER_DEG_LON = 111_320.0 * math.cos(math.radians(LAT0))
BASE_MS = 1_622_505_600_000  # 2021-06-01T00:00:00Z
OLD_MS = 1_433_116_800_000  # 2015-06-01T00:00:00Z

ROWS = (-450, -300, -150, 0, 150, 300, 450)  # east-west streets (y, metres)
COLS = tuple(range(-750, 751, 150))  # north-south streets (x, metres)
BOUNDARY_XY = [(-680, -420), (680, -420), (680, 300), (400, 420), (-680, 420)]


def to_latlon(x: float, y: float) -> tuple[float, float]:
    return round(LAT0 + y / M_PER_DEG_LAT, 7), round(LON0 + x / M_PER_DEG_LON, 7)


class OsmWriter:
    def __init__(self):
        self.nodes = {}  # id -> (lat, lon, tags)
        self.ways = {}
        self.relations = {}
        self._xy = {}
        self._next = {"n": 1, "w": 1, "r": 1}

    def _id(self, kind):
        i = self._next[kind]
        self._next[kind] += 1
        return i

    def node(self, x, y, tags=None, shared=True):
        key = (round(x, 3), round(y, 3))
        if shared and not tags and key in self._xy:
            return self._xy[key]
        nid = self._id("n")
        lat, lon = to_latlon(x, y)
        self.nodes[nid] = (lat, lon, tags or {})
        if shared and not tags:
            self._xy[key] = nid
        return nid

    def way(self, node_ids, tags):
        wid = self._id("w")
        self.ways[wid] = (list(node_ids), tags)
        return wid

    def area(self, pts, tags):
        ids = [self.node(x, y, shared=False) for x, y in pts]
        return self.way(ids + ids[:1], tags)

    def relation(self, members, tags):
        rid = self._id("r")
        self.relations[rid] = (members, tags)
        return rid

    def xml(self) -> str:
        out = ['<?xml version="1.0" encoding="UTF-8"?>',
               '<osm version="0.6" generator="make_mini_city">']
        lat0, lon0 = to_latlon(-800, -500)
        lat1, lon1 = to_latlon(800, 500)
        out.append(f'  <bounds minlat="{lat0}" minlon="{lon0}" maxlat="{lat1}" maxlon="{lon1}"/>')

        def tag_lines(tags):
            return [f"    <tag k={quoteattr(k)} v={quoteattr(v)}/>" for k, v in tags.items()]

        for nid, (lat, lon, tags) in sorted(self.nodes.items()):
            if tags:
                out.append(f'  <node id="{nid}" lat="{lat}" lon="{lon}">')
                out += tag_lines(tags)
                out.append("  </node>")
            else:
                out.append(f'  <node id="{nid}" lat="{lat}" lon="{lon}"/>')
        for wid, (refs, tags) in sorted(self.ways.items()):
            out.append(f'  <way id="{wid}">')
            out += [f'    <nd ref="{r}"/>' for r in refs]
            out += tag_lines(tags)
            out.append("  </way>")
        for rid, (members, tags) in sorted(self.relations.items()):
            out.append(f'  <relation id="{rid}">')
            out += [f'    <member type="way" ref="{ref}" role="{role}"/>' for ref, role in members]
            out += tag_lines(tags)
            out.append("  </relation>")
        out.append("</osm>")
        return "\n".join(out) + "\n"


def street_tags(axis: str, c: int) -> dict:
    if axis == "row" and c == 0:
        return {"highway": "primary", "name": "Main Street", "lanes": "4", "sidewalk": "both"}
    if axis == "col" and c == 0:
        return {"highway": "secondary", "name": "Market Avenue", "sidewalk": "separate"}
    if abs(c) in (450, 750):
        return {"highway": "tertiary", "sidewalk": "no"}
    if axis == "row" and c == 300:
        return {"highway": "residential", "sidewalk": "left"}
    if axis == "col" and c == 450:
        return {"highway": "service"}
    return {"highway": "residential", "sidewalk": "both"}


def build_osm(rng) -> str:
    w = OsmWriter()
    for y in ROWS:
        ids = []
        for x in COLS:
            if y == 0 and x > COLS[0]:
                # marked crossing just west of each intersection on Main Street
                ids.append(w.node(x - 12, 0, {"highway": "crossing", "crossing": "marked"}))
            ids.append(w.node(x, y))
        w.way(ids, street_tags("row", y))
    for x in COLS:
        w.way([w.node(x, y) for y in ROWS], street_tags("col", x))

    # separately mapped sidewalks along Market Avenue
    for sx in (-5.5, 5.5):
        w.way([w.node(sx, y, shared=False) for y in (-450, 450)],
              {"highway": "footway", "footway": "sidewalk"})
    w.way([w.node(-5.5, 75, shared=False), w.node(5.5, 75, shared=False)],
          {"highway": "footway", "footway": "crossing"})

    for bx in COLS[:-1]:
        for by in ROWS[:-1]:
            x0, y0 = bx + 15, by + 15
            if (bx, by) == (150, 0):
                w.area([(x0, y0), (x0 + 120, y0), (x0 + 120, y0 + 120), (x0, y0 + 120)],
                       {"amenity": "parking", "parking": "surface"})
                continue
            if (bx, by) == (-300, -150):
                w.area([(x0, y0), (x0 + 120, y0), (x0 + 120, y0 + 120), (x0, y0 + 120)],
                       {"leisure": "park", "name": "Mini Park"})
                continue
            if (bx, by) == (-150, 150):
                outer = w.area([(x0, y0), (x0 + 70, y0), (x0 + 70, y0 + 70), (x0, y0 + 70)], {})
                inner = w.area([(x0 + 25, y0 + 25), (x0 + 45, y0 + 25), (x0 + 45, y0 + 45),
                                (x0 + 25, y0 + 45)], {})
                w.relation([(outer, "outer"), (inner, "inner")],
                           {"type": "multipolygon", "building": "yes"})
                continue
            if (bx, by) == (300, -300):
                w.area([(x0, y0), (x0 + 120, y0), (x0 + 120, y0 + 120), (x0, y0 + 120)],
                       {"landuse": "grass"})
            for ox in (0, 75):
                for oy in (0, 75):
                    sx = float(rng.uniform(30, 45))
                    sy = float(rng.uniform(30, 45))
                    px, py = x0 + ox + 2, y0 + oy + 2
                    w.area([(px, py), (px + sx, py), (px + sx, py + sy), (px, py + sy)],
                           {"building": "yes"})

    w.node(40, 20, {"amenity": "bench"})
    w.node(-60, 30, {"shop": "bakery", "name": "Corner Bakery"})
    w.way([w.node(-780, -480, shared=False), w.node(780, -470, shared=False)],
          {"waterway": "stream"})
    return w.xml()


def fpv_image(rng, width=64, height=48) -> bytes:
    sky = np.linspace(200, 140, height // 2)[:, None, None] * np.ones((1, width, 3))
    ground = np.full((height - height // 2, width, 3), 90.0)
    img = np.concatenate([sky, ground]) + rng.uniform(-20, 20, 3)
    img[:, ::8] = 30  # vertical stripes make distortion visible
    buf = io.BytesIO()
    Image.fromarray(np.clip(img, 0, 255).astype(np.uint8), "RGB").save(buf, "PNG")
    return buf.getvalue()


def payload(image_id, seq, x, y, heading, t, model, cam_type, params, *,
            sfm_offset=(0.0, 0.0), sfm_dheading=0.0, sfm=True):
    lat, lon = to_latlon(x, y)
    doc = {
        "id": image_id,
        "sequence": seq,
        "geometry": {"type": "Point", "coordinates": [lon, lat]},
        "compass_angle": round(heading % 360.0, 3),
        "captured_at": int(t),
        "make": model.split()[0],
        "model": model,
        "camera_type": cam_type,
        "camera_parameters": params,
        "width": 64,
        "height": 48,
    }
    if sfm:
        slat, slon = to_latlon(x + sfm_offset[0], y + sfm_offset[1])
        doc["computed_geometry"] = {"type": "Point", "coordinates": [slon, slat]}
        doc["computed_compass_angle"] = round((heading + sfm_dheading) % 360.0, 3)
    return doc


def build_images(rng):
    perspective = [0.8, 0.0, 0.0]
    fisheye = [0.5, -0.02, 0.003]
    docs = []
    counter = iter(range(1001, 10_000))

    def seq(name, start, step, n, heading, model, cam_type, params, t0, **kw):
        for i in range(n):
            x, y = start[0] + step[0] * i, start[1] + step[1] * i
            jitter = (float(rng.normal(0, 0.4)), float(rng.normal(0, 0.4)))
            dh = float(rng.normal(0, 2.0))
            extra = kw.get("per_image", lambda i: {})(i)
            docs.append(payload(str(next(counter)), name, x, y, heading, t0 + 2000 * i,
                                model, cam_type, params,
                                sfm_offset=extra.get("sfm_offset", jitter),
                                sfm_dheading=extra.get("sfm_dheading", dh),
                                sfm=extra.get("sfm", True)))

    # Main Street eastbound, with near-duplicate frames every fourth image
    seq("seq-main-east", (-630, -3), (30, 0), 22, 90.0, "iPhone 12", "perspective",
        perspective, BASE_MS)
    seq("seq-main-east", (-628, -3), (120, 0), 6, 90.0, "iPhone 12", "perspective",
        perspective, BASE_MS + 1000)
    # Market Avenue northbound on a fisheye action camera
    seq("seq-market-north", (2, -400), (0, 45), 17, 0.0, "GoPro Max", "fisheye",
        fisheye, BASE_MS + 86_400_000)
    # residential street westbound, some frames badly registered
    seq("seq-res-west", (600, 153), (-40, 0), 16, 270.0, "SM-G970U", "perspective",
        perspective, BASE_MS + 2 * 86_400_000,
        per_image=lambda i: ({"sfm_dheading": 30.0} if i % 5 == 1 else
                             {"sfm_offset": (4.0, 3.0)} if i % 5 == 3 else {}))
    # old imagery
    seq("seq-old", (-448, 400), (0, -60), 12, 180.0, "iPhone 11", "perspective",
        perspective, OLD_MS)
    # camera not on the allowlist
    seq("seq-dslr", (-300, -297), (40, 0), 10, 90.0, "Nikon D90", "perspective",
        perspective, BASE_MS + 3 * 86_400_000)
    # 360 camera
    seq("seq-360", (-152, -350), (0, 50), 6, 0.0, "GoPro Max", "spherical",
        [0.5, 0.0, 0.0], BASE_MS + 4 * 86_400_000)
    # outside the boundary polygon
    seq("seq-outside", (720, -400), (0, 70), 8, 0.0, "iPhone 12", "perspective",
        perspective, BASE_MS + 5 * 86_400_000)
    # no SfM reconstruction
    seq("seq-nosfm", (298, -440), (0, 60), 5, 0.0, "iPhone 13", "perspective",
        perspective, BASE_MS + 6 * 86_400_000, per_image=lambda i: {"sfm": False})
    # a second fisheye camera along the north edge
    seq("seq-north", (-600, 447), (60, 0), 8, 90.0, "FDR-X3000", "fisheye",
        fisheye, BASE_MS + 7 * 86_400_000)
    return docs


def main(out_dir: Path) -> None:
    rng = np.random.default_rng(20240611)
    if out_dir.exists():
        shutil.rmtree(out_dir)
    (out_dir / "mapillary").mkdir(parents=True)
    (out_dir / "images").mkdir()
    (out_dir / "osm").mkdir()

    lat0, lon0 = to_latlon(-800, -500)
    lat1, lon1 = to_latlon(800, 500)
    stem = f"{lat0:.6f}_{lon0:.6f}_{lat1:.6f}_{lon1:.6f}"
    (out_dir / "osm" / f"{stem}.osm").write_text(build_osm(rng))

    for doc in build_images(rng):
        (out_dir / "mapillary" / f"{doc['id']}.json").write_text(
            json.dumps(doc, indent=1, sort_keys=True) + "\n")
        (out_dir / "images" / f"{doc['id']}.png").write_bytes(fpv_image(rng))

    boundary = [list(to_latlon(x, y)) for x, y in BOUNDARY_XY]
    regions = {"schema": "mia-regions", "version": 1, "regions": {"mini-city": boundary}}
    (out_dir / "regions.json").write_text(json.dumps(regions, indent=1) + "\n")


if __name__ == "__main__":
    default = Path(__file__).resolve().parents[1] / "src" / "mia" / "fixtures" / "mini-city"
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else default)
