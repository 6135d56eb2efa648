"""Where OSM extracts come from: a fixture directory or the OSM editing API."""
from __future__ import annotations

import logging
import time
from pathlib import Path

from mia.io import atomic_write_bytes
from mia.osm.parse import OsmGraph, parse_osm, sniff_format

log = logging.getLogger(__name__)


class OsmSourceError(RuntimeError):
    pass


def bbox_name(bbox) -> str:
    """``(west, south, east, north)`` -> ``south_west_north_east`` file stem."""
    w, s, e, n = bbox
    return f"{s:.6f}_{w:.6f}_{n:.6f}_{e:.6f}"


def _parse_stem(stem: str):
    try:
        s, w, n, e = (float(x) for x in stem.split("_"))
    except ValueError:
        raise OsmSourceError(f"fixture file {stem!r} is not named south_west_north_east") from None
    return w, s, e, n


def _overlaps(a, b) -> bool:
    return a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]


def _load(path: Path) -> OsmGraph:
    data = path.read_bytes()
    return parse_osm(data, sniff_format(data))


class FixtureOsmSource:
    """Extracts stored as ``<south>_<west>_<north>_<east>.osm`` (or ``.json``)."""

    def __init__(self, directory):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise OsmSourceError(f"OSM fixture directory {self.directory} does not exist")
        self.files = sorted(p for p in self.directory.iterdir()
                            if p.suffix in (".osm", ".json"))
        self._bounds = {p: _parse_stem(p.stem) for p in self.files}
        self._graphs = {}

    def fetch(self, bbox):
        """Returns (cache key, merged graph of every extract overlapping bbox)."""
        hits = tuple(p for p in self.files if _overlaps(self._bounds[p], bbox))
        if hits not in self._graphs:
            graph = OsmGraph({}, {}, {}, {})
            for p in hits:
                graph = graph.merge(_load(p))
            self._graphs[hits] = graph
        return hits, self._graphs[hits]


class OsmApiSource:
    """``GET {base}/map?bbox=w,s,e,n`` with retries and an on-disk cache."""

    def __init__(self, base_url: str, cache_dir=None, transport=None, max_attempts: int = 4,
                 backoff_s: float = 1.0, sleep=time.sleep):
        from mia.fpv.client import RequestsTransport

        self.base_url = base_url.rstrip("/")
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.transport = transport or RequestsTransport(timeout=120.0)
        self.max_attempts = max_attempts
        self.backoff_s = backoff_s
        self.sleep = sleep

    def _download(self, bbox) -> bytes:
        from mia.fpv.client import TransientError

        url = f"{self.base_url}/map"
        params = {"bbox": ",".join(f"{v:.6f}" for v in bbox)}
        for attempt in range(1, self.max_attempts + 1):
            try:
                status, body = self.transport.get(url, params=params)
            except TransientError:
                status, body = None, b""
            if status == 200:
                return body
            if status is not None and status < 500 and status != 429:
                raise OsmSourceError(f"{url}?bbox={params['bbox']}: HTTP {status}")
            log.warning("OSM attempt %d/%d failed (%s)", attempt, self.max_attempts,
                        status or "connection error")
            if attempt < self.max_attempts:
                self.sleep(self.backoff_s * 2 ** (attempt - 1))
        raise OsmSourceError(f"{url}: gave up after {self.max_attempts} attempts")

    def fetch(self, bbox):
        key = bbox_name(bbox)
        path = self.cache_dir / f"{key}.osm" if self.cache_dir else None
        if path is not None and path.exists():
            data = path.read_bytes()
        else:
            data = self._download(bbox)
            if path is not None:
                atomic_write_bytes(path, data)
        return key, parse_osm(data, sniff_format(data))
