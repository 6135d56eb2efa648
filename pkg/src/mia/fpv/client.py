"""Mapillary Graph API client with retries, rate limiting and an offline twin."""
from __future__ import annotations

import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from urllib.parse import urlparse

from mia.fpv.metadata import FIELDS, ImageMetadata, MetadataError, parse_image_payload
from mia.geodesy import GeoPoint, TileId, tile_bounds, wgs84_to_tile

log = logging.getLogger(__name__)

DEFAULT_API_BASE = "https://graph.mapillary.com"
TOKEN_ENV = "MIA_MAPILLARY_TOKEN"


class ClientError(RuntimeError):
    pass


class CredentialError(ClientError):
    """Rejected or missing access token; never retried."""


class TransientError(ClientError):
    pass


class PayloadError(ClientError):
    def __init__(self, message, tile=None, image_id=None):
        super().__init__(message)
        self.tile = tile
        self.image_id = image_id


class RequestsTransport:
    def __init__(self, timeout: float = 30.0):
        import requests

        self._session = requests.Session()
        self._timeout = timeout
        self._errors = (requests.ConnectionError, requests.Timeout)

    def get(self, url, params=None, headers=None):
        try:
            r = self._session.get(url, params=params, headers=headers, timeout=self._timeout)
        except self._errors as exc:
            raise TransientError(str(exc)) from exc
        return r.status_code, r.content


class RateLimiter:
    """Minimum spacing between requests to the same host."""

    def __init__(self, per_second: float | None):
        self.interval = 1.0 / per_second if per_second else 0.0
        self._next = {}
        self._lock = threading.Lock()

    def wait(self, host: str, clock=time.monotonic, sleep=time.sleep):
        if not self.interval:
            return
        with self._lock:
            now = clock()
            slot = max(now, self._next.get(host, now))
            self._next[host] = slot + self.interval
        if slot > now:
            sleep(slot - now)


class MapillaryClient:
    def __init__(self, token: str | None = None, base_url: str = DEFAULT_API_BASE,
                 transport=None, max_attempts: int = 4, backoff_s: float = 0.5,
                 rate_per_s: float | None = 10.0, sleep=time.sleep, page_limit: int = 2000):
        token = token if token is not None else os.environ.get(TOKEN_ENV)
        if not token:
            raise CredentialError(f"no Mapillary token; set {TOKEN_ENV}")
        if max_attempts < 3:
            raise ValueError("max_attempts must be at least 3")
        self.token = token
        self.base_url = base_url.rstrip("/")
        self.transport = transport or RequestsTransport()
        self.max_attempts = max_attempts
        self.backoff_s = backoff_s
        self.sleep = sleep
        self.limiter = RateLimiter(rate_per_s)
        self.page_limit = page_limit
        self.attempts = 0

    def get_json(self, url, params=None):
        headers = {"Authorization": f"OAuth {self.token}"}
        host = urlparse(url).netloc
        for attempt in range(1, self.max_attempts + 1):
            self.limiter.wait(host, sleep=self.sleep)
            self.attempts += 1
            try:
                status, body = self.transport.get(url, params=params, headers=headers)
            except TransientError as exc:
                status, body = None, str(exc).encode()
            if status in (401, 403):
                raise CredentialError(f"{url}: HTTP {status}, token rejected")
            if status is not None and 200 <= status < 300:
                try:
                    return json.loads(body)
                except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                    raise PayloadError(f"{url}: invalid JSON ({exc})") from None
            if status is not None and status < 500 and status != 429:
                raise ClientError(f"{url}: HTTP {status}")
            log.warning("attempt %d/%d for %s failed (%s)", attempt, self.max_attempts,
                        url, status or "connection error")
            if attempt < self.max_attempts:
                self.sleep(self.backoff_s * 2 ** (attempt - 1))
        raise TransientError(f"{url}: gave up after {self.max_attempts} attempts")

    def tile_image_ids(self, t: TileId) -> list:
        nw, se = tile_bounds(t)
        url = f"{self.base_url}/images"
        params = {"bbox": f"{nw.lon},{se.lat},{se.lon},{nw.lat}", "fields": "id",
                  "limit": self.page_limit}
        ids = []
        while url:
            try:
                payload = self.get_json(url, params)
            except PayloadError as exc:
                raise PayloadError(f"tile {tuple(t)}: {exc}", tile=t) from None
            if not isinstance(payload, dict) or not isinstance(payload.get("data"), list):
                raise PayloadError(f"tile {tuple(t)}: response lacks a 'data' list", tile=t)
            for item in payload["data"]:
                if not isinstance(item, dict) or "id" not in item:
                    raise PayloadError(f"tile {tuple(t)}: entry without id", tile=t)
                ids.append(str(item["id"]))
            url = (payload.get("paging") or {}).get("next")
            params = None
        return ids

    def image_payload(self, image_id: str) -> dict:
        return self.get_json(f"{self.base_url}/{image_id}", {"fields": FIELDS})

    def download(self, url: str) -> bytes:
        status, body = self.transport.get(url)
        if not 200 <= status < 300:
            raise ClientError(f"{url}: HTTP {status}")
        return body


class FixtureClient:
    """Offline client over a directory of ``<image_id>.json`` payloads."""

    def __init__(self, directory, image_dir=None):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise ClientError(f"fixture directory {self.directory} does not exist")
        self.image_dir = Path(image_dir) if image_dir else None
        self._index = None
        self._lock = threading.Lock()

    def _load_index(self):
        with self._lock:
            if self._index is None:
                index = {}
                for path in sorted(self.directory.glob("*.json")):
                    doc = json.loads(path.read_text())
                    lon, lat = doc["geometry"]["coordinates"][:2]
                    t = wgs84_to_tile(GeoPoint(lat, lon), 14)
                    index.setdefault(t, []).append(str(doc["id"]))
                self._index = index
        return self._index

    def tile_image_ids(self, t: TileId) -> list:
        if t.zoom != 14:
            raise ValueError("fixtures are indexed at zoom 14")
        return list(self._load_index().get(t, []))

    def image_payload(self, image_id: str) -> dict:
        path = self.directory / f"{image_id}.json"
        if not path.exists():
            raise ClientError(f"no fixture payload for image {image_id}")
        return json.loads(path.read_text())

    def image_bytes(self, image_id: str) -> bytes | None:
        if self.image_dir is None:
            return None
        path = self.image_dir / f"{image_id}.png"
        return path.read_bytes() if path.exists() else None


def fetch_tile_image_ids(t: TileId, client) -> list:
    """Image ids in a tile, de-duplicated, first-seen order."""
    seen, out = set(), []
    for i in client.tile_image_ids(t):
        if i not in seen:
            seen.add(i)
            out.append(i)
    return out


def fetch_image_metadata(image_id: str, client) -> ImageMetadata:
    if not image_id:
        raise ValueError("image id must be non-empty")
    payload = client.image_payload(image_id)
    try:
        return parse_image_payload(payload)
    except MetadataError as exc:
        raise PayloadError(str(exc), image_id=image_id) from exc


def fetch_all(func, items, workers: int = 8) -> list:
    """Map ``func`` over ``items`` with at most ``workers`` in flight; keeps order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
