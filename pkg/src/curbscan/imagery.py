"""Street imagery acquisition: HTTP fetch with a content-addressed disk
cache and a rate limiter, plus local-folder loading for offline runs.

Cache layout under the cache directory:

    images/<image_id>.png      decoded pixels, PNG re-encoded (lossless)
    images/<image_id>.json     sidecar with the originating request
    requests/<request_key>.txt maps a request digest to its image_id

The request index is what makes cache hits possible before the pixel
digest is known.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import requests as requests_lib
from PIL import Image, UnidentifiedImageError

from .geo import COORD_DECIMALS, ImageRequest

logger = logging.getLogger(__name__)

DEFAULT_RETRIES = 3
BACKOFF_BASE_S = 0.5
DEFAULT_IN_FLIGHT = 4

_PLACEHOLDERS = ("{lat}", "{lon}", "{heading}", "{size}", "{key}")


class ImageryError(Exception):
    pass


class HttpError(ImageryError):
    def __init__(self, status: int, message: str = ""):
        self.status = status
        super().__init__(f"HTTP {status}: {message}" if message else f"HTTP {status}")


class DecodeError(ImageryError):
    """Response payload was not a decodable image of the requested size."""


class QuotaExceeded(ImageryError):
    """Provider kept refusing (403/429) after the retry budget ran out."""


@dataclass(frozen=True)
class ImageRecord:
    """A decoded image plus its identity (digest of the raw pixel bytes)."""

    image_id: str
    source: str  # "remote" | "local"
    pixels: np.ndarray
    request: Optional[ImageRequest] = None
    source_path: Optional[Path] = None

    @classmethod
    def from_pixels(cls, pixels: np.ndarray, source: str,
                    request: Optional[ImageRequest] = None,
                    source_path: Optional[Path] = None) -> "ImageRecord":
        arr = np.ascontiguousarray(pixels, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected HxWx3 pixels, got shape {arr.shape}")
        digest = hashlib.sha256(arr.tobytes()).hexdigest()
        return cls(image_id=digest, source=source, pixels=arr,
                   request=request, source_path=source_path)


class LoadResult(Sequence):
    """Records loaded from a folder plus how many files were skipped."""

    def __init__(self, records: list[ImageRecord], skipped: int):
        self.records = records
        self.skipped = skipped

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, idx):
        return self.records[idx]


class RateLimiter:
    """Sliding-window limiter: at most `rate` acquisitions per second.

    Thread-safe. The clock and sleep hooks exist so tests can drive it
    deterministically.
    """

    def __init__(self, rate_per_s: float,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if rate_per_s <= 0:
            raise ValueError("rate must be positive")
        self.rate = int(rate_per_s)
        self._clock = clock
        self._sleep = sleep
        self._stamps: list[float] = []
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._stamps = [t for t in self._stamps if now - t < 1.0]
                if len(self._stamps) < self.rate:
                    self._stamps.append(now)
                    return
                wait = 1.0 - (now - self._stamps[0])
            self._sleep(max(wait, 0.001))


def _decode_image(payload: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(payload)) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"payload is not a decodable image: {exc}") from exc


def encode_png(pixels: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def _request_key(request: ImageRequest) -> str:
    lat, lon = request.sample.position
    raw = "|".join([
        f"{lat:.{COORD_DECIMALS}f}",
        f"{lon:.{COORD_DECIMALS}f}",
        str(request.heading_deg),
        f"{request.width_px}x{request.height_px}",
    ])
    return hashlib.sha256(raw.encode()).hexdigest()


class ImageClient:
    """Fetches imagery over HTTP, caching decoded frames on disk.

    Shareable across threads; the cache and rate limiter are internally
    synchronized, and at most `in_flight` requests are outstanding at once.
    """

    def __init__(self, endpoint_template: str, api_key: str,
                 cache_dir: str | Path,
                 rate_limit_per_s: float = 10.0,
                 retries: int = DEFAULT_RETRIES,
                 timeout_s: float = 30.0,
                 in_flight: int = DEFAULT_IN_FLIGHT,
                 session: Optional[requests_lib.Session] = None,
                 sleep: Callable[[float], None] = time.sleep,
                 rng: Optional[random.Random] = None):
        missing = [p for p in _PLACEHOLDERS if p not in endpoint_template]
        if missing:
            raise ValueError(f"endpoint template missing placeholders: {missing}")
        self.endpoint_template = endpoint_template
        self.api_key = api_key
        self.cache_dir = Path(cache_dir)
        (self.cache_dir / "images").mkdir(parents=True, exist_ok=True)
        (self.cache_dir / "requests").mkdir(parents=True, exist_ok=True)
        self.retries = retries
        self.timeout_s = timeout_s
        self._limiter = RateLimiter(rate_limit_per_s)
        self._session = session or requests_lib.Session()
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._inflight = threading.Semaphore(in_flight)
        self._cache_lock = threading.Lock()

    # -- cache ------------------------------------------------------------

    def cached(self, request: ImageRequest) -> Optional[ImageRecord]:
        """Cache lookup without any network fallback."""
        return self._cached(request)

    def _cached(self, request: ImageRequest) -> Optional[ImageRecord]:
        key_file = self.cache_dir / "requests" / f"{_request_key(request)}.txt"
        if not key_file.exists():
            return None
        image_id = key_file.read_text().strip()
        png = self.cache_dir / "images" / f"{image_id}.png"
        if not png.exists():
            return None
        pixels = _decode_image(png.read_bytes())
        return ImageRecord(image_id=image_id, source="remote",
                           pixels=pixels, request=request)

    def _store(self, request: ImageRequest, record: ImageRecord) -> None:
        with self._cache_lock:
            png = self.cache_dir / "images" / f"{record.image_id}.png"
            if not png.exists():
                png.write_bytes(encode_png(record.pixels))
            sidecar = self.cache_dir / "images" / f"{record.image_id}.json"
            lat, lon = request.sample.position
            sidecar.write_text(json.dumps({
                "road_id": request.sample.road_id,
                "index": request.sample.index,
                "lat": round(lat, COORD_DECIMALS),
                "lon": round(lon, COORD_DECIMALS),
                "heading": request.heading_deg,
                "width": request.width_px,
                "height": request.height_px,
            }, sort_keys=True))
            key_file = self.cache_dir / "requests" / f"{_request_key(request)}.txt"
            key_file.write_text(record.image_id)

    # -- fetch ------------------------------------------------------------

    def _url(self, request: ImageRequest) -> str:
        lat, lon = request.sample.position
        return (self.endpoint_template
                .replace("{lat}", f"{lat:.{COORD_DECIMALS}f}")
                .replace("{lon}", f"{lon:.{COORD_DECIMALS}f}")
                .replace("{heading}", str(request.heading_deg))
                .replace("{size}", f"{request.width_px}x{request.height_px}")
                .replace("{key}", self.api_key))

    def fetch(self, request: ImageRequest) -> ImageRecord:
        """Return the image for a request, hitting the network only on a
        cache miss. Raises QuotaExceeded once 403/429 retries run out,
        HttpError for other failures, DecodeError for bad payloads."""
        cached = self._cached(request)
        if cached is not None:
            return cached

        url = self._url(request)
        throttled = 0
        with self._inflight:
            for attempt in range(self.retries + 1):
                self._limiter.acquire()
                try:
                    resp = self._session.get(url, timeout=self.timeout_s)
                except requests_lib.RequestException as exc:
                    raise HttpError(0, str(exc)) from exc
                if resp.status_code in (403, 429):
                    throttled = resp.status_code
                elif 500 <= resp.status_code < 600:
                    throttled = 0
                elif resp.status_code >= 300:
                    raise HttpError(resp.status_code, resp.reason or "")
                else:
                    pixels = _decode_image(resp.content)
                    h, w = pixels.shape[:2]
                    if (w, h) != (request.width_px, request.height_px):
                        raise DecodeError(
                            f"expected {request.width_px}x{request.height_px}, got {w}x{h}")
                    record = ImageRecord.from_pixels(pixels, "remote", request=request)
                    self._store(request, record)
                    return record
                if attempt < self.retries:
                    backoff = BACKOFF_BASE_S * (2 ** attempt) * (1 + self._rng.random() * 0.25)
                    logger.warning("fetch got HTTP %d, retry %d/%d in %.2fs",
                                   resp.status_code, attempt + 1, self.retries, backoff)
                    self._sleep(backoff)
        if throttled:
            raise QuotaExceeded(f"gave up after {self.retries} retries (HTTP {throttled})")
        raise HttpError(resp.status_code, "retries exhausted")

    def fetch_many(self, requests: Sequence[ImageRequest]) -> list[ImageRecord]:
        """Fetch sequentially in request order (the limiter and in-flight
        bound still apply when callers parallelize with threads)."""
        return [self.fetch(r) for r in requests]


def load_local(directory: str | Path) -> LoadResult:
    """Load every decodable image in a directory, sorted by filename.

    Files that fail to decode are skipped and counted; an unreadable
    directory raises OSError.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    records: list[ImageRecord] = []
    skipped = 0
    for path in sorted(p for p in directory.iterdir() if p.is_file()):
        try:
            pixels = _decode_image(path.read_bytes())
        except DecodeError:
            logger.warning("skipping undecodable file: %s", path.name)
            skipped += 1
            continue
        records.append(ImageRecord.from_pixels(pixels, "local", source_path=path))
    return LoadResult(records, skipped)
