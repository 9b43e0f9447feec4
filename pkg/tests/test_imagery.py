from __future__ import annotations

import io
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import numpy as np
import pytest
from PIL import Image

from curbscan.geo import ImageRequest, SamplePoint
from curbscan.imagery import (DecodeError, HttpError, ImageRecord, QuotaExceeded,
                              RateLimiter, ImageClient, encode_png, load_local)


def make_request(heading: int = 0, lat: float = 34.5, lon: float = -79.1) -> ImageRequest:
    sample = SamplePoint(road_id="r", index=0, position=(lat, lon), arclength_m=0.0)
    return ImageRequest(sample=sample, heading_deg=heading)


def png_bytes(shade: int, size: int = 640) -> bytes:
    arr = np.full((size, size, 3), shade, dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


class StubImagery(BaseHTTPRequestHandler):
    """Serves one PNG per heading; /deny 403s forever; /flaky 500s once."""

    hits: list[tuple[float, str]] = []
    flaky_remaining = 0
    pngs = {h: png_bytes(40 + h // 2) for h in (0, 90, 180, 270)}

    def do_GET(self):
        type(self).hits.append((time.monotonic(), self.path))
        parsed = urlparse(self.path)
        if parsed.path == "/deny":
            self.send_response(403)
            self.end_headers()
            return
        if parsed.path == "/missing":
            self.send_response(404)
            self.end_headers()
            return
        if parsed.path == "/garbage":
            self._send(200, b"this is not a png")
            return
        if parsed.path == "/tiny":
            self._send(200, png_bytes(10, size=32))
            return
        if parsed.path == "/flaky" and type(self).flaky_remaining > 0:
            type(self).flaky_remaining -= 1
            self.send_response(500)
            self.end_headers()
            return
        heading = int(parse_qs(parsed.query).get("heading", ["0"])[0])
        self._send(200, type(self).pngs[heading])

    def _send(self, status: int, payload: bytes):
        self.send_response(status)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture(scope="module")
def stub_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), StubImagery)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


def make_client(base_url: str, cache_dir, path: str = "/image", **kwargs) -> ImageClient:
    template = (f"{base_url}{path}?lat={{lat}}&lon={{lon}}"
                "&heading={heading}&size={size}&key={key}")
    defaults = dict(api_key="k", cache_dir=cache_dir, rate_limit_per_s=1000,
                    sleep=lambda s: None)
    defaults.update(kwargs)
    return ImageClient(endpoint_template=template, **defaults)


class TestFetch:
    def test_fetch_decodes_and_caches(self, stub_server, tmp_path):
        client = make_client(stub_server, tmp_path)
        record = client.fetch(make_request())
        assert record.pixels.shape == (640, 640, 3)
        assert record.source == "remote"
        assert (tmp_path / "images" / f"{record.image_id}.png").exists()
        assert (tmp_path / "images" / f"{record.image_id}.json").exists()

    def test_cache_hit_skips_network(self, stub_server, tmp_path):
        client = make_client(stub_server, tmp_path)
        request = make_request(heading=90)
        first = client.fetch(request)
        StubImagery.hits.clear()
        second = client.fetch(request)
        assert StubImagery.hits == []
        assert np.array_equal(first.pixels, second.pixels)

    def test_cache_round_trip_new_client(self, stub_server, tmp_path):
        request = make_request(heading=180)
        first = make_client(stub_server, tmp_path).fetch(request)
        # fresh client, same cache dir: must serve identical bytes offline
        offline = make_client("http://127.0.0.1:1", tmp_path)
        second = offline.fetch(request)
        assert np.array_equal(first.pixels, second.pixels)
        assert first.image_id == second.image_id

    def test_distinct_headings_distinct_digests(self, stub_server, tmp_path):
        client = make_client(stub_server, tmp_path)
        a = client.fetch(make_request(heading=0))
        b = client.fetch(make_request(heading=90))
        assert a.image_id != b.image_id

    def test_403_exhausts_retries_then_quota(self, stub_server, tmp_path):
        client = make_client(stub_server, tmp_path, path="/deny", retries=3)
        StubImagery.hits.clear()
        with pytest.raises(QuotaExceeded):
            client.fetch(make_request())
        assert len(StubImagery.hits) == 4  # initial try + 3 retries

    def test_404_raises_http_error(self, stub_server, tmp_path):
        client = make_client(stub_server, tmp_path, path="/missing")
        with pytest.raises(HttpError) as err:
            client.fetch(make_request())
        assert err.value.status == 404

    def test_500_retries_then_succeeds(self, stub_server, tmp_path):
        StubImagery.flaky_remaining = 1
        client = make_client(stub_server, tmp_path, path="/flaky")
        record = client.fetch(make_request())
        assert record.pixels.shape == (640, 640, 3)

    def test_garbage_payload_decode_error(self, stub_server, tmp_path):
        client = make_client(stub_server, tmp_path, path="/garbage")
        with pytest.raises(DecodeError):
            client.fetch(make_request())

    def test_wrong_size_decode_error(self, stub_server, tmp_path):
        client = make_client(stub_server, tmp_path, path="/tiny")
        with pytest.raises(DecodeError):
            client.fetch(make_request())

    def test_template_placeholders_validated(self, tmp_path):
        with pytest.raises(ValueError, match="placeholders"):
            ImageClient(endpoint_template="http://x/{lat}", api_key="k",
                        cache_dir=tmp_path)


class TestRateLimiter:
    def test_fake_clock_window_bound(self):
        clock_now = [0.0]
        sleeps: list[float] = []

        def sleep(seconds):
            sleeps.append(seconds)
            clock_now[0] += seconds

        limiter = RateLimiter(3, clock=lambda: clock_now[0], sleep=sleep)
        stamps = []
        for _ in range(10):
            limiter.acquire()
            stamps.append(clock_now[0])
        for i in range(len(stamps)):
            window = [s for s in stamps if stamps[i] <= s < stamps[i] + 1.0]
            assert len(window) <= 3
        assert sleeps  # the limiter actually had to wait

    def test_limiter_against_stub_server(self, stub_server, tmp_path):
        rate = 20
        client = make_client(stub_server, tmp_path / "rl", rate_limit_per_s=rate,
                             sleep=time.sleep)
        send_times = []
        lock = threading.Lock()
        original = client._session.get

        def timed_get(url, **kwargs):
            with lock:
                send_times.append(time.monotonic())
            return original(url, **kwargs)

        client._session.get = timed_get
        requests = [make_request(heading=h, lat=30 + i, lon=-79)
                    for i in range(8) for h in (0, 90, 180, 270)]
        with ThreadPoolExecutor(max_workers=4) as pool:
            list(pool.map(client.fetch, requests))
        send_times.sort()
        # 0.99 s window: immune to microsecond jitter between the limiter
        # grant and the recorded send, still fails for an unpaced client
        for i, t0 in enumerate(send_times):
            in_window = sum(1 for t in send_times[i:] if t < t0 + 0.99)
            assert in_window <= rate

    def test_rate_must_be_positive(self):
        with pytest.raises(ValueError):
            RateLimiter(0)


class TestLoadLocal:
    def test_empty_directory(self, tmp_path):
        result = load_local(tmp_path)
        assert list(result) == [] and result.skipped == 0

    def test_bundled_fixture_images(self, fixtures_dir):
        result = load_local(fixtures_dir / "images")
        assert len(result) == 20
        assert result.skipped == 0
        names = [r.source_path.name for r in result]
        assert names == sorted(names)
        again = load_local(fixtures_dir / "images")
        assert [r.image_id for r in again] == [r.image_id for r in result]

    def test_corrupt_file_isolated(self, tmp_path):
        (tmp_path / "ok1.png").write_bytes(png_bytes(10, size=8))
        (tmp_path / "ok2.png").write_bytes(png_bytes(20, size=8))
        (tmp_path / "broken.png").write_bytes(b"nope")
        result = load_local(tmp_path)
        assert len(result) == 2
        assert result.skipped == 1

    def test_unreadable_directory(self, tmp_path):
        with pytest.raises(OSError):
            load_local(tmp_path / "missing")


class TestImageRecord:
    def test_digest_is_of_pixel_bytes(self):
        arr = np.zeros((4, 4, 3), dtype=np.uint8)
        a = ImageRecord.from_pixels(arr, "local")
        b = ImageRecord.from_pixels(arr.copy(), "local")
        assert a.image_id == b.image_id
        arr2 = arr.copy()
        arr2[0, 0, 0] = 1
        assert ImageRecord.from_pixels(arr2, "local").image_id != a.image_id

    def test_shape_validated(self):
        with pytest.raises(ValueError):
            ImageRecord.from_pixels(np.zeros((4, 4), dtype=np.uint8), "local")

    def test_png_encode_round_trip(self):
        rng = np.random.default_rng(3)
        arr = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        encoded = encode_png(arr)
        decoded = np.asarray(Image.open(io.BytesIO(encoded)).convert("RGB"))
        assert np.array_equal(arr, decoded)
