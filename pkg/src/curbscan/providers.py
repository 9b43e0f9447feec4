"""Uniform access to vision-chat providers.

One generic HTTP client covers the hosted providers — they differ in
request envelope and auth header, not in semantics — configured by a JSON
spec (endpoint, auth env var, body template, response path). Images
travel base64-inline. A deterministic mock provider answers from ground
truth plus per-indicator hit rates so the whole pipeline runs offline.

Every query is recorded in an append-only JSON-lines cache keyed by
(provider, model, image digest, prompt digest, params digest); repeats
are served from the cache.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Protocol, Sequence

import requests as requests_lib

from .imagery import ImageRecord, encode_png
from .indicators import Indicator, IndicatorVector, QUESTION_ORDER

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 1.0
DEFAULT_TOP_P = 0.95
DEFAULT_MAX_TOKENS = 64
DEFAULT_TIMEOUT_S = 60.0
DEFAULT_CONCURRENCY = 2


class ProviderError(Exception):
    pass


class HttpError(ProviderError):
    def __init__(self, status: int, message: str = ""):
        self.status = status
        super().__init__(f"HTTP {status}: {message}" if message else f"HTTP {status}")


class Timeout(ProviderError):
    pass


class MalformedResponse(ProviderError):
    """Response body was not JSON or the configured path found no text."""


@dataclass(frozen=True)
class ProviderParams:
    model_id: str = "default"
    temperature: float = DEFAULT_TEMPERATURE
    top_p: float = DEFAULT_TOP_P
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be positive, got {self.max_tokens}")

    def digest(self) -> str:
        raw = json.dumps({
            "model": self.model_id,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
        }, sort_keys=True)
        return hashlib.sha256(raw.encode()).hexdigest()


@dataclass(frozen=True)
class ProviderResponse:
    raw_text: str
    latency_ms: int
    provider_id: str
    cached: bool = False


class Provider(Protocol):
    provider_id: str

    def raw_query(self, image: ImageRecord, prompt: str, params: ProviderParams) -> str: ...


def cache_key(provider_id: str, params: ProviderParams,
              image: ImageRecord, prompt: str) -> str:
    prompt_digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
    raw = "|".join([provider_id, params.model_id, image.image_id,
                    prompt_digest, params.digest()])
    return hashlib.sha256(raw.encode()).hexdigest()


class ResponseCache:
    """Append-only JSONL of every provider response, indexed in memory."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._index: dict[str, str] = {}
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                record = json.loads(line)
                self._index[record["key"]] = record["raw_text"]
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def get(self, key: str) -> Optional[str]:
        with self._lock:
            return self._index.get(key)

    def put(self, key: str, raw_text: str, provider_id: str, model_id: str,
            image_id: str, latency_ms: int) -> None:
        record = {
            "key": key,
            "provider_id": provider_id,
            "model_id": model_id,
            "image_id": image_id,
            "raw_text": raw_text,
            "latency_ms": latency_ms,
            "ts": time.time(),
        }
        with self._lock:
            self._index[key] = raw_text
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


class Gateway:
    """Wraps one provider with the response cache and a concurrency bound."""

    def __init__(self, provider: Provider, cache: Optional[ResponseCache] = None,
                 max_concurrency: int = DEFAULT_CONCURRENCY):
        self.provider = provider
        self.cache = cache
        self._slots = threading.Semaphore(max_concurrency)

    def query(self, image: ImageRecord, prompt: str,
              params: ProviderParams) -> ProviderResponse:
        if not prompt:
            raise ValueError("prompt must be nonempty")
        key = cache_key(self.provider.provider_id, params, image, prompt)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return ProviderResponse(raw_text=hit, latency_ms=0,
                                        provider_id=self.provider.provider_id, cached=True)
        with self._slots:
            start = time.monotonic()
            raw_text = self.provider.raw_query(image, prompt, params)
            latency_ms = int((time.monotonic() - start) * 1000)
        if self.cache is not None:
            self.cache.put(key, raw_text, self.provider.provider_id,
                           params.model_id, image.image_id, latency_ms)
        return ProviderResponse(raw_text=raw_text, latency_ms=latency_ms,
                                provider_id=self.provider.provider_id, cached=False)


# -- generic HTTP chat provider -------------------------------------------


@dataclass
class HttpProviderSpec:
    provider_id: str
    endpoint: str
    request_template: dict
    response_path: list
    auth_env: str = ""
    auth_header: str = "Authorization"
    auth_format: str = "Bearer {key}"
    extra_headers: dict = field(default_factory=dict)
    timeout_s: float = DEFAULT_TIMEOUT_S

    @classmethod
    def from_file(cls, path: str | Path) -> "HttpProviderSpec":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**data)


def _substitute(node, values: Mapping[str, object]):
    """Fill {{placeholders}} in a JSON template. A string that is exactly
    one placeholder takes the raw value (keeping numbers numeric);
    otherwise placeholders are spliced in as text."""
    if isinstance(node, dict):
        return {k: _substitute(v, values) for k, v in node.items()}
    if isinstance(node, list):
        return [_substitute(v, values) for v in node]
    if isinstance(node, str):
        if node.startswith("{{") and node.endswith("}}") and node.count("{{") == 1:
            name = node[2:-2]
            if name in values:
                return values[name]
        out = node
        for name, value in values.items():
            out = out.replace("{{" + name + "}}", str(value))
        return out
    return node


class HttpChatProvider:
    def __init__(self, spec: HttpProviderSpec,
                 session: Optional[requests_lib.Session] = None):
        self.spec = spec
        self.provider_id = spec.provider_id
        self._session = session or requests_lib.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json", **self.spec.extra_headers}
        if self.spec.auth_env:
            key = os.environ.get(self.spec.auth_env, "")
            if not key:
                raise ProviderError(f"auth env var {self.spec.auth_env} is not set")
            headers[self.spec.auth_header] = self.spec.auth_format.format(key=key)
        return headers

    def raw_query(self, image: ImageRecord, prompt: str, params: ProviderParams) -> str:
        body = _substitute(self.spec.request_template, {
            "prompt": prompt,
            "image_base64": base64.b64encode(encode_png(image.pixels)).decode("ascii"),
            "image_media_type": "image/png",
            "model": params.model_id,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
        })
        try:
            resp = self._session.post(self.spec.endpoint, json=body,
                                      headers=self._headers(),
                                      timeout=self.spec.timeout_s)
        except requests_lib.Timeout as exc:
            raise Timeout(f"no response within {self.spec.timeout_s}s") from exc
        except requests_lib.RequestException as exc:
            raise HttpError(0, str(exc)) from exc
        if not 200 <= resp.status_code < 300:
            raise HttpError(resp.status_code, resp.text[:200])
        try:
            data = resp.json()
        except ValueError as exc:
            raise MalformedResponse(f"not JSON: {resp.text[:200]}") from exc
        node = data
        for step in self.spec.response_path:
            try:
                node = node[step]
            except (KeyError, IndexError, TypeError) as exc:
                raise MalformedResponse(
                    f"response path {self.spec.response_path} failed at {step!r}") from exc
        if not isinstance(node, str):
            raise MalformedResponse(f"response leaf is {type(node).__name__}, not text")
        return node


# -- deterministic mock provider -------------------------------------------

# Substrings used to recognize which question(s) a prompt is asking.
_KEYWORDS: dict[Indicator, tuple[str, ...]] = {
    Indicator.MULTILANE_ROAD: ("multi-lane", "multi lane", "multilane", "varios carriles"),
    Indicator.SINGLE_LANE_ROAD: ("single-lane", "single lane", "un solo carril"),
    Indicator.SIDEWALK: ("sidewalk", "acera"),
    Indicator.STREETLIGHT: ("streetlight", "street light", "alumbrado"),
    Indicator.POWERLINE: ("power line", "powerline", "cable"),
    Indicator.APARTMENT: ("apartment", "apartamento"),
}


@dataclass(frozen=True)
class MockBehavior:
    """Per-indicator (true-positive rate, true-negative rate) plus a seed.

    Optional sequential_rates let single-question prompts behave
    differently from the six-question prompt.
    """

    rates: Mapping[Indicator, tuple[float, float]]
    rng_seed: int = 0
    sequential_rates: Optional[Mapping[Indicator, tuple[float, float]]] = None

    def __post_init__(self) -> None:
        for table in (self.rates, self.sequential_rates or {}):
            for ind, (tpr, tnr) in table.items():
                if not (0.0 <= tpr <= 1.0 and 0.0 <= tnr <= 1.0):
                    raise ValueError(f"rates for {ind.code} out of [0, 1]: {(tpr, tnr)}")

    @classmethod
    def uniform(cls, tpr: float, tnr: float, rng_seed: int = 0) -> "MockBehavior":
        return cls(rates={i: (tpr, tnr) for i in Indicator}, rng_seed=rng_seed)


class MockProvider:
    """Answers from ground truth corrupted by the behavior's rates.

    Pure function of (seed, image id, ground truth, rates): the yes/no
    draw for an indicator is keyed on a digest, so transcripts are
    reproducible regardless of query order or caching.
    """

    def __init__(self, provider_id: str, behavior: MockBehavior,
                 truth: Mapping[str, IndicatorVector]):
        self.provider_id = provider_id
        self.behavior = behavior
        self.truth = dict(truth)

    def _unit(self, image_id: str, indicator: Indicator) -> float:
        raw = f"{self.behavior.rng_seed}|{image_id}|{indicator.code}"
        digest = hashlib.sha256(raw.encode()).digest()
        return int.from_bytes(digest[:8], "big") / 2.0 ** 64

    def _answer(self, image_id: str, indicator: Indicator, sequential: bool) -> bool:
        truth = self.truth[image_id][indicator]
        table = self.behavior.rates
        if sequential and self.behavior.sequential_rates is not None:
            table = self.behavior.sequential_rates
        tpr, tnr = table[indicator]
        rate = tpr if truth else tnr
        correct = self._unit(image_id, indicator) < rate
        return truth if correct else not truth

    def raw_query(self, image: ImageRecord, prompt: str, params: ProviderParams) -> str:
        if image.image_id not in self.truth:
            raise ProviderError(f"mock has no ground truth for image {image.image_id[:12]}")
        lowered = prompt.lower()
        asked = [i for i in QUESTION_ORDER
                 if any(k in lowered for k in _KEYWORDS[i])]
        if len(asked) == 1:
            bit = self._answer(image.image_id, asked[0], sequential=True)
            return "Yes" if bit else "No"
        # everything else is treated as the six-question prompt
        bits = [self._answer(image.image_id, i, sequential=False) for i in QUESTION_ORDER]
        return ", ".join("Yes" if b else "No" for b in bits)


# -- parameter sweep --------------------------------------------------------


def sweep(gateway: Gateway, params_grid: Sequence[ProviderParams],
          items: Sequence[tuple[ImageRecord, str]],
          out_dir: str | Path) -> dict:
    """Run every (image, prompt) item once per grid cell.

    One directory per cell, each with a manifest of cache keys; per-cell
    errors are recorded and the remaining cells still run.
    """
    if not params_grid:
        raise ValueError("parameter grid is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"cells": []}
    for idx, params in enumerate(params_grid):
        slug = f"cell_{idx:02d}_t{params.temperature}_p{params.top_p}"
        cell_dir = out_dir / slug
        cell_dir.mkdir(exist_ok=True)
        keys, errors = [], []
        for image, prompt in items:
            try:
                gateway.query(image, prompt, params)
                keys.append(cache_key(gateway.provider.provider_id, params, image, prompt))
            except ProviderError as exc:
                errors.append(f"{image.image_id[:12]}: {exc}")
                logger.warning("sweep cell %s: %s", slug, exc)
        cell = {
            "params": {"model": params.model_id, "temperature": params.temperature,
                       "top_p": params.top_p, "max_tokens": params.max_tokens},
            "dir": slug,
            "cache_keys": keys,
            "errors": errors,
        }
        (cell_dir / "manifest.json").write_text(json.dumps(cell, indent=2, sort_keys=True))
        manifest["cells"].append(cell)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest
