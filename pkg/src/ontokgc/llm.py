"""HTTP client for chat-completion endpoints: triple classification through
the prompt path and raw generations for ontology extraction.

Requests are cached on disk under the SHA-256 of the request body, so a
warm cache replays byte-identical answers without touching the network.
"""
from __future__ import annotations

import enum
import hashlib
import json
import os
import re
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import httpx

from .errors import ConfigError, TransportError


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    api_key_env: str | None = "OPENAI_API_KEY"
    timeout: float = 60.0
    max_retries: int = 3
    max_concurrency: int = 4
    temperature: float = 0.0
    cache_dir: str | None = None
    path: str = "/chat/completions"
    response_path: str = "choices.0.message.content"
    backoff: float = 0.5

    def __post_init__(self):
        if not self.timeout > 0:
            raise ConfigError("timeout must be positive")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.max_concurrency < 1:
            raise ConfigError("max_concurrency must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "EndpointConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown endpoint fields: {', '.join(sorted(extra))}")
        return cls(**d)


class Label(enum.Enum):
    TRUE = "true"
    FALSE = "false"
    UNPARSEABLE = "unparseable"

    def as_bool(self):
        """``True``/``False``, or ``None`` for an abstention."""
        return {Label.TRUE: True, Label.FALSE: False}.get(self)


@dataclass(frozen=True)
class LlmAnswer:
    label: Label
    raw: str
    latency: float
    cache_hit: bool


@dataclass(frozen=True)
class Completion:
    text: str
    latency: float
    cache_hit: bool


_TOKEN = re.compile(r"\b(true|false)\b", re.IGNORECASE)


def normalize_answer(text: str) -> Label:
    """First standalone ``true``/``false`` token, case-insensitive."""
    m = _TOKEN.search(text)
    if m is None:
        return Label.UNPARSEABLE
    return Label.TRUE if m.group(1).lower() == "true" else Label.FALSE


def _dig(obj, path: str):
    for part in path.split("."):
        if isinstance(obj, list):
            obj = obj[int(part)]
        else:
            obj = obj[part]
    return obj


class DiskCache:
    """``<root>/<first 4 hex digits>/<sha256>.json``; writes are atomic renames."""

    def __init__(self, root):
        self.root = Path(root)

    def _path(self, key):
        return self.root / key[:4] / f"{key}.json"

    def get(self, key):
        p = self._path(key)
        try:
            return json.loads(p.read_text(encoding="utf-8"))["text"]
        except FileNotFoundError:
            return None

    def put(self, key, request, text):
        p = self._path(key)
        p.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=p.parent, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump({"request": request, "text": text}, fh, ensure_ascii=False, sort_keys=True)
        os.replace(tmp, p)


def request_key(url: str, body: dict) -> str:
    blob = json.dumps({"url": url, "body": body}, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class LlmClient:
    """Thread-safe client; at most ``max_concurrency`` requests are in flight."""

    def __init__(self, config: EndpointConfig, transport=None):
        self.config = config
        self._sem = threading.BoundedSemaphore(config.max_concurrency)
        self._http = httpx.Client(timeout=config.timeout, transport=transport)
        self.cache = DiskCache(config.cache_dir) if config.cache_dir else None
        self.requests_sent = 0
        self._lock = threading.Lock()

    def close(self):
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _headers(self):
        env = self.config.api_key_env
        if env is None:
            return {}
        key = os.environ.get(env)
        if not key:
            raise ConfigError(f"API key variable {env} is not set")
        return {"Authorization": f"Bearer {key}"}

    def complete(self, prompt: str) -> Completion:
        cfg = self.config
        headers = self._headers()
        url = cfg.base_url.rstrip("/") + cfg.path
        body = {"model": cfg.model, "temperature": cfg.temperature,
                "messages": [{"role": "user", "content": prompt}]}
        key = request_key(url, body)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return Completion(hit, 0.0, True)
        start = time.perf_counter()
        text = self._post(url, body, headers)
        latency = time.perf_counter() - start
        if self.cache is not None:
            self.cache.put(key, body, text)
        return Completion(text, latency, False)

    def _post(self, url, body, headers):
        cfg = self.config
        last = None
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                time.sleep(cfg.backoff * 2 ** (attempt - 1))
            try:
                with self._sem:
                    with self._lock:
                        self.requests_sent += 1
                    resp = self._http.post(url, json=body, headers=headers)
            except httpx.HTTPError as exc:
                last = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise TransportError(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
            try:
                text = _dig(resp.json(), cfg.response_path)
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise TransportError(f"response lacks {cfg.response_path!r}: {exc}") from None
            if not isinstance(text, str):
                raise TransportError(f"{cfg.response_path!r} is not a string")
            return text
        raise TransportError(f"{url} failed after {cfg.max_retries + 1} attempts ({last})")


def _client(config, client):
    return client if client is not None else LlmClient(config)


def classify_with_llm(config: EndpointConfig, bundle, client: LlmClient | None = None) -> LlmAnswer:
    """Send the prompt sequence and normalise the reply to True/False/Unparseable."""
    own = client is None
    client = _client(config, client)
    try:
        comp = client.complete(bundle.sequence)
    finally:
        if own:
            client.close()
    return LlmAnswer(normalize_answer(comp.text), comp.text, comp.latency, comp.cache_hit)


def classify_many_with_llm(config: EndpointConfig, bundles, client: LlmClient | None = None) -> list[LlmAnswer]:
    """Parallel classification; answers come back in input order."""
    own = client is None
    client = _client(config, client)
    try:
        with ThreadPoolExecutor(max_workers=config.max_concurrency) as pool:
            return list(pool.map(lambda b: classify_with_llm(config, b, client), bundles))
    finally:
        if own:
            client.close()


def generate_ontology_text(config: EndpointConfig, summary: str, template: str,
                           client: LlmClient | None = None) -> Completion:
    """Fill ``{summary}`` in the template (or append the summary) and return the raw completion."""
    if not template or not template.strip():
        raise ConfigError("ontology prompt template is empty")
    prompt = template.replace("{summary}", summary) if "{summary}" in template else template + "\n" + summary
    own = client is None
    client = _client(config, client)
    try:
        return client.complete(prompt)
    finally:
        if own:
            client.close()
