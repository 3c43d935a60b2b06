"""HTTP JSON provider transports with recorded-transcript replay.

All remote providers (embeddings, term extraction, chat completion) speak
the same shape: POST a JSON object, get a JSON object back. The transport
is injectable so tests and offline runs replay recorded transcripts
byte-for-byte instead of touching the network.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from pathlib import Path
from typing import Callable, Protocol

from .textutil import canonical_json, request_hash

logger = logging.getLogger(__name__)


class TransportError(Exception):
    """Request could not be satisfied (network, HTTP status, or missing transcript)."""


class JsonTransport(Protocol):
    def post_json(self, url: str, payload: dict) -> dict:
        ...


class TokenBucket:
    """Simple token-bucket rate limiter; thread-safe."""

    def __init__(self, rate_per_sec: float = 10.0, capacity: float = 10.0,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.rate = rate_per_sec
        self.capacity = capacity
        self._tokens = capacity
        self._updated = clock()
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._updated) * self.rate)
                self._updated = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


class LiveTransport:
    """requests-backed transport with bearer auth and rate limiting."""

    def __init__(self, api_key: str | None = None, timeout: float = 60.0,
                 bucket: TokenBucket | None = None):
        self.api_key = api_key
        self.timeout = timeout
        self.bucket = bucket or TokenBucket()

    def post_json(self, url: str, payload: dict) -> dict:
        import requests

        self.bucket.acquire()
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = requests.post(url, json=payload, headers=headers, timeout=self.timeout)
            response.raise_for_status()
            return response.json()
        except Exception as exc:
            raise TransportError(f"POST {url} failed: {exc}") from exc


class ReplayTransport:
    """Serves responses from a transcript directory; never touches the network.

    Transcript files are named ``{request_hash}.json`` where the hash covers
    (url, payload); each file holds ``{"request": ..., "response": ...}``.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def post_json(self, url: str, payload: dict) -> dict:
        key = request_hash({"url": url, "payload": payload})
        path = self.directory / f"{key}.json"
        if not path.exists():
            raise TransportError(f"no recorded transcript for request {key} ({url})")
        return json.loads(path.read_text(encoding="utf-8"))["response"]


class RecordingTransport:
    """Wraps another transport and records every exchange for later replay."""

    def __init__(self, inner: JsonTransport, directory: str | Path):
        self.inner = inner
        self.directory = Path(directory)

    def post_json(self, url: str, payload: dict) -> dict:
        response = self.inner.post_json(url, payload)
        key = request_hash({"url": url, "payload": payload})
        self.directory.mkdir(parents=True, exist_ok=True)
        record = {"request": {"url": url, "payload": payload}, "response": response}
        (self.directory / f"{key}.json").write_text(
            canonical_json(record) + "\n", encoding="utf-8"
        )
        return response


def with_retries(call: Callable[[], dict], attempts: int = 3, base_delay: float = 0.5,
                 sleep: Callable[[float], None] = time.sleep) -> dict:
    """Run ``call`` with exponential backoff on TransportError."""
    last: TransportError | None = None
    for attempt in range(attempts):
        try:
            return call()
        except TransportError as exc:
            last = exc
            if attempt + 1 < attempts:
                delay = base_delay * (2 ** attempt)
                logger.warning("provider call failed (attempt %d/%d): %s",
                               attempt + 1, attempts, exc)
                sleep(delay)
    assert last is not None
    raise last
