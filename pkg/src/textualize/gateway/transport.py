"""Transports move one JSON request to a backend and bring back one JSON response.

``HttpTransport`` talks to a live service, ``FixtureTransport`` replays recorded
responses, and ``RecordingTransport`` captures a live (or synthetic) backend
into a fixture directory.  ``Endpoint`` wraps any transport with retries, a
concurrency cap and call counters.
"""

from __future__ import annotations

import json
import logging
import os
import random
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Protocol

import httpx

from .errors import BackendRefusal, FixtureMissing, TransportError
from .wire import canonical_json, digest, image_key, image_payload, substitute_images

log = logging.getLogger(__name__)


class Transport(Protocol):
    def call(self, kind: str, request: dict[str, Any]) -> dict[str, Any]: ...


def fixture_key(kind: str, request: dict[str, Any]) -> dict[str, Any]:
    return {"kind": kind, "request": substitute_images(request, image_key)}


def raise_wire_error(error: Any, status: int | None = None) -> None:
    """Map an ``{"error": ...}`` body onto the exception hierarchy."""
    if isinstance(error, dict):
        code = str(error.get("code") or error.get("type") or "error")
        message = str(error.get("message", ""))
        retryable = bool(error.get("retryable", False))
    else:
        code, message, retryable = "error", str(error), False
    if retryable or (status is not None and (status == 429 or status >= 500)):
        raise TransportError(f"{code}: {message}" if message else code)
    raise BackendRefusal(code, message)


class HttpTransport:
    """POST the request as JSON to a single URL."""

    def __init__(self, url: str, timeout: float = 60.0, client: httpx.Client | None = None):
        self.url = url
        self._client = client or httpx.Client(timeout=timeout)

    def call(self, kind: str, request: dict[str, Any]) -> dict[str, Any]:
        body = substitute_images(request, image_payload)
        try:
            response = self._client.post(self.url, json=body)
        except httpx.HTTPError as exc:
            raise TransportError(f"{kind} request to {self.url} failed: {exc}") from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransportError(f"{kind} backend returned HTTP {response.status_code}")
        try:
            payload = response.json()
        except ValueError as exc:
            raise TransportError(f"{kind} backend returned non-JSON body") from exc
        if response.status_code >= 400 or (isinstance(payload, dict) and "error" in payload):
            raise_wire_error(payload.get("error", payload) if isinstance(payload, dict) else payload,
                             response.status_code)
        return payload

    def close(self) -> None:
        self._client.close()


class FixtureTransport:
    """Replay responses stored as ``<dir>/calls/<digest>.json``."""

    def __init__(self, directory: str | os.PathLike):
        self.directory = Path(directory)

    def path_for(self, kind: str, request: dict[str, Any]) -> tuple[str, Path]:
        key = digest(fixture_key(kind, request))
        return key, self.directory / "calls" / f"{key}.json"

    def call(self, kind: str, request: dict[str, Any]) -> dict[str, Any]:
        key, path = self.path_for(kind, request)
        if not path.exists():
            raise FixtureMissing(kind, key)
        entry = json.loads(path.read_text(encoding="utf-8"))
        if "error" in entry:
            raise_wire_error(entry["error"])
        return entry["response"]


class RecordingTransport:
    """Forward to ``inner`` and store every successful response as a fixture file."""

    def __init__(self, inner: Transport, directory: str | os.PathLike):
        self.inner = inner
        self.fixtures = FixtureTransport(directory)

    def call(self, kind: str, request: dict[str, Any]) -> dict[str, Any]:
        response = self.inner.call(kind, request)
        _, path = self.fixtures.path_for(kind, request)
        entry = {**fixture_key(kind, request), "response": response}
        atomic_write_text(path, canonical_json(entry))
        return response


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True)
class RetryPolicy:
    retry_limit: int = 3
    base_delay: float = 0.5
    factor: float = 2.0
    jitter: float = 0.5

    def delay(self, retry_index: int, rng: random.Random) -> float:
        nominal = self.base_delay * self.factor**retry_index
        return nominal * (1.0 + rng.uniform(-self.jitter, self.jitter))


class Endpoint:
    """A transport plus retries, a concurrency cap and call accounting.

    ``calls`` counts logical requests; ``attempts`` counts every try including
    retries.  Both are safe to read while calls are in flight.
    """

    def __init__(
        self,
        transport: Transport,
        name: str = "",
        policy: RetryPolicy | None = None,
        max_concurrency: int = 4,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        self.transport = transport
        self.name = name
        self.policy = policy or RetryPolicy()
        self._slots = threading.BoundedSemaphore(max(1, max_concurrency))
        self._lock = threading.Lock()
        self._sleep = sleep
        self._rng = rng or random.Random()
        self.calls = 0
        self.attempts = 0
        self.attempt_log: list[tuple[str, str]] = []

    def call(self, kind: str, request: dict[str, Any]) -> dict[str, Any]:
        with self._lock:
            self.calls += 1
        with self._slots:
            retry = 0
            while True:
                with self._lock:
                    self.attempts += 1
                try:
                    response = self.transport.call(kind, request)
                except TransportError as exc:
                    self._log(kind, f"error: {exc}")
                    if retry >= self.policy.retry_limit:
                        raise TransportError(f"{kind} failed after {retry + 1} attempt(s): {exc}") from exc
                    with self._lock:
                        delay = self.policy.delay(retry, self._rng)
                    log.warning("%s %s attempt %d failed (%s); retrying in %.2fs", self.name, kind, retry + 1, exc, delay)
                    self._sleep(delay)
                    retry += 1
                    continue
                self._log(kind, "ok")
                return response

    def _log(self, kind: str, outcome: str) -> None:
        with self._lock:
            self.attempt_log.append((kind, outcome))
