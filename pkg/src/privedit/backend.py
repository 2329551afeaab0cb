"""Pluggable generative-edit backends.

The only image bytes that ever cross this boundary are the masked
composite. The HTTP adapter speaks multipart (image part + prompt field)
and sniffs JSON-or-raw-image responses; deterministic mock backends keep
the pipeline testable offline. Every call carries an idempotency key and
retries never re-encode the request image.
"""

from __future__ import annotations

import base64
import random
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Callable, Protocol, runtime_checkable

import httpx
import numpy as np

from .errors import BackendError, Timeout, UndecodableResponse
from .imaging import Image, decode_image


@dataclass
class EditRequest:
    """Masked image bytes plus the edit prompt; the unit sent to the cloud."""

    image: bytes
    prompt: str
    request_id: str = field(default_factory=lambda: uuid.uuid4().hex)
    timeout: float = 60.0

    def __post_init__(self):
        if not self.image:
            raise ValueError("request image bytes must be non-empty")
        if not self.prompt:
            raise ValueError("request prompt must be non-empty")


@dataclass
class EditResult:
    image: Image
    backend_name: str
    latency_ms: float = 0.0
    raw_status: int | str = "ok"


@runtime_checkable
class EditBackend(Protocol):
    name: str

    def edit(self, req: EditRequest) -> EditResult: ...


@dataclass
class MockIdentityBackend:
    """Echoes the request image back, byte-faithfully."""

    name: str = "mock-identity"

    def edit(self, req: EditRequest) -> EditResult:
        return EditResult(image=decode_image(req.image), backend_name=self.name)


@dataclass
class MockRecolorBackend:
    """Adds a fixed per-channel delta, clamped to [0, 1]."""

    delta: tuple[float, float, float] = (0.08, 0.03, -0.04)
    name: str = "mock-recolor"

    def edit(self, req: EditRequest) -> EditResult:
        img = decode_image(req.image)
        shifted = np.clip(img.data + np.asarray(self.delta), 0.0, 1.0)
        return EditResult(image=Image(shifted), backend_name=self.name)


def studio_backdrop(width: int, height: int) -> Image:
    """Procedural studio backdrop: vertical gray gradient with a vignette."""
    ys = np.linspace(0.32, 0.78, height)[:, None]
    base = np.repeat(ys, width, axis=1)
    xs = np.linspace(-1.0, 1.0, width)[None, :]
    yy = np.linspace(-1.0, 1.0, height)[:, None]
    vignette = 1.0 - 0.18 * (xs**2 + yy**2)
    gray = np.clip(base * vignette, 0.0, 1.0)
    return Image(np.stack([gray * 0.98, gray, gray * 1.02], axis=2).clip(0.0, 1.0))


@dataclass
class MockHeadshotBackend:
    """Blends the masked input toward a studio backdrop, geometry preserved."""

    blend: float = 0.25
    name: str = "mock-headshot"

    def edit(self, req: EditRequest) -> EditResult:
        img = decode_image(req.image)
        backdrop = studio_backdrop(img.width, img.height)
        out = (1.0 - self.blend) * img.data + self.blend * backdrop.data
        return EditResult(image=Image(np.clip(out, 0.0, 1.0)), backend_name=self.name)


class TokenBucket:
    """Simple per-adapter rate limiter; acquire() blocks until a token frees up."""

    def __init__(self, rate_per_min: float, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.capacity = max(rate_per_min, 1.0)
        self.tokens = self.capacity
        self.rate = rate_per_min / 60.0
        self.clock = clock
        self.sleep = sleep
        self._stamp = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self._stamp) * self.rate)
                self._stamp = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                needed = (1.0 - self.tokens) / self.rate if self.rate > 0 else 1.0
            self.sleep(needed)


def _extract_json_image(doc, key_path: str) -> bytes:
    node = doc
    for part in key_path.split("."):
        if isinstance(node, list):
            node = node[int(part)]
        elif isinstance(node, dict) and part in node:
            node = node[part]
        else:
            raise UndecodableResponse(f"response JSON has no '{key_path}' image field")
    if not isinstance(node, str):
        raise UndecodableResponse(f"'{key_path}' is not a base64 string")
    try:
        return base64.b64decode(node)
    except Exception as exc:
        raise UndecodableResponse(f"'{key_path}' is not valid base64: {exc}") from exc


@dataclass
class HttpEditBackend:
    """Multipart HTTP adapter: POST image + prompt, receive image bytes back.

    Responses are sniffed: an image/* content type is decoded directly, a
    JSON body is searched at `json_image_key` (dotted path) for base64 image
    data. Credentials come from the environment variable named by
    `auth_env`, never from config files. 5xx responses and timeouts retry
    with exponential backoff, re-sending the identical request bytes.
    """

    endpoint: str
    auth_env: str | None = None
    timeout_ms: int = 60000
    retries: int = 2
    rate_per_min: float = 60.0
    json_image_key: str = "image"
    name: str = "http"
    client: httpx.Client | None = None
    backoff_base: float = 0.5
    sleep: Callable[[float], None] = time.sleep

    def __post_init__(self):
        self._bucket = TokenBucket(self.rate_per_min, sleep=self.sleep)

    def _headers(self, req: EditRequest) -> dict[str, str]:
        headers = {"Idempotency-Key": req.request_id}
        if self.auth_env:
            import os

            token = os.environ.get(self.auth_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def edit(self, req: EditRequest) -> EditResult:
        client = self.client or httpx.Client()
        files = {"image": ("image.png", req.image, "image/png")}
        data = {"prompt": req.prompt, "request_id": req.request_id}
        timeout = min(req.timeout, self.timeout_ms / 1000.0)
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                self.sleep(self.backoff_base * (2 ** (attempt - 1)) * (1.0 + 0.1 * random.random()))
            self._bucket.acquire()
            try:
                resp = client.post(
                    self.endpoint, files=files, data=data,
                    headers=self._headers(req), timeout=timeout,
                )
            except httpx.TimeoutException:
                last_error = Timeout(f"backend call timed out after {timeout:.1f}s")
                continue
            except httpx.HTTPError as exc:
                last_error = BackendError(0, f"transport failure: {exc}")
                continue
            if resp.status_code >= 500:
                last_error = BackendError(resp.status_code, resp.text[:200])
                continue
            if resp.status_code >= 400:
                raise BackendError(resp.status_code, resp.text[:200])
            return EditResult(
                image=self._decode(resp), backend_name=self.name, raw_status=resp.status_code
            )
        assert last_error is not None
        raise last_error

    def _decode(self, resp: httpx.Response) -> Image:
        ctype = resp.headers.get("content-type", "")
        blob = resp.content
        if ctype.startswith("image/"):
            pass
        elif "json" in ctype:
            try:
                doc = resp.json()
            except ValueError as exc:
                raise UndecodableResponse(f"invalid JSON response: {exc}") from exc
            blob = _extract_json_image(doc, self.json_image_key)
        try:
            return decode_image(blob)
        except Exception as exc:
            raise UndecodableResponse(f"response bytes are not a decodable image: {exc}") from exc


def edit(req: EditRequest, backend: EditBackend) -> EditResult:
    """Run one edit and record its latency."""
    start = time.monotonic()
    result = backend.edit(req)
    result.latency_ms = (time.monotonic() - start) * 1000.0
    return result


def reconstruction_probe(req: EditRequest, backend: EditBackend) -> EditResult:
    """Adversarial simulation: ask the backend to work from the masked input.

    Identical wire behavior to `edit`; the caller persists and labels the
    output as probe material.
    """
    return edit(req, backend)


@dataclass
class RecordingBackend:
    """Test helper wrapping any backend; captures every outbound payload."""

    inner: EditBackend
    requests: list[EditRequest] = field(default_factory=list)

    @property
    def name(self) -> str:
        return self.inner.name

    def edit(self, req: EditRequest) -> EditResult:
        self.requests.append(req)
        return self.inner.edit(req)


def build_backend(kind: str, **kwargs) -> EditBackend:
    """Backend factory used by config loading."""
    if kind == "mock-identity":
        return MockIdentityBackend()
    if kind == "mock-recolor":
        delta = kwargs.get("delta")
        return MockRecolorBackend(delta=tuple(delta)) if delta else MockRecolorBackend()
    if kind == "mock-headshot":
        blend = kwargs.get("blend")
        return MockHeadshotBackend(blend=float(blend)) if blend is not None else MockHeadshotBackend()
    if kind == "http":
        return HttpEditBackend(
            endpoint=kwargs["endpoint"],
            auth_env=kwargs.get("auth_env"),
            timeout_ms=int(kwargs.get("timeout_ms", 60000)),
            retries=int(kwargs.get("retries", 2)),
            rate_per_min=float(kwargs.get("rate_per_min", 60.0)),
            json_image_key=kwargs.get("json_image_key", "image"),
        )
    raise ValueError(f"unknown backend kind: {kind}")
