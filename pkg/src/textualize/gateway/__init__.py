"""Uniform access to the expert models: chat LLM/MLLM, detector, dense captioner,
segmenter, depth estimator and image embedder."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from ..model import PipelineConfig
from .backends import (
    ChatBackend,
    ChatMessage,
    DenseCaption,
    DenseCaptionBackend,
    DepthBackend,
    Detection,
    DetectorBackend,
    EmbedderBackend,
    EmbeddingVector,
    PixelBox,
    SegmenterBackend,
)
from .errors import (
    BackendRefusal,
    EmptyResponse,
    FixtureMissing,
    GatewayError,
    MaskEmpty,
    ResponseValidationError,
    TransportError,
    UnknownModelTag,
)
from .transport import Endpoint, FixtureTransport, HttpTransport, RecordingTransport, RetryPolicy, Transport


@dataclass
class Backends:
    mllm: ChatBackend
    llm: ChatBackend
    detector: DetectorBackend
    dense_captioner: DenseCaptionBackend
    segmenter: SegmenterBackend
    depth: DepthBackend
    embedder: EmbedderBackend | None = None

    def endpoints(self) -> list[Endpoint]:
        seen: dict[int, Endpoint] = {}
        for backend in (self.mllm, self.llm, self.detector, self.dense_captioner,
                        self.segmenter, self.depth, self.embedder):
            if backend is not None:
                seen.setdefault(id(backend.endpoint), backend.endpoint)
        return list(seen.values())

    def total_calls(self) -> int:
        return sum(e.calls for e in self.endpoints())


def transport_for(locator: str, timeout: float = 60.0, base_dir: str | Path | None = None) -> Transport:
    """``http(s)://...`` for a live service, ``fixture:<dir>`` for recorded calls.

    A relative fixture directory is resolved against ``base_dir`` when given.
    """
    if locator.startswith(("http://", "https://")):
        return HttpTransport(locator, timeout=timeout)
    if locator.startswith("fixture:"):
        path = Path(locator[len("fixture:"):])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return FixtureTransport(path)
    raise ValueError(f"unsupported backend locator {locator!r} (expected http(s)://... or fixture:<dir>)")


def backends_from_transports(
    config: PipelineConfig,
    transports: dict[str, Transport],
    max_concurrency: int = 4,
    sleep: Callable[[float], None] | None = None,
) -> Backends:
    """Wrap one transport per expert kind into endpoints and typed clients.

    ``transports`` is keyed by mllm, llm, detector, dense_caption, segmenter,
    depth and optionally embedder.  Identical transport objects share an endpoint.
    """
    policy = RetryPolicy(retry_limit=config.retry_limit)
    endpoints: dict[int, Endpoint] = {}

    def endpoint(name: str) -> Endpoint:
        transport = transports[name]
        if id(transport) not in endpoints:
            kwargs = {"sleep": sleep} if sleep is not None else {}
            endpoints[id(transport)] = Endpoint(transport, name, policy, max_concurrency, **kwargs)
        return endpoints[id(transport)]

    return Backends(
        mllm=ChatBackend(endpoint("mllm"), config.mllm_model, config.temperature, config.max_tokens),
        llm=ChatBackend(endpoint("llm"), config.llm_model, config.temperature, config.max_tokens),
        detector=DetectorBackend(endpoint("detector")),
        dense_captioner=DenseCaptionBackend(endpoint("dense_caption")),
        segmenter=SegmenterBackend(endpoint("segmenter")),
        depth=DepthBackend(endpoint("depth")),
        embedder=EmbedderBackend(endpoint("embedder")) if "embedder" in transports else None,
    )


def build_backends(config: PipelineConfig, max_concurrency: int = 4, timeout: float = 60.0,
                   base_dir: str | Path | None = None) -> Backends:
    locators = {
        "mllm": config.mllm_backend,
        "llm": config.llm_backend,
        "detector": config.detector_backend,
        "dense_caption": config.dense_caption_backend,
        "segmenter": config.segmenter_backend,
        "depth": config.depth_backend,
    }
    if config.embedder_backend:
        locators["embedder"] = config.embedder_backend
    missing = [name for name, loc in locators.items() if not loc]
    if missing:
        raise ValueError(f"no backend configured for: {', '.join(missing)}")
    cache: dict[str, Transport] = {}
    transports = {}
    for name, loc in locators.items():
        if loc not in cache:
            cache[loc] = transport_for(loc, timeout, base_dir)
        transports[name] = cache[loc]
    return backends_from_transports(config, transports, max_concurrency)


__all__ = [
    "BackendRefusal", "Backends", "ChatBackend", "ChatMessage", "DenseCaption", "DenseCaptionBackend",
    "DepthBackend", "Detection", "DetectorBackend", "EmbedderBackend", "EmbeddingVector", "EmptyResponse",
    "Endpoint", "FixtureMissing", "FixtureTransport", "GatewayError", "HttpTransport", "MaskEmpty",
    "PixelBox", "RecordingTransport", "ResponseValidationError", "RetryPolicy", "SegmenterBackend",
    "Transport", "TransportError", "UnknownModelTag", "backends_from_transports", "build_backends",
    "transport_for",
]
