"""Omniscient backends that answer from a scene's ground truth.

``OracleTransport`` speaks the same request/response shapes as the live
services, so everything above the transport (endpoints, typed clients,
validation, pipeline, cache) runs unmodified against it.
"""

from __future__ import annotations

import hashlib
import re
import threading
from typing import Any, Iterable, Mapping

import numpy as np

from ..gateway import Backends, TransportError, backends_from_transports
from ..gateway.errors import BackendRefusal
from ..gateway.wire import rle_encode
from ..model import ImageRef, PipelineConfig
from ..prompting import ENTITY_MARKER, ORIGINAL_MARKER, SECTION_RULE
from .scene import COLORS, NOUNS, SyntheticScene

ORACLE_LOCATOR = "oracle:testkit"
EMBED_TAGS = ("oracle-embed/1",)
EMBED_DIM = 16
RECAPTION_PREFIX = "The image shows "

_DESCRIPTION_MARKER = "%%%DESCRIPTION%%%:"
_OBJECT_LINE = re.compile(r"^Object\d+: (.+)$", re.MULTILINE)


def recaption_sentence(phrases: Iterable[str]) -> str:
    phrases = list(phrases)
    return RECAPTION_PREFIX + (", ".join(phrases) if phrases else "nothing in particular") + "."


def _text_of(request: dict[str, Any]) -> tuple[str, list[ImageRef]]:
    texts, images = [], []
    for message in request.get("messages", []):
        for part in message.get("content", []):
            if part.get("type") == "text":
                texts.append(part["text"])
            elif part.get("type") == "image_url":
                images.append(part["image_url"]["url"])
    return "\n".join(texts), images


class OracleTransport:
    """Scripted chat plus ground-truth vision experts for a set of scenes.

    ``poison`` maps an image id to the request kind that should be refused for
    it: "describe", "extract", "detect", "dense_caption", "segment", "depth" or
    "recaption".  ``segment_failures`` holds ``(image_id, phrase)`` pairs whose
    masks come back empty.
    """

    def __init__(self, scenes: Iterable[SyntheticScene], poison: Mapping[str, str] | None = None,
                 segment_failures: Iterable[tuple[str, str]] = ()):
        self.scenes = {s.image_id: s for s in scenes}
        self.poison = dict(poison or {})
        self.segment_failures = set(segment_failures)
        self._by_description: dict[str, list[str]] = {}
        vocabulary = {f"{c} {n}" for c in COLORS for n in NOUNS}
        for scene in self.scenes.values():
            self._by_description.setdefault(scene.reference_description(), []).append(scene.image_id)
            vocabulary.update(o.phrase for o in scene.objects)
            vocabulary.update(scene.distractor_phrases)
        self.vocabulary = sorted(vocabulary, key=lambda p: (-len(p), p))
        self._lock = threading.Lock()
        self.counts: dict[str, int] = {}

    def _scene(self, image: Any) -> SyntheticScene:
        image_id = image.id if isinstance(image, ImageRef) else str(image)
        try:
            return self.scenes[image_id]
        except KeyError:
            raise BackendRefusal("unknown_image", f"no scene for image {image_id!r}") from None

    def _check_poison(self, image_ids: Iterable[str], kind: str) -> None:
        for image_id in image_ids:
            if self.poison.get(image_id) == kind:
                raise BackendRefusal("poisoned", f"{kind} refused for image {image_id!r}")

    def call(self, kind: str, request: dict[str, Any]) -> dict[str, Any]:
        with self._lock:
            self.counts[kind] = self.counts.get(kind, 0) + 1
        handler = getattr(self, f"_{kind}", None)
        if handler is None:
            raise BackendRefusal("unsupported", f"oracle does not serve {kind!r}")
        return handler(request)

    # chat

    def _chat(self, request: dict[str, Any]) -> dict[str, Any]:
        text, images = _text_of(request)
        if images:
            scene = self._scene(images[0])
            self._check_poison([scene.image_id], "describe")
            reply = scene.reference_description()
        elif ORIGINAL_MARKER in text:
            reply = self._recaption(text)
        elif ENTITY_MARKER in text:
            reply = self._extract(text)
        else:
            raise BackendRefusal("unscripted", "oracle chat got a prompt it does not recognize")
        return {"choices": [{"message": {"role": "assistant", "content": reply}}]}

    def _extract(self, prompt: str) -> str:
        start = prompt.rfind(_DESCRIPTION_MARKER) + len(_DESCRIPTION_MARKER)
        end = prompt.rfind(ENTITY_MARKER)
        description = prompt[start:end].strip()
        self._check_poison(self._by_description.get(description, ()), "extract")
        lowered = description.lower()
        found: list[tuple[int, str]] = []
        taken = [False] * len(lowered)
        for phrase in self.vocabulary:  # longest first, so no phrase is split by a shorter one
            for match in re.finditer(re.escape(phrase), lowered):
                if not any(taken[match.start():match.end()]):
                    taken[match.start():match.end()] = [True] * len(phrase)
                    found.append((match.start(), phrase))
        phrases = [p for _, p in sorted(found)]
        return ENTITY_MARKER + " " + "".join(f"{p}. " for p in phrases).rstrip()

    def _recaption(self, prompt: str) -> str:
        task = prompt[prompt.rfind(ORIGINAL_MARKER) + len(ORIGINAL_MARKER):]
        rule = task.find(SECTION_RULE)
        description = task[:rule].strip()
        self._check_poison(self._by_description.get(description, ()), "recaption")
        annotations = task[rule:]
        hallucinated: list[str] = []
        for line in annotations.splitlines():
            if line.startswith("Hallucinations:"):
                body = line[len("Hallucinations:"):].strip()
                hallucinated = [h.strip() for h in body.split(";") if h.strip()]
                break
        banned = {h.casefold() for h in hallucinated}
        kept = [p for p in _OBJECT_LINE.findall(annotations) if p.casefold() not in banned]
        return recaption_sentence(dict.fromkeys(kept))

    # vision experts

    def _detect(self, request: dict[str, Any]) -> dict[str, Any]:
        scene = self._scene(request["image"])
        self._check_poison([scene.image_id], "detect")
        phrase = request["phrase"].casefold()
        detections = []
        for i, obj in enumerate(scene.objects):
            if obj.planted and obj.phrase.casefold() == phrase:
                x1, y1, x2, y2 = scene.tight_box(i)
                bbox = [x1 / scene.width, y1 / scene.height, x2 / scene.width, y2 / scene.height]
                detections.append({"bbox": bbox, "score": 1.0})
        return {"detections": detections}

    def _dense_caption(self, request: dict[str, Any]) -> dict[str, Any]:
        scene = self._scene(request["image"])
        self._check_poison([scene.image_id], "dense_caption")
        regions = [{"phrase": o.phrase, "box": list(scene.tight_box(i))}
                   for i, o in enumerate(scene.objects) if o.planted]
        return {"regions": regions}

    def _segment(self, request: dict[str, Any]) -> dict[str, Any]:
        scene = self._scene(request["image"])
        self._check_poison([scene.image_id], "segment")
        by_box = {scene.tight_box(i): i for i, o in enumerate(scene.objects) if o.planted}
        masks: list[dict[str, Any] | None] = []
        for box in request["boxes"]:
            index = by_box.get(tuple(box))
            if index is None or (scene.image_id, scene.objects[index].phrase) in self.segment_failures:
                masks.append(None)
            else:
                masks.append({"size": [scene.height, scene.width], "counts": rle_encode(scene.masks[index])})
        return {"masks": masks}

    def _depth(self, request: dict[str, Any]) -> dict[str, Any]:
        scene = self._scene(request["image"])
        self._check_poison([scene.image_id], "depth")
        return {"width": scene.width, "height": scene.height, "values": scene.depth.ravel().tolist()}

    def _embed(self, request: dict[str, Any]) -> dict[str, Any]:
        scene = self._scene(request["image"])
        tag = request["model_tag"]
        if tag not in EMBED_TAGS:
            raise BackendRefusal("unknown_model_tag", f"model tag {tag!r} is not served")
        seed = int.from_bytes(hashlib.sha256(f"{tag}|{scene.image_id}".encode()).digest()[:8], "big")
        values = np.random.default_rng(seed).standard_normal(EMBED_DIM)
        return {"values": values.tolist(), "model_tag": tag}


class FlakyTransport:
    """Fail selected request kinds with TransportError.

    Calls of a listed kind numbered ``fail_after`` onward (0-based) fail; if
    ``failures`` is given, only that many of them fail and later calls pass.
    """

    def __init__(self, inner, kinds: Iterable[str], fail_after: int = 0, failures: int | None = None):
        self.inner = inner
        self.kinds = set(kinds)
        self.fail_after = fail_after
        self.failures = failures
        self._lock = threading.Lock()
        self.seen = 0

    def call(self, kind: str, request: dict[str, Any]) -> dict[str, Any]:
        if kind in self.kinds:
            with self._lock:
                n = self.seen
                self.seen += 1
            in_window = n >= self.fail_after and (self.failures is None or n < self.fail_after + self.failures)
            if in_window:
                raise TransportError(f"{kind} backend unavailable (scripted outage, call {n})")
        return self.inner.call(kind, request)


def oracle_config(**overrides: Any) -> PipelineConfig:
    """Config matching the oracle: metric-style depth, so nearer means smaller."""
    locators = {f: ORACLE_LOCATOR for f in ("mllm_backend", "llm_backend", "detector_backend",
                                            "dense_caption_backend", "segmenter_backend", "depth_backend",
                                            "embedder_backend")}
    return PipelineConfig(**{**locators, "depth_orientation": "near_is_low", **overrides})


def oracle_transports(transport) -> dict[str, Any]:
    return {k: transport for k in ("mllm", "llm", "detector", "dense_caption", "segmenter", "depth", "embedder")}


def oracle_backends(scenes: SyntheticScene | Iterable[SyntheticScene], config: PipelineConfig | None = None,
                    poison: Mapping[str, str] | None = None, segment_failures: Iterable[tuple[str, str]] = (),
                    max_concurrency: int = 4, transport=None) -> Backends:
    """Full backend set over the given scenes.  Retries never sleep."""
    if isinstance(scenes, SyntheticScene):
        scenes = [scenes]
    transport = transport or OracleTransport(scenes, poison, segment_failures)
    return backends_from_transports(config or oracle_config(), oracle_transports(transport),
                                    max_concurrency, sleep=lambda _s: None)
