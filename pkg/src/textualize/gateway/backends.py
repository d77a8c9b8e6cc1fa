"""Typed clients for the six expert kinds.

Each client builds a JSON request, sends it through an :class:`Endpoint`, and
validates the response against the image before returning it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence, Union

import numpy as np

from ..model import BBoxNorm, DepthMap, ImageRef, PixelMask, clean_phrase
from .errors import EmptyResponse, MaskEmpty, ResponseValidationError, UnknownModelTag, BackendRefusal
from .transport import Endpoint
from .wire import rle_decode

PixelBox = tuple[int, int, int, int]
Part = Union[str, ImageRef]

ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    parts: tuple[Part, ...]

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown chat role {self.role!r}")
        if not self.parts:
            raise ValueError("chat message needs at least one part")
        if self.role != "user" and any(isinstance(p, ImageRef) for p in self.parts):
            raise ValueError("image parts are only allowed in user messages")

    @classmethod
    def user(cls, *parts: Part) -> "ChatMessage":
        return cls("user", tuple(parts))

    def to_wire(self) -> dict[str, Any]:
        content = []
        for part in self.parts:
            if isinstance(part, ImageRef):
                content.append({"type": "image_url", "image_url": {"url": part}})
            else:
                content.append({"type": "text", "text": part})
        return {"role": self.role, "content": content}


@dataclass(frozen=True)
class Detection:
    phrase: str
    bbox: BBoxNorm
    score: float


@dataclass(frozen=True)
class DenseCaption:
    phrase: str
    bbox_px: PixelBox


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    model_tag: str

    def __post_init__(self) -> None:
        if not self.values:
            raise ValueError("embedding vector must be nonempty")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("embedding vector has non-finite entries")


def box_in_bounds(box: Sequence[int], image: ImageRef) -> bool:
    x1, y1, x2, y2 = box
    return 0 <= x1 <= x2 <= image.width and 0 <= y1 <= y2 <= image.height


def _check_box(box: Any, image: ImageRef) -> PixelBox:
    try:
        coords = tuple(int(v) for v in box)
    except (TypeError, ValueError) as exc:
        raise ResponseValidationError(f"malformed box {box!r} for image {image.id!r}") from exc
    if len(coords) != 4 or any(float(a) != float(b) for a, b in zip(coords, box)):
        raise ResponseValidationError(f"box {box!r} for image {image.id!r} is not four integers")
    if not box_in_bounds(coords, image):
        raise ResponseValidationError(
            f"box {list(coords)} lies outside image {image.id!r} ({image.width}x{image.height})")
    return coords  # type: ignore[return-value]


class ChatBackend:
    def __init__(self, endpoint: Endpoint, model: str = "default", temperature: float = 0.2, max_tokens: int = 1024):
        self.endpoint = endpoint
        self.model = model
        self.temperature = temperature
        self.max_tokens = max_tokens

    def chat(self, messages: Sequence[ChatMessage], temperature: float | None = None,
             max_tokens: int | None = None) -> str:
        if not messages:
            raise ValueError("chat needs at least one message")
        request = {
            "model": self.model,
            "messages": [m.to_wire() for m in messages],
            "temperature": self.temperature if temperature is None else temperature,
            "max_tokens": self.max_tokens if max_tokens is None else max_tokens,
        }
        response = self.endpoint.call("chat", request)
        try:
            content = response["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise EmptyResponse("chat response has no choices[0].message.content") from None
        if isinstance(content, list):
            content = "".join(p.get("text", "") for p in content if isinstance(p, dict))
        if not isinstance(content, str) or not content.strip():
            raise EmptyResponse("chat backend returned no text")
        return content


class DetectorBackend:
    """Open-set detector queried one phrase at a time."""

    def __init__(self, endpoint: Endpoint):
        self.endpoint = endpoint

    def detect(self, image: ImageRef, phrase: str) -> list[Detection]:
        phrase = clean_phrase(phrase)
        response = self.endpoint.call("detect", {"image": image, "phrase": phrase})
        detections = []
        for item in response.get("detections", []):
            bbox = BBoxNorm(*(float(v) for v in item["bbox"]))
            score = float(item["score"])
            if not bbox.is_valid():
                raise ResponseValidationError(f"detection box {bbox.as_list()} is not a normalized box")
            if not 0.0 <= score <= 1.0:
                raise ResponseValidationError(f"detection score {score} outside [0, 1]")
            detections.append(Detection(phrase, bbox, score))
        return detections


class DenseCaptionBackend:
    def __init__(self, endpoint: Endpoint):
        self.endpoint = endpoint

    def dense_caption(self, image: ImageRef) -> list[DenseCaption]:
        response = self.endpoint.call("dense_caption", {"image": image, "width": image.width, "height": image.height})
        regions = []
        for item in response.get("regions", []):
            box = _check_box(item["box"], image)
            try:
                phrase = clean_phrase(item["phrase"])
            except ValueError:
                raise ResponseValidationError(f"empty dense-caption phrase for box {list(box)}") from None
            regions.append(DenseCaption(phrase, box))
        return regions


class SegmenterBackend:
    """Box-prompted segmenter; returns one mask per box in input order."""

    def __init__(self, endpoint: Endpoint):
        self.endpoint = endpoint

    def segment(self, image: ImageRef, boxes: Sequence[PixelBox]) -> list[PixelMask]:
        for box in boxes:
            if not box_in_bounds(box, image):
                raise ValueError(f"box {list(box)} lies outside image {image.id!r}")
        if not boxes:
            return []
        response = self.endpoint.call("segment", {"image": image, "boxes": [list(b) for b in boxes]})
        wire_masks = response.get("masks", [])
        if len(wire_masks) != len(boxes):
            raise ResponseValidationError(f"segmenter returned {len(wire_masks)} masks for {len(boxes)} boxes")
        masks: list[PixelMask | None] = []
        failed = []
        for i, item in enumerate(wire_masks):
            if item is None:
                masks.append(None)
                failed.append(i)
                continue
            height, width = (int(v) for v in item["size"])
            if (width, height) != (image.width, image.height):
                raise ResponseValidationError(
                    f"mask {i} is {width}x{height}, image {image.id!r} is {image.width}x{image.height}")
            try:
                bits = rle_decode(item["counts"], width, height)
            except ValueError as exc:
                raise ResponseValidationError(f"mask {i}: {exc}") from exc
            if not bits.any():
                masks.append(None)
                failed.append(i)
            else:
                masks.append(PixelMask(width, height, bits))
        if failed:
            raise MaskEmpty(failed, masks)
        return masks  # type: ignore[return-value]


class DepthBackend:
    """Monocular depth; raw scale and orientation are whatever the model emits."""

    def __init__(self, endpoint: Endpoint):
        self.endpoint = endpoint

    def estimate_depth(self, image: ImageRef) -> DepthMap:
        response = self.endpoint.call("depth", {"image": image, "width": image.width, "height": image.height})
        width, height = int(response["width"]), int(response["height"])
        if (width, height) != (image.width, image.height):
            raise ResponseValidationError(
                f"depth map is {width}x{height}, image {image.id!r} is {image.width}x{image.height}")
        values = np.asarray(response["values"], dtype=np.float64)
        if values.size != width * height:
            raise ResponseValidationError(f"depth map has {values.size} values, expected {width * height}")
        if not np.all(np.isfinite(values)):
            raise ResponseValidationError("depth map contains non-finite values")
        return DepthMap(width, height, values.reshape(height, width))


class EmbedderBackend:
    def __init__(self, endpoint: Endpoint):
        self.endpoint = endpoint

    def embed_image(self, image: ImageRef, model_tag: str) -> EmbeddingVector:
        if not model_tag:
            raise ValueError("model_tag must be nonempty")
        try:
            response = self.endpoint.call("embed", {"image": image, "model_tag": model_tag})
        except BackendRefusal as exc:
            if exc.code == "unknown_model_tag":
                raise UnknownModelTag(exc.code, f"model tag {model_tag!r} is not served") from exc
            raise
        values = tuple(float(v) for v in response.get("values", []))
        try:
            return EmbeddingVector(values, response.get("model_tag", model_tag))
        except ValueError as exc:
            raise ResponseValidationError(str(exc)) from exc
