"""Wire-level helpers: canonical JSON digests, image encoding, mask run-lengths."""

from __future__ import annotations

import base64
import hashlib
import json
import mimetypes
from pathlib import Path
from typing import Any, Callable

import numpy as np

from ..model import ImageRef, PixelMask

mimetypes.add_type("image/x-portable-graymap", ".pgm")


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def digest(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def substitute_images(obj: Any, encode: Callable[[ImageRef], Any]) -> Any:
    """Recursively replace every ImageRef in a request with ``encode(image)``."""
    if isinstance(obj, ImageRef):
        return encode(obj)
    if isinstance(obj, dict):
        return {k: substitute_images(v, encode) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [substitute_images(v, encode) for v in obj]
    return obj


def image_key(image: ImageRef) -> str:
    """Pixel-free stand-in used when hashing fixture requests."""
    return f"image-id:{image.id}"


def image_payload(image: ImageRef) -> str:
    """URL or base64 data URI for a remote backend."""
    source = image.pixel_source
    if source.startswith(("http://", "https://", "data:")):
        return source
    if not source:
        raise ValueError(f"image {image.id!r} has no pixel_source to send")
    path = Path(source)
    mime = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
    data = base64.b64encode(path.read_bytes()).decode("ascii")
    return f"data:{mime};base64,{data}"


def rle_encode(bits: np.ndarray) -> list[int]:
    """Row-major run lengths, alternating background/foreground, starting with background."""
    flat = np.asarray(bits, dtype=bool).ravel()
    if flat.size == 0:
        return [0]
    edges = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], edges, [flat.size]))
    counts = np.diff(bounds).tolist()
    return [0] + counts if flat[0] else counts


def rle_decode(counts: list[int], width: int, height: int) -> np.ndarray:
    total = sum(int(c) for c in counts)
    if total != width * height or any(int(c) < 0 for c in counts):
        raise ValueError(f"run lengths sum to {total}, expected {width * height}")
    values = np.zeros(len(counts), dtype=bool)
    values[1::2] = True
    return np.repeat(values, [int(c) for c in counts]).reshape(height, width)


def mask_to_wire(mask: PixelMask) -> dict[str, Any]:
    return {"size": [mask.height, mask.width], "counts": rle_encode(mask.bits)}
