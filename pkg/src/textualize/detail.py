"""Fine-grained object annotation: dense captions + masks + depth -> ObjectAnnotations."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from .gateway import Backends, MaskEmpty, PixelBox
from .model import BBoxNorm, DepthMap, ImageRef, ObjectAnnotation, PixelMask

log = logging.getLogger(__name__)


class DimsMismatch(ValueError):
    pass


class EmptyMask(ValueError):
    pass


class OutOfBounds(ValueError):
    pass


def _check_mask(mask: PixelMask, width: int, height: int) -> None:
    if (mask.width, mask.height) != (width, height):
        raise DimsMismatch(f"mask is {mask.width}x{mask.height}, expected {width}x{height}")
    if not mask.bits.any():
        raise EmptyMask("mask has no set pixels")


def object_depth(mask: PixelMask, depth: DepthMap) -> float:
    """Mean of the depth raster over the mask's set pixels."""
    _check_mask(mask, depth.width, depth.height)
    return float(depth.values[mask.bits].mean())


def object_size(mask: PixelMask, image: ImageRef) -> float:
    """Fraction of the image covered by the mask."""
    _check_mask(mask, image.width, image.height)
    return mask.count / (image.width * image.height)


def normalize_bbox(bbox_px: Sequence[int], image: ImageRef) -> BBoxNorm:
    x1, y1, x2, y2 = bbox_px
    if not (0 <= x1 <= x2 <= image.width and 0 <= y1 <= y2 <= image.height):
        raise OutOfBounds(f"box {list(bbox_px)} outside {image.width}x{image.height} image {image.id!r}")
    return BBoxNorm(x1 / image.width, y1 / image.height, x2 / image.width, y2 / image.height)


def normalize_depths(raw_means: Sequence[float], orientation: str = "near_is_high") -> list[float]:
    """Min-max rescale per image so that 1.0 is the nearest object and 0.0 the farthest.

    ``near_is_low`` is for metric-style backends where a larger value means farther.
    If every object sits at the same depth, all get 0.5.
    """
    if orientation not in ("near_is_high", "near_is_low"):
        raise ValueError(f"unknown depth orientation {orientation!r}")
    values = np.asarray(raw_means, dtype=np.float64)
    if values.size == 0 or not np.all(np.isfinite(values)):
        raise ValueError("raw depth means must be a nonempty list of finite numbers")
    lo, hi = values.min(), values.max()
    if hi == lo:
        return [0.5] * values.size
    scaled = (values - lo) / (hi - lo)
    if orientation == "near_is_low":
        scaled = 1.0 - scaled
    return [float(v) for v in scaled]


def box_fill_mask(box: PixelBox, image: ImageRef) -> PixelMask:
    """Mask covering the box, grown to one pixel when the box is degenerate."""
    x1, y1, x2, y2 = box
    x1, y1 = min(x1, image.width - 1), min(y1, image.height - 1)
    x2, y2 = max(x2, x1 + 1), max(y2, y1 + 1)
    bits = np.zeros((image.height, image.width), dtype=bool)
    bits[y1:y2, x1:x2] = True
    return PixelMask(image.width, image.height, bits)


def build_finegrained_info(image: ImageRef, backends: Backends,
                           orientation: str = "near_is_high") -> list[ObjectAnnotation]:
    captions = []
    seen = set()
    for caption in backends.dense_captioner.dense_caption(image):
        key = (caption.phrase, caption.bbox_px)
        if key not in seen:
            seen.add(key)
            captions.append(caption)
    if not captions:
        return []

    boxes = [c.bbox_px for c in captions]
    try:
        masks: list[PixelMask | None] = list(backends.segmenter.segment(image, boxes))
    except MaskEmpty as exc:
        log.warning("image %s: segmentation failed for boxes %s; using box fill", image.id, exc.failed)
        masks = list(exc.masks)
    fallback = [m is None for m in masks]
    masks = [m if m is not None else box_fill_mask(b, image) for m, b in zip(masks, boxes)]

    depth = backends.depth.estimate_depth(image)
    raw = [object_depth(m, depth) for m in masks]
    relative = normalize_depths(raw, orientation)
    return [
        ObjectAnnotation(
            phrase=caption.phrase,
            bbox=normalize_bbox(caption.bbox_px, image),
            depth_rel=rel,
            size_frac=object_size(mask, image),
            mask_fallback=fb,
        )
        for caption, mask, rel, fb in zip(captions, masks, relative, fallback)
    ]
