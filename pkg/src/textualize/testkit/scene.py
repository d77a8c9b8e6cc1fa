"""Seeded synthetic scenes with exact ground truth.

A scene is a set of non-overlapping rectangles and ellipses, each painted at a
distinct metric-style depth (larger = farther) over a far background.  Scenes
can be written to disk as a binary PGM plus a JSON sidecar so that they travel
through the same file-locator path as real images.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..model import ImageRef

BACKGROUND_DEPTH = 10.0
MIN_SIDE = 6

COLORS = ("red", "blue", "green", "yellow", "purple", "orange", "white", "black", "gray", "pink", "brown")
NOUNS = ("cube", "ball", "lamp", "chair", "vase", "kite", "drum", "boat", "clock", "bottle",
         "hat", "book", "shoe", "mug", "bench", "sign", "tent", "fork")


@dataclass(frozen=True)
class SceneObject:
    phrase: str
    shape: str                      # "rect" or "ellipse"
    region: tuple[int, int, int, int]  # x, y, w, h of the shape's frame
    depth_value: float
    planted: bool = True            # False: named in the layout but never drawn


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    seed: int
    width: int
    height: int
    objects: tuple[SceneObject, ...]
    distractor_phrases: tuple[str, ...]
    masks: tuple[np.ndarray, ...]
    depth: np.ndarray
    background_depth: float = BACKGROUND_DEPTH

    @property
    def image_id(self) -> str:
        return f"scene-{self.seed:05d}"

    @property
    def planted(self) -> tuple[SceneObject, ...]:
        return tuple(o for o in self.objects if o.planted)

    def image_ref(self, pixel_source: str = "") -> ImageRef:
        return ImageRef(self.image_id, self.width, self.height, pixel_source)

    def tight_box(self, index: int) -> tuple[int, int, int, int]:
        """Pixel box ``(x1, y1, x2, y2)`` with exclusive upper edges around the painted mask."""
        ys, xs = np.nonzero(self.masks[index])
        return int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1

    def reference_description(self) -> str:
        """What the scripted captioner 'sees': every object plus every distractor."""
        phrases = [o.phrase for o in self.objects] + list(self.distractor_phrases)
        random.Random(self.seed).shuffle(phrases)
        if not phrases:
            return "An empty synthetic scene."
        items = [f"a {p}" for p in phrases]
        listing = items[0] if len(items) == 1 else ", ".join(items[:-1]) + " and " + items[-1]
        return f"A synthetic scene with {listing}."

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SyntheticScene):
            return NotImplemented
        return (self.seed, self.width, self.height, self.objects, self.distractor_phrases) == \
            (other.seed, other.width, other.height, other.objects, other.distractor_phrases) and \
            all(np.array_equal(a, b) for a, b in zip(self.masks, other.masks)) and \
            np.array_equal(self.depth, other.depth)


def shape_mask(shape: str, region: tuple[int, int, int, int], width: int, height: int) -> np.ndarray:
    x, y, w, h = region
    mask = np.zeros((height, width), dtype=bool)
    if shape == "rect":
        mask[y:y + h, x:x + w] = True
        return mask
    yy, xx = np.mgrid[y:y + h, x:x + w]
    cx, cy, rx, ry = x + w / 2, y + h / 2, w / 2, h / 2
    inside = ((xx + 0.5 - cx) / rx) ** 2 + ((yy + 0.5 - cy) / ry) ** 2 <= 1.0
    mask[y:y + h, x:x + w] = inside
    return mask


def _pick_phrases(rng: random.Random, count: int) -> list[str]:
    pool = [f"{c} {n}" for c in COLORS for n in NOUNS]
    rng.shuffle(pool)
    chosen: list[str] = []
    for phrase in pool:
        if len(chosen) == count:
            break
        if any(phrase in p or p in phrase for p in chosen):
            continue
        chosen.append(phrase)
    return chosen


def generate_scene(seed: int, n_objects: int = 3, n_distractors: int = 2,
                   max_side: int = 256, min_side: int = 48) -> SyntheticScene:
    """Deterministic scene from ``seed`` with up to ``n_objects`` planted objects.

    Placement is by rejection sampling; with the default size bounds every
    requested object fits.
    """
    if n_objects < 0 or n_distractors < 0:
        raise ValueError("object and distractor counts must be >= 0")
    rng = random.Random(seed)
    width, height = rng.randint(min_side, max_side), rng.randint(min_side, max_side)
    phrases = _pick_phrases(rng, n_objects + n_distractors)
    depths = rng.sample(range(100, 900), n_objects)

    objects: list[SceneObject] = []
    masks: list[np.ndarray] = []
    frames: list[tuple[int, int, int, int]] = []
    limit = max(MIN_SIDE, min(width, height) // 4)
    for i in range(n_objects):
        for _ in range(2000):
            w, h = rng.randint(MIN_SIDE, limit), rng.randint(MIN_SIDE, limit)
            x, y = rng.randint(0, width - w), rng.randint(0, height - h)
            if all(x + w + 1 <= fx or fx + fw + 1 <= x or y + h + 1 <= fy or fy + fh + 1 <= y
                   for fx, fy, fw, fh in frames):
                break
        else:
            raise RuntimeError(f"seed {seed}: could not place object {i}")
        shape = rng.choice(("rect", "ellipse"))
        frames.append((x, y, w, h))
        objects.append(SceneObject(phrases[i], shape, (x, y, w, h), depths[i] / 100.0))
        masks.append(shape_mask(shape, (x, y, w, h), width, height))

    return build_scene(seed, width, height, objects, phrases[n_objects:])


def build_scene(seed: int, width: int, height: int, objects: Sequence[SceneObject],
                distractors: Sequence[str] = (), background_depth: float = BACKGROUND_DEPTH) -> SyntheticScene:
    """Rasterize hand-placed objects.  Later objects paint over earlier ones."""
    phrases = [o.phrase for o in objects]
    if len(set(phrases)) != len(phrases) or set(phrases) & set(distractors):
        raise ValueError("object phrases must be distinct and disjoint from distractors")
    masks = []
    for obj in objects:
        x, y, w, h = obj.region
        if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > width or y + h > height:
            raise ValueError(f"region {obj.region} of {obj.phrase!r} is outside {width}x{height}")
        masks.append(shape_mask(obj.shape, obj.region, width, height))
    depth = np.full((height, width), float(background_depth))
    for i, obj in enumerate(objects):
        if obj.planted:
            depth[masks[i]] = obj.depth_value
            for j in range(i):
                masks[j] &= ~masks[i]
    for i, obj in enumerate(objects):
        if not obj.planted:
            masks[i][:] = False
    for arr in masks:
        arr.setflags(write=False)
    depth.setflags(write=False)
    return SyntheticScene(seed, width, height, tuple(objects), tuple(distractors), tuple(masks), depth,
                          float(background_depth))


def render_pixels(scene: SyntheticScene) -> np.ndarray:
    """8-bit grayscale rendering: nearer objects are brighter, background is black."""
    pixels = np.zeros((scene.height, scene.width), dtype=np.uint8)
    for obj, mask in zip(scene.objects, scene.masks):
        pixels[mask] = int(round(255 - 20 * obj.depth_value))
    return pixels


def write_pgm(path: str | Path, pixels: np.ndarray) -> None:
    height, width = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(pixels, dtype=np.uint8).tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5" or int(parts[3]) != 255:
        raise ValueError(f"{path}: not an 8-bit binary PGM")
    width, height = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: width * height], dtype=np.uint8).reshape(height, width)


def scene_sidecar(scene: SyntheticScene) -> dict:
    return {
        "image_id": scene.image_id,
        "seed": scene.seed,
        "width": scene.width,
        "height": scene.height,
        "background_depth": scene.background_depth,
        "objects": [
            {"phrase": o.phrase, "shape": o.shape, "region": list(o.region), "depth": o.depth_value,
             "planted": o.planted,
             "box": list(scene.tight_box(i)) if scene.masks[i].any() else None}
            for i, o in enumerate(scene.objects)
        ],
        "distractors": list(scene.distractor_phrases),
        "reference_description": scene.reference_description(),
    }


def write_scene(scene: SyntheticScene, directory: str | Path) -> ImageRef:
    """Write ``<id>.pgm`` and ``<id>.json``; return an ImageRef pointing at the PGM."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pgm = directory / f"{scene.image_id}.pgm"
    write_pgm(pgm, render_pixels(scene))
    (directory / f"{scene.image_id}.json").write_text(json.dumps(scene_sidecar(scene), indent=2) + "\n")
    return scene.image_ref(str(pgm))
