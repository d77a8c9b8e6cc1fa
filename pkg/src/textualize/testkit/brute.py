"""Per-pixel reference measurements computed with plain Python loops.

Deliberately independent of ``textualize.detail``: no numpy reductions, no
shared helpers.  Everything is read straight off the scene's ground-truth
masks and depth raster.
"""

from __future__ import annotations

from dataclasses import dataclass

from .scene import SyntheticScene


@dataclass(frozen=True)
class BruteMeasure:
    phrase: str
    depth_mean: float
    depth_rel: float
    size_frac: float
    bbox: tuple[float, float, float, float]


def _measure(mask_rows: list[list[bool]], depth_rows: list[list[float]], frame: tuple[int, int, int, int]):
    x0, y0, w, h = frame
    total = 0.0
    count = 0
    xs_min = ys_min = None
    xs_max = ys_max = None
    for y in range(y0, y0 + h):
        for x in range(x0, x0 + w):
            if mask_rows[y][x]:
                total += depth_rows[y][x]
                count += 1
                xs_min = x if xs_min is None or x < xs_min else xs_min
                ys_min = y if ys_min is None or y < ys_min else ys_min
                xs_max = x if xs_max is None or x > xs_max else xs_max
                ys_max = y if ys_max is None or y > ys_max else ys_max
    return total, count, (xs_min, ys_min, xs_max + 1, ys_max + 1)


def brute_minmax(values: list[float], near_is_low: bool) -> list[float]:
    lo = values[0]
    hi = values[0]
    for v in values:
        if v < lo:
            lo = v
        if v > hi:
            hi = v
    out = []
    for v in values:
        if hi == lo:
            out.append(0.5)
        elif near_is_low:
            out.append((hi - v) / (hi - lo))
        else:
            out.append((v - lo) / (hi - lo))
    return out


def brute_force_measures(scene: SyntheticScene, near_is_low: bool = True) -> list[BruteMeasure]:
    """Depth mean, relative depth, size fraction and normalized box for each planted object.

    The loop only visits each object's drawing frame; masks are empty outside it
    by construction, so the sums equal a full-image scan.
    """
    depth_rows = scene.depth.tolist()
    raw = []
    for index, obj in enumerate(scene.objects):
        if not obj.planted:
            continue
        total, count, box = _measure(scene.masks[index].tolist(), depth_rows, obj.region)
        raw.append((obj.phrase, total / count, count / (scene.width * scene.height), box))
    relative = brute_minmax([r[1] for r in raw], near_is_low) if raw else []
    return [
        BruteMeasure(phrase, mean, rel, size,
                     (box[0] / scene.width, box[1] / scene.height, box[2] / scene.width, box[3] / scene.height))
        for (phrase, mean, size, box), rel in zip(raw, relative)
    ]
