"""Embedding similarity (description-to-image) and POPE answer accuracy."""

from __future__ import annotations

import math
import re
from collections import defaultdict
from typing import Iterable, Mapping, Sequence

from .report import MetricReport

POPE_SPLITS = ("Adv", "Rand", "Popular")
_SPLIT_ALIASES = {
    "adv": "Adv", "adversarial": "Adv",
    "rand": "Rand", "random": "Rand",
    "pop": "Popular", "popular": "Popular",
}
_YES_NO = re.compile(r"^\W*(yes|no)\b", re.IGNORECASE)


class LengthMismatch(ValueError):
    pass


class ZeroVector(ValueError):
    pass


def _values(vec) -> Sequence[float]:
    return tuple(getattr(vec, "values", vec))


def d2i_score(original, generated) -> MetricReport:
    """100 x cosine similarity between two image embeddings."""
    a, b = _values(original), _values(generated)
    if len(a) != len(b):
        raise LengthMismatch(f"embedding lengths differ: {len(a)} vs {len(b)}")
    # scale by the largest magnitude so tiny or huge components neither underflow nor overflow
    sa = max((abs(x) for x in a), default=0.0)
    sb = max((abs(y) for y in b), default=0.0)
    if sa == 0.0 or sb == 0.0:
        raise ZeroVector("cosine similarity is undefined for a zero vector")
    a = [x / sa for x in a]
    b = [y / sb for y in b]
    aa = math.fsum(x * x for x in a)
    bb = math.fsum(y * y for y in b)
    cos = math.fsum(x * y for x, y in zip(a, b)) / math.sqrt(aa * bb)
    return MetricReport("D2I", 100.0 * max(-1.0, min(1.0, cos)))


def normalize_answer(text: str) -> str | None:
    match = _YES_NO.match(text.strip())
    return match.group(1).lower() if match else None


def normalize_split(split: str) -> str:
    try:
        return _SPLIT_ALIASES[split.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown POPE split {split!r}; expected one of {POPE_SPLITS}") from None


def pope_score(items: Iterable[Mapping | Sequence]) -> list[MetricReport]:
    """Accuracy (percent) per split plus the mean over the splits present.

    Items are ``(question_id, split, gt, answer)`` tuples or mappings with
    those keys.  Answers that do not start with yes/no count as wrong.
    """
    correct: dict[str, int] = defaultdict(int)
    total: dict[str, int] = defaultdict(int)
    unparseable: dict[str, int] = defaultdict(int)
    for item in items:
        if isinstance(item, Mapping):
            split, gt, answer = item["split"], item["gt"], item["answer"]
        else:
            _, split, gt, answer = item
        split = normalize_split(split)
        truth = normalize_answer(str(gt))
        if truth is None:
            raise ValueError(f"ground truth must be yes/no, got {gt!r}")
        guess = normalize_answer(str(answer))
        total[split] += 1
        if guess is None:
            unparseable[split] += 1
        elif guess == truth:
            correct[split] += 1
    if not total:
        raise ValueError("POPE scoring needs at least one item")

    reports = []
    for split in POPE_SPLITS:
        if total[split]:
            reports.append(MetricReport(
                f"POPE-{split}", 100.0 * correct[split] / total[split],
                {"n": total[split], "correct": correct[split], "unparseable": unparseable[split]}))
    average = math.fsum(r.value for r in reports) / len(reports)
    reports.append(MetricReport("POPE-Average", average, {
        "n": sum(total.values()), "splits": len(reports), "unparseable": sum(unparseable.values())}))
    return reports
