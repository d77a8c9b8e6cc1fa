"""Metric report container and output formatting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable

# Reserved so externally computed scores slot into the same table layout.
EXTERNAL_METRICS = ("METEOR", "SPICE", "WMD")


class DegenerateInput(ValueError):
    pass


class AlignmentError(ValueError):
    def __init__(self, missing_in_candidates: list[str], missing_in_references: list[str]):
        parts = []
        if missing_in_candidates:
            parts.append(f"ids without a candidate: {', '.join(missing_in_candidates)}")
        if missing_in_references:
            parts.append(f"ids without references: {', '.join(missing_in_references)}")
        super().__init__("; ".join(parts) or "corpora are not aligned")
        self.missing_in_candidates = missing_in_candidates
        self.missing_in_references = missing_in_references


@dataclass(frozen=True)
class MetricReport:
    name: str
    value: float
    details: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ValueError(f"metric {self.name} is not finite: {self.value}")

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "details": dict(self.details)}


def reports_to_json(reports: Iterable[MetricReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n"


def format_table(reports: Iterable[MetricReport], digits: int = 4) -> str:
    rows = [(r.name, f"{r.value:.{digits}f}") for r in reports]
    if not rows:
        return ""
    width = max(len(name) for name, _ in rows)
    vwidth = max(len(v) for _, v in rows)
    return "\n".join(f"{name:<{width}}  {value:>{vwidth}}" for name, value in rows) + "\n"
