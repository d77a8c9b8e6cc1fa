"""Domain types, the JSONL record schema, and configuration identity."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Iterable, Mapping

import numpy as np

SCHEMA_VERSION = "it-record/1"

PENDING = "pending"
COMPLETE = "complete"
FAILED = "failed"

DEPTH_ORIENTATIONS = ("near_is_high", "near_is_low")


def clean_phrase(text: str) -> str:
    """Normalize an entity phrase: trim, fold internal newlines to spaces."""
    phrase = " ".join(str(text).split())
    if not phrase:
        raise ValueError("entity phrase must be nonempty")
    return phrase


def phrase_in_text(phrase: str, text: str) -> bool:
    return phrase.casefold() in text.casefold()


@dataclass(frozen=True)
class ImageRef:
    id: str
    width: int
    height: int
    pixel_source: str = ""

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("image id must be nonempty")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image {self.id!r}: dims must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True)
class BBoxNorm:
    x1: float
    y1: float
    x2: float
    y2: float

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    def is_valid(self) -> bool:
        return 0.0 <= self.x1 <= self.x2 <= 1.0 and 0.0 <= self.y1 <= self.y2 <= 1.0


@dataclass(frozen=True, eq=False)
class PixelMask:
    """Boolean raster stored as a read-only ``(height, width)`` array."""

    width: int
    height: int
    bits: np.ndarray

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits, dtype=bool)
        if bits.shape != (self.height, self.width):
            raise ValueError(f"mask raster shape {bits.shape} != ({self.height}, {self.width})")
        bits = bits.copy()
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PixelMask):
            return NotImplemented
        return self.width == other.width and self.height == other.height and bool(np.array_equal(self.bits, other.bits))

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class DepthMap:
    width: int
    height: int
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.height, self.width):
            raise ValueError(f"depth raster shape {values.shape} != ({self.height}, {self.width})")
        if not np.all(np.isfinite(values)):
            raise ValueError("depth raster contains non-finite values")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DepthMap):
            return NotImplemented
        return self.width == other.width and self.height == other.height and bool(np.array_equal(self.values, other.values))

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class ObjectAnnotation:
    """One fine-grained object: phrase, normalized box, relative depth (1 = nearest), area fraction.

    ``mask_fallback`` marks objects whose segmentation failed and whose size was
    taken from a box-filled mask instead.
    """

    phrase: str
    bbox: BBoxNorm
    depth_rel: float
    size_frac: float
    mask_fallback: bool = False


@dataclass(frozen=True)
class StageStatus:
    phase_a: str = PENDING
    phase_b: str = PENDING
    phase_c: str = PENDING

    @staticmethod
    def failed(reason: str) -> str:
        return f"{FAILED}: {reason}"

    @staticmethod
    def state(value: str) -> str:
        return value.split(":", 1)[0]

    def is_complete(self) -> bool:
        return all(self.state(v) == COMPLETE for v in (self.phase_a, self.phase_b, self.phase_c))

    def failed_stage(self) -> str | None:
        for name in ("phase_a", "phase_b", "phase_c"):
            if self.state(getattr(self, name)) == FAILED:
                return name
        return None


@dataclass(frozen=True)
class AnnotationRecord:
    image: ImageRef
    reference_description: str = ""
    hallucinations: tuple[str, ...] = ()
    objects: tuple[ObjectAnnotation, ...] = ()
    final_description: str | None = None
    stage_status: StageStatus = field(default_factory=StageStatus)
    config_fingerprint: str = ""


@dataclass(frozen=True)
class PipelineConfig:
    """Everything that can change pipeline output; hashed into the cache key.

    Backend locators are either ``http(s)://...`` endpoints or ``fixture:<dir>``.
    Run-time knobs such as parallelism live outside this class on purpose.
    """

    mllm_backend: str = ""
    llm_backend: str = ""
    detector_backend: str = ""
    dense_caption_backend: str = ""
    segmenter_backend: str = ""
    depth_backend: str = ""
    embedder_backend: str = ""
    mllm_model: str = "default"
    llm_model: str = "default"
    detector_threshold: float = 0.35
    retry_limit: int = 3
    depth_orientation: str = "near_is_high"
    describe_instruction: str = "Describe this image in detail."
    temperature: float = 0.2
    max_tokens: int = 1024
    rounding_version: str = "round-half-away-2dp/1"
    template_version: str = "it-prompts/1"

    def __post_init__(self) -> None:
        if not 0.0 < self.detector_threshold < 1.0:
            raise ValueError(f"detector_threshold must lie in (0, 1), got {self.detector_threshold}")
        if self.retry_limit < 0:
            raise ValueError(f"retry_limit must be >= 0, got {self.retry_limit}")
        if self.depth_orientation not in DEPTH_ORIENTATIONS:
            raise ValueError(f"depth_orientation must be one of {DEPTH_ORIENTATIONS}")


def config_from_mapping(values: Mapping[str, Any]) -> PipelineConfig:
    """Build a config from a flat mapping; unknown keys are an error."""
    known = {f.name: f for f in fields(PipelineConfig)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    kwargs: dict[str, Any] = {}
    for key, value in values.items():
        default = known[key].default
        if isinstance(default, bool) or not isinstance(default, (int, float)):
            kwargs[key] = value
        elif isinstance(default, int):
            kwargs[key] = int(value)
        else:
            kwargs[key] = float(value)
    return PipelineConfig(**kwargs)


def config_fingerprint(config: PipelineConfig) -> str:
    canonical = json.dumps(asdict(config), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def validate_record(record: AnnotationRecord) -> list[str]:
    """Return one message per broken invariant; an empty list means the record is valid."""
    problems: list[str] = []
    image = record.image
    if not image.id:
        problems.append("image.id: must be nonempty")
    if image.width < 1 or image.height < 1:
        problems.append("image.width/height: must be >= 1")

    for i, phrase in enumerate(record.hallucinations):
        if not phrase or phrase != phrase.strip() or "\n" in phrase:
            problems.append(f"hallucinations[{i}]: phrase must be nonempty, trimmed, single-line")
        elif not phrase_in_text(phrase, record.reference_description):
            problems.append(f"hallucinations[{i}]: {phrase!r} does not occur in reference_description")

    for i, obj in enumerate(record.objects):
        if not obj.phrase or obj.phrase != obj.phrase.strip() or "\n" in obj.phrase:
            problems.append(f"objects[{i}].phrase: must be nonempty, trimmed, single-line")
        if not obj.bbox.is_valid():
            problems.append(f"objects[{i}].bbox: requires 0 <= x1 <= x2 <= 1 and 0 <= y1 <= y2 <= 1")
        if not (math.isfinite(obj.depth_rel) and 0.0 <= obj.depth_rel <= 1.0):
            problems.append(f"objects[{i}].depth_rel: must lie in [0, 1]")
        if not (math.isfinite(obj.size_frac) and 0.0 < obj.size_frac <= 1.0):
            problems.append(f"objects[{i}].size_frac: must lie in (0, 1]")

    status = record.stage_status
    states = [StageStatus.state(v) for v in (status.phase_a, status.phase_b, status.phase_c)]
    for name, state in zip(("phase_a", "phase_b", "phase_c"), states):
        if state not in (PENDING, COMPLETE, FAILED):
            problems.append(f"stage_status.{name}: unknown state {state!r}")
    if states[2] == COMPLETE and states[1] != COMPLETE:
        problems.append("stage_status: phase_c complete requires phase_b complete")
    if states[1] == COMPLETE and states[0] != COMPLETE:
        problems.append("stage_status: phase_b complete requires phase_a complete")
    if record.final_description is not None and not status.is_complete():
        problems.append("stage_status: final_description present but not every stage is complete")
    if not record.config_fingerprint:
        problems.append("config_fingerprint: must be nonempty")
    return problems


# -- JSONL serialization ---------------------------------------------------


def annotation_to_dict(obj: ObjectAnnotation) -> dict[str, Any]:
    return {
        "phrase": obj.phrase,
        "bbox": obj.bbox.as_list(),
        "depth": obj.depth_rel,
        "size": obj.size_frac,
        "mask_fallback": obj.mask_fallback,
    }


def annotation_from_dict(data: Mapping[str, Any]) -> ObjectAnnotation:
    return ObjectAnnotation(
        phrase=data["phrase"],
        bbox=BBoxNorm(*(float(v) for v in data["bbox"])),
        depth_rel=float(data["depth"]),
        size_frac=float(data["size"]),
        mask_fallback=bool(data.get("mask_fallback", False)),
    )


def record_to_dict(record: AnnotationRecord) -> dict[str, Any]:
    return {
        "schema": SCHEMA_VERSION,
        "image_id": record.image.id,
        "width": record.image.width,
        "height": record.image.height,
        "pixel_source": record.image.pixel_source,
        "reference_description": record.reference_description,
        "hallucinations": list(record.hallucinations),
        "objects": [annotation_to_dict(o) for o in record.objects],
        "final_description": record.final_description,
        "stage_status": asdict(record.stage_status),
        "config_fingerprint": record.config_fingerprint,
    }


def record_from_dict(data: Mapping[str, Any]) -> AnnotationRecord:
    schema = data.get("schema")
    if schema != SCHEMA_VERSION:
        raise ValueError(f"unsupported record schema {schema!r}; expected {SCHEMA_VERSION!r}")
    return AnnotationRecord(
        image=ImageRef(data["image_id"], int(data["width"]), int(data["height"]), data.get("pixel_source", "")),
        reference_description=data["reference_description"],
        hallucinations=tuple(data["hallucinations"]),
        objects=tuple(annotation_from_dict(o) for o in data["objects"]),
        final_description=data["final_description"],
        stage_status=StageStatus(**data["stage_status"]),
        config_fingerprint=data["config_fingerprint"],
    )


def dumps_record(record: AnnotationRecord) -> str:
    return json.dumps(record_to_dict(record), ensure_ascii=False)


def loads_record(line: str) -> AnnotationRecord:
    return record_from_dict(json.loads(line))


def write_records(path, records: Iterable[AnnotationRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(dumps_record(record) + "\n")


def read_records(path) -> list[AnnotationRecord]:
    with open(path, encoding="utf-8") as fh:
        return [loads_record(line) for line in fh if line.strip()]


__all__ = [
    "AnnotationRecord",
    "BBoxNorm",
    "DepthMap",
    "ImageRef",
    "ObjectAnnotation",
    "PipelineConfig",
    "PixelMask",
    "StageStatus",
    "clean_phrase",
    "config_fingerprint",
    "config_from_mapping",
    "dumps_record",
    "loads_record",
    "read_records",
    "validate_record",
    "write_records",
]
