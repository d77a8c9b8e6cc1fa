"""Per-image orchestration of the three phases with a resumable on-disk stage cache.

Cache layout: ``<cache>/<config fingerprint>/<image id>.<stage>``, one JSON file
per completed stage.  Failed stages are never cached, so a re-run retries them.
"""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence
from urllib.parse import quote

from .detail import build_finegrained_info
from .gateway import Backends, ChatBackend, ChatMessage
from .gateway.transport import atomic_write_text
from .hallucination import HallucinationReport, detect_hallucinations
from .model import (
    COMPLETE,
    AnnotationRecord,
    ImageRef,
    ObjectAnnotation,
    PipelineConfig,
    StageStatus,
    annotation_from_dict,
    annotation_to_dict,
    config_fingerprint,
    dumps_record,
)
from .prompting import (
    ROUNDING_VERSION,
    parse_recaption_response,
    render_phase_a_prompt,
    render_recaption_prompt,
)

log = logging.getLogger(__name__)

STAGES = ("a", "b", "c")


class StageCache:
    """``readable=False`` makes the cache write-only: every stage recomputes and overwrites."""

    def __init__(self, root: str | Path, fingerprint: str, readable: bool = True):
        if not fingerprint:
            raise ValueError("cache needs a config fingerprint")
        self.dir = Path(root) / fingerprint
        self.readable = readable

    def path(self, image_id: str, stage: str) -> Path:
        if not image_id or stage not in STAGES:
            raise ValueError(f"bad cache key ({image_id!r}, {stage!r})")
        return self.dir / f"{quote(image_id, safe='')}.{stage}"

    def get(self, image_id: str, stage: str) -> dict[str, Any] | None:
        path = self.path(image_id, stage)
        if not self.readable or not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def put(self, image_id: str, stage: str, value: dict[str, Any]) -> None:
        atomic_write_text(self.path(image_id, stage), json.dumps(value, ensure_ascii=False, sort_keys=True))


@dataclass
class RunSummary:
    images: int = 0
    complete: int = 0
    failed: dict[str, int] = field(default_factory=lambda: {"phase_a": 0, "phase_b": 0, "phase_c": 0})
    cache_hits: int = 0
    backend_calls: int = 0
    dataset: str = ""
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def hit(self) -> None:
        with self._lock:
            self.cache_hits += 1

    def add(self, record: AnnotationRecord) -> None:
        with self._lock:
            self.images += 1
            stage = record.stage_status.failed_stage()
            if stage:
                self.failed[stage] += 1
            elif record.stage_status.is_complete():
                self.complete += 1

    @property
    def failures(self) -> int:
        return sum(self.failed.values())

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset": self.dataset,
            "images": self.images,
            "complete": self.complete,
            "failed": dict(self.failed),
            "cache_hits": self.cache_hits,
            "backend_calls": self.backend_calls,
        }


def _cached(cache: StageCache | None, summary: RunSummary | None, image_id: str, stage: str):
    if cache is None:
        return None
    value = cache.get(image_id, stage)
    if value is not None and summary is not None:
        summary.hit()
    return value


def run_phase_a(image: ImageRef, chat: ChatBackend, config: PipelineConfig,
                cache: StageCache | None = None, summary: RunSummary | None = None) -> str:
    cached = _cached(cache, summary, image.id, "a")
    if cached is not None:
        return cached["reference_description"]
    prompt = render_phase_a_prompt(config)
    reference = chat.chat([ChatMessage.user(image, prompt.rendered)])
    if cache is not None:
        cache.put(image.id, "a", {"reference_description": reference})
    return reference


def run_phase_b(image: ImageRef, reference: str, backends: Backends, config: PipelineConfig,
                cache: StageCache | None = None, summary: RunSummary | None = None,
                verify_pool: ThreadPoolExecutor | None = None,
                ) -> tuple[HallucinationReport, list[ObjectAnnotation]]:
    cached = _cached(cache, summary, image.id, "b")
    if cached is not None:
        return (HallucinationReport.from_dict(cached["report"]),
                [annotation_from_dict(o) for o in cached["objects"]])
    report = detect_hallucinations(
        image, reference, backends.llm, backends.detector, config.detector_threshold,
        retry_limit=config.retry_limit, executor=verify_pool, template_version=config.template_version)
    objects = build_finegrained_info(image, backends, config.depth_orientation)
    if cache is not None:
        cache.put(image.id, "b", {"report": report.to_dict(), "objects": [annotation_to_dict(o) for o in objects]})
    return report, objects


def run_phase_c(image: ImageRef, reference: str, report: HallucinationReport,
                objects: Sequence[ObjectAnnotation], chat: ChatBackend, config: PipelineConfig,
                cache: StageCache | None = None, summary: RunSummary | None = None) -> str:
    cached = _cached(cache, summary, image.id, "c")
    if cached is not None:
        return cached["final_description"]
    prompt = render_recaption_prompt(reference, report.hallucinated, objects, config.template_version)
    final = parse_recaption_response(chat.chat([ChatMessage.user(prompt.rendered)]))
    if cache is not None:
        cache.put(image.id, "c", {"final_description": final})
    return final


def _reason(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}"


class Pipeline:
    """Runs A -> B -> C for each image; failures are recorded, never raised."""

    def __init__(self, config: PipelineConfig, backends: Backends, cache_dir: str | Path | None = None,
                 max_concurrency: int = 4, reuse_cache: bool = True):
        if config.rounding_version != ROUNDING_VERSION:
            raise ValueError(f"unsupported rounding_version {config.rounding_version!r}; "
                             f"this build renders {ROUNDING_VERSION!r}")
        self.config = config
        self.backends = backends
        self.fingerprint = config_fingerprint(config)
        self.cache = StageCache(cache_dir, self.fingerprint, reuse_cache) if cache_dir is not None else None
        self.max_concurrency = max_concurrency

    def process(self, image: ImageRef, summary: RunSummary | None = None,
                verify_pool: ThreadPoolExecutor | None = None) -> AnnotationRecord:
        record = AnnotationRecord(image=image, config_fingerprint=self.fingerprint)
        status = StageStatus()
        try:
            reference = run_phase_a(image, self.backends.mllm, self.config, self.cache, summary)
        except Exception as exc:
            log.warning("image %s: phase A failed: %s", image.id, exc)
            return replace(record, stage_status=replace(status, phase_a=StageStatus.failed(_reason(exc))))
        status = replace(status, phase_a=COMPLETE)
        record = replace(record, reference_description=reference, stage_status=status)

        try:
            report, objects = run_phase_b(image, reference, self.backends, self.config,
                                          self.cache, summary, verify_pool)
        except Exception as exc:
            log.warning("image %s: phase B failed: %s", image.id, exc)
            return replace(record, stage_status=replace(status, phase_b=StageStatus.failed(_reason(exc))))
        status = replace(status, phase_b=COMPLETE)
        record = replace(record, hallucinations=tuple(report.hallucinated), objects=tuple(objects),
                         stage_status=status)

        try:
            final = run_phase_c(image, reference, report, objects, self.backends.llm, self.config,
                                self.cache, summary)
        except Exception as exc:
            log.warning("image %s: phase C failed: %s", image.id, exc)
            return replace(record, stage_status=replace(status, phase_c=StageStatus.failed(_reason(exc))))
        return replace(record, final_description=final, stage_status=replace(status, phase_c=COMPLETE))

    def run(self, images: Sequence[ImageRef], out_path: str | Path,
            parallelism: int = 4) -> tuple[Path, RunSummary, list[AnnotationRecord]]:
        ids = [img.id for img in images]
        if len(set(ids)) != len(ids):
            raise ValueError("image ids must be unique within a run")
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        summary = RunSummary(dataset=str(out_path))
        calls_before = self.backends.total_calls()
        with ThreadPoolExecutor(max(1, self.max_concurrency)) as verify_pool, \
                ThreadPoolExecutor(max(1, parallelism)) as pool:
            records = list(pool.map(lambda img: self.process(img, summary, verify_pool), images))
        for record in records:
            summary.add(record)
        summary.backend_calls = self.backends.total_calls() - calls_before

        atomic_write_text(out_path, "".join(dumps_record(r) + "\n" for r in records))
        atomic_write_text(summary_path(out_path), json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n")
        return out_path, summary, records


def summary_path(dataset: str | Path) -> Path:
    dataset = Path(dataset)
    return dataset.with_name(dataset.stem + ".summary.json")


def run_pipeline(images: Sequence[ImageRef], config: PipelineConfig, backends: Backends,
                 out_path: str | Path, cache_dir: str | Path | None = None,
                 parallelism: int = 4, max_concurrency: int = 4) -> tuple[Path, RunSummary]:
    path, summary, _ = Pipeline(config, backends, cache_dir, max_concurrency).run(images, out_path, parallelism)
    return path, summary
