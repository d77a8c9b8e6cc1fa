"""Hallucination detection: extract object phrases with an LLM, ground each one
with an open-set detector, and tag the ungrounded ones."""

from __future__ import annotations

import logging
from concurrent.futures import Executor
from dataclasses import dataclass

from .gateway import ChatBackend, ChatMessage, DetectorBackend, TransportError
from .model import ImageRef, clean_phrase, phrase_in_text
from .prompting import TEMPLATE_VERSION, MarkerMissing, parse_entity_response, render_extract_prompt

log = logging.getLogger(__name__)


class FormatFailure(RuntimeError):
    """The LLM kept answering without the required response marker."""


@dataclass(frozen=True)
class HallucinationReport:
    extracted: tuple[str, ...] = ()
    verified: tuple[tuple[str, float], ...] = ()
    hallucinated: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "extracted": list(self.extracted),
            "verified": [[p, s] for p, s in self.verified],
            "hallucinated": list(self.hallucinated),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HallucinationReport":
        return cls(
            extracted=tuple(data["extracted"]),
            verified=tuple((p, float(s)) for p, s in data["verified"]),
            hallucinated=tuple(data["hallucinated"]),
            warnings=tuple(data.get("warnings", ())),
        )


def dedupe_phrases(phrases: list[str]) -> list[str]:
    """Drop case-insensitive repeats, keeping the first spelling."""
    seen: set[str] = set()
    out = []
    for phrase in phrases:
        key = phrase.casefold()
        if key not in seen:
            seen.add(key)
            out.append(phrase)
    return out


def extract_entities(description: str, chat: ChatBackend, retry_limit: int = 3,
                     template_version: str = TEMPLATE_VERSION) -> list[str]:
    if not description.strip():
        raise ValueError("description must be nonempty")
    prompt = render_extract_prompt(description, template_version)
    messages = [ChatMessage.user(prompt.rendered)]
    for attempt in range(retry_limit + 1):
        reply = chat.chat(messages)
        try:
            phrases = parse_entity_response(reply)
        except MarkerMissing:
            log.warning("entity extraction reply lacked the marker (attempt %d/%d)", attempt + 1, retry_limit + 1)
            continue
        return dedupe_phrases([clean_phrase(p) for p in phrases])
    raise FormatFailure(f"entity extraction reply lacked the marker after {retry_limit + 1} attempt(s)")


def verify_entity(image: ImageRef, phrase: str, detector: DetectorBackend, threshold: float) -> tuple[bool, float]:
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    try:
        detections = detector.detect(image, phrase)
    except TransportError as exc:
        raise TransportError(f"detector failed while verifying phrase {phrase!r}: {exc}") from exc
    best = max((d.score for d in detections), default=0.0)
    return best >= threshold, best


def detect_hallucinations(
    image: ImageRef,
    description: str,
    chat: ChatBackend,
    detector: DetectorBackend,
    threshold: float,
    retry_limit: int = 3,
    executor: Executor | None = None,
    template_version: str = TEMPLATE_VERSION,
) -> HallucinationReport:
    phrases = extract_entities(description, chat, retry_limit, template_version)
    warnings = tuple(
        f"extracted phrase {p!r} does not occur verbatim in the description"
        for p in phrases if not phrase_in_text(p, description)
    )
    if executor is None:
        results = [verify_entity(image, p, detector, threshold) for p in phrases]
    else:
        futures = [executor.submit(verify_entity, image, p, detector, threshold) for p in phrases]
        results = [f.result() for f in futures]

    verified, hallucinated = [], []
    for phrase, (grounded, best) in zip(phrases, results):
        if grounded:
            verified.append((phrase, best))
        else:
            hallucinated.append(phrase)
    return HallucinationReport(tuple(phrases), tuple(verified), tuple(hallucinated), warnings)
