"""Prompt templates and response parsers for the three LLM interactions.

Templates ship as text assets next to this module.  Any edit to an asset must
bump ``TEMPLATE_VERSION`` because rendered bytes feed fixture and cache keys.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from functools import lru_cache
from importlib import resources
from typing import Sequence

from ..model import ObjectAnnotation, PipelineConfig

log = logging.getLogger(__name__)

TEMPLATE_VERSION = "it-prompts/1"
ROUNDING_VERSION = "round-half-away-2dp/1"

ENTITY_MARKER = "%%%RESPONSE%%%:"
ORIGINAL_MARKER = "%%%The Original Description:%%%"
RECAPTION_MARKER = "%%%Your Modified Description:%%%"
SECTION_RULE = "-" * 20

_COT_SPAN = re.compile(r"@@@.*?@@@", re.DOTALL)
_NEWLINE_RUN = re.compile(r"\s*\n\s*")


class MarkerMissing(ValueError):
    """The LLM ignored the required response prefix; worth retrying."""


class EmptyDescription(ValueError):
    pass


@dataclass(frozen=True)
class PromptBundle:
    rendered: str
    expected_response_marker: str | None
    template_version: str
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class ObjectBlock:
    index: int
    phrase: str
    positioning_text: str
    distance_text: str
    size_text: str

    @property
    def text(self) -> str:
        return "\n".join([
            f"Object{self.index}: {self.phrase}",
            f"Relative Spatial Positioning: {self.positioning_text}",
            f"Distance from the Lens: {self.distance_text}",
            f"Relative Size Proportion in Images (Percentage): {self.size_text}",
        ])


@lru_cache(maxsize=None)
def load_asset(name: str, template_version: str = TEMPLATE_VERSION) -> str:
    if template_version != TEMPLATE_VERSION:
        raise ValueError(f"unknown template version {template_version!r}; shipped: {TEMPLATE_VERSION!r}")
    text = resources.files(__package__).joinpath("assets", name).read_text(encoding="utf-8")
    return text[:-1] if text.endswith("\n") else text


def _fill(template: str, values: dict[str, str]) -> str:
    # single pass, so substituted text is never re-scanned for placeholders
    pattern = re.compile("|".join(re.escape(k) for k in values))
    return pattern.sub(lambda m: values[m.group(0)], template)


def format_number(value: float) -> str:
    """Round half away from zero to 2 dp, then drop a trailing hundredths zero.

    >>> [format_number(v) for v in (1.0, 0.8, 0.96, 5.575, 0.005)]
    ['1.0', '0.8', '0.96', '5.58', '0.01']
    """
    return _format_decimal(Decimal(repr(float(value))))


def _format_decimal(value: Decimal) -> str:
    q = value.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    if q == 0:
        q = Decimal("0.00")
    text = f"{q:.2f}"
    return text[:-1] if text.endswith("0") else text


def render_phase_a_prompt(config: PipelineConfig | None = None) -> PromptBundle:
    config = config or PipelineConfig()
    return PromptBundle(config.describe_instruction, None, config.template_version)


def render_extract_prompt(description: str, template_version: str = TEMPLATE_VERSION) -> PromptBundle:
    if not description.strip():
        raise ValueError("description must be nonempty")
    warnings = []
    if ENTITY_MARKER in description:
        warnings.append(f"description contains the response marker {ENTITY_MARKER!r}; passed through verbatim")
        log.warning(warnings[-1])
    rendered = _fill(load_asset("extract_prompt.txt", template_version), {
        "<In-Context Examples>": load_asset("extract_examples.txt", template_version),
        "<Description>": description,
    })
    return PromptBundle(rendered, ENTITY_MARKER, template_version, tuple(warnings))


def strip_reasoning(text: str) -> str:
    """Remove ``@@@ ... @@@`` chain-of-thought spans."""
    return _COT_SPAN.sub("", text)


def parse_entity_response(text: str) -> list[str]:
    text = strip_reasoning(text)
    start = text.find(ENTITY_MARKER)
    if start < 0:
        raise MarkerMissing(f"response lacks {ENTITY_MARKER!r}")
    body = text[start + len(ENTITY_MARKER):]
    return [_NEWLINE_RUN.sub(" ", piece.strip()) for piece in body.split(".") if piece.strip()]


def render_object_block(index: int, obj: ObjectAnnotation) -> ObjectBlock:
    box = ", ".join(format_number(v) for v in obj.bbox.as_list())
    percent = Decimal(repr(float(obj.size_frac))) * 100
    return ObjectBlock(
        index=index,
        phrase=obj.phrase,
        positioning_text=f"[{box}]",
        distance_text=format_number(obj.depth_rel),
        size_text=_format_decimal(percent),
    )


def render_annotations(hallucinations: Sequence[str], objects: Sequence[ObjectAnnotation]) -> str:
    lines = [SECTION_RULE, ("Hallucinations: " + "; ".join(hallucinations)) if hallucinations else "Hallucinations:"]
    for i, obj in enumerate(objects, start=1):
        lines.append("")
        lines.append(render_object_block(i, obj).text)
    lines.append(SECTION_RULE)
    return "\n".join(lines)


def render_recaption_prompt(
    reference: str,
    hallucinations: Sequence[str],
    objects: Sequence[ObjectAnnotation],
    template_version: str = TEMPLATE_VERSION,
) -> PromptBundle:
    if not reference.strip():
        raise ValueError("reference description must be nonempty")
    rendered = _fill(load_asset("recaption_prompt.txt", template_version), {
        "<IN-CONTEXT EXAMPLES>": load_asset("recaption_examples.txt", template_version),
        "<Original Description>": reference,
        "<FINE-GRAINED OBJECTS' ANNOTATIONS>": render_annotations(hallucinations, objects),
    })
    return PromptBundle(rendered, RECAPTION_MARKER, template_version)


def parse_recaption_response(text: str) -> str:
    text = strip_reasoning(text)
    at = text.rfind(RECAPTION_MARKER)
    if at >= 0:
        text = text[at + len(RECAPTION_MARKER):]
    text = text.strip()
    if not text:
        raise EmptyDescription("recaptioning response is empty")
    return text


__all__ = [
    "ENTITY_MARKER", "EmptyDescription", "MarkerMissing", "ObjectBlock", "ORIGINAL_MARKER", "PromptBundle",
    "RECAPTION_MARKER", "ROUNDING_VERSION", "SECTION_RULE", "TEMPLATE_VERSION", "format_number",
    "parse_entity_response", "parse_recaption_response", "render_annotations", "render_extract_prompt",
    "render_object_block", "render_phase_a_prompt", "render_recaption_prompt", "strip_reasoning",
]
