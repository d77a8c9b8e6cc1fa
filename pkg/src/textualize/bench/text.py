"""Tokenization, syllable counting, readability formulas and description statistics."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .report import DegenerateInput, MetricReport

_WORD = re.compile(r"[A-Za-z0-9]+(?:['’][A-Za-z0-9]+)*")
_TERMINATOR = re.compile(r"[.!?]+(?=\s|$)")
_ABBREVIATION = re.compile(
    r"(?:^|[^A-Za-z])(?:mr|mrs|ms|dr|prof|sr|jr|st|vs|etc|fig|no|e\.g|i\.e|approx)\.$", re.IGNORECASE)
_VOWEL_GROUP = re.compile(r"[aeiouy]+")


@dataclass(frozen=True)
class TokenizedText:
    tokens: tuple[str, ...]
    sentences: tuple[tuple[int, int], ...]
    char_count: int
    syllable_counts: tuple[int, ...]


def count_syllables(word: str) -> int:
    """Vowel-group heuristic with a silent-e rule; never less than 1."""
    letters = re.sub(r"[^a-z]", "", word.lower())
    if not letters:
        return 1
    n = len(_VOWEL_GROUP.findall(letters))
    if n > 1 and letters.endswith("e") and not letters.endswith("ee"):
        consonant_le = len(letters) >= 3 and letters.endswith("le") and letters[-3] not in "aeiouy"
        if not consonant_le:
            n -= 1
    return max(1, n)


def _sentence_breaks(text: str) -> list[int]:
    breaks = []
    for match in _TERMINATOR.finditer(text):
        if match.group(0) == "." and _ABBREVIATION.search(text[: match.end()]):
            continue
        breaks.append(match.end())
    return breaks


def tokenize(text: str) -> TokenizedText:
    matches = list(_WORD.finditer(text))
    tokens = tuple(m.group(0).lower() for m in matches)
    breaks = _sentence_breaks(text)

    sentences = []
    start = 0
    b = 0
    for i, match in enumerate(matches):
        crossed = False
        while b < len(breaks) and breaks[b] <= match.start():
            b += 1
            crossed = True
        if crossed and i > start:
            sentences.append((start, i))
            start = i
    if len(tokens) > start:
        sentences.append((start, len(tokens)))

    chars = sum(sum(ch.isalnum() for ch in tok) for tok in tokens)
    return TokenizedText(tokens, tuple(sentences), chars, tuple(count_syllables(t) for t in tokens))


def readability(text: str | TokenizedText) -> list[MetricReport]:
    """ARI, Flesch-Kincaid grade, SMOG and their arithmetic mean."""
    tt = tokenize(text) if isinstance(text, str) else text
    words, sentences = len(tt.tokens), len(tt.sentences)
    if sentences == 0 or words == 0:
        raise DegenerateInput("readability needs at least one sentence")
    syllables = sum(tt.syllable_counts)
    polysyllables = sum(1 for s in tt.syllable_counts if s >= 3)

    ari = 4.71 * (tt.char_count / words) + 0.5 * (words / sentences) - 21.43
    fk = 0.39 * (words / sentences) + 11.8 * (syllables / words) - 15.59
    smog = 1.0430 * math.sqrt(polysyllables * 30 / sentences) + 3.1291
    counts = {"words": words, "sentences": sentences, "chars": tt.char_count,
              "syllables": syllables, "polysyllables": polysyllables}
    return [
        MetricReport("ARI", ari, counts),
        MetricReport("FK", fk, counts),
        MetricReport("SMOG", smog, counts),
        MetricReport("LIN-Avg", (ari + fk + smog) / 3, counts),
    ]


def description_stats(text: str) -> MetricReport:
    tt = tokenize(text)
    return MetricReport("stats", float(len(tt.tokens)),
                        {"words": len(tt.tokens), "sentences": len(tt.sentences)})
