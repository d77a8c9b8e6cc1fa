"""Evaluation surface: n-gram caption metrics, readability, statistics, D2I and POPE."""

from .ngram import bleu, cider, corpus_bleu, corpus_rouge_l, lcs_length, ngrams, rouge_l
from .report import (
    EXTERNAL_METRICS,
    AlignmentError,
    DegenerateInput,
    MetricReport,
    format_table,
    reports_to_json,
)
from .scores import LengthMismatch, ZeroVector, d2i_score, normalize_answer, pope_score
from .text import TokenizedText, count_syllables, description_stats, readability, tokenize

__all__ = [
    "EXTERNAL_METRICS", "AlignmentError", "DegenerateInput", "LengthMismatch", "MetricReport",
    "TokenizedText", "ZeroVector", "bleu", "cider", "corpus_bleu", "corpus_rouge_l", "count_syllables",
    "d2i_score", "description_stats", "format_table", "lcs_length", "ngrams", "normalize_answer",
    "pope_score", "readability", "reports_to_json", "rouge_l", "tokenize",
]
