"""Reference-based n-gram metrics: BLEU-1..4, ROUGE-L and CIDEr-D."""

from __future__ import annotations

import math
from collections import Counter
from typing import Mapping, Sequence

from .report import AlignmentError, DegenerateInput, MetricReport
from .text import tokenize

BLEU_EPSILON = 1e-9
ROUGE_BETA = 1.2
CIDER_SIGMA = 6.0
CIDER_MAX_N = 4


def _words(text: str | Sequence[str]) -> tuple[str, ...]:
    return tokenize(text).tokens if isinstance(text, str) else tuple(text)


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _closest_ref_length(c: int, ref_lengths: Sequence[int]) -> int:
    return min(ref_lengths, key=lambda r: (abs(r - c), r))


def _bleu_stats(cand: Sequence[str], refs: Sequence[Sequence[str]], max_n: int) -> tuple[list[int], list[int]]:
    matched, totals = [], []
    for n in range(1, max_n + 1):
        counts = ngrams(cand, n)
        best: Counter = Counter()
        for ref in refs:
            best |= ngrams(ref, n)
        matched.append(sum(min(c, best[g]) for g, c in counts.items()))
        totals.append(max(len(cand) - n + 1, 0))
    return matched, totals


def _bleu_reports(matched, totals, c: int, r: int, max_n: int) -> list[MetricReport]:
    # zero precisions get an epsilon numerator so log() stays finite
    precisions = [m / t if m > 0 else BLEU_EPSILON / max(t, 1) for m, t in zip(matched, totals)]
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    reports = []
    for n in range(1, max_n + 1):
        log_mean = math.fsum(math.log(p) for p in precisions[:n]) / n
        reports.append(MetricReport(f"BLEU-{n}", bp * math.exp(log_mean), {
            "precision": precisions[n - 1], "brevity_penalty": bp,
            "candidate_length": c, "reference_length": r}))
    return reports


def bleu(candidate, references, max_n: int = 4) -> list[MetricReport]:
    """Sentence BLEU-1..max_n against one or more references."""
    if not 1 <= max_n <= 4:
        raise ValueError("max_n must be in 1..4")
    cand = _words(candidate)
    refs = [_words(r) for r in ([references] if isinstance(references, str) else references)]
    if not cand:
        raise DegenerateInput("candidate has no tokens")
    if not refs:
        raise DegenerateInput("at least one reference is required")
    matched, totals = _bleu_stats(cand, refs, max_n)
    r = _closest_ref_length(len(cand), [len(x) for x in refs])
    return _bleu_reports(matched, totals, len(cand), r, max_n)


def corpus_bleu(candidates: Mapping[str, str], references: Mapping[str, Sequence[str]],
                max_n: int = 4) -> list[MetricReport]:
    """Corpus BLEU: clipped counts and lengths summed over all items before combining."""
    ids = _aligned_ids(candidates, references)
    matched = [0] * max_n
    totals = [0] * max_n
    c = r = 0
    for key in ids:
        cand = _words(candidates[key])
        refs = [_words(x) for x in references[key]]
        m, t = _bleu_stats(cand, refs, max_n)
        matched = [a + b for a, b in zip(matched, m)]
        totals = [a + b for a, b in zip(totals, t)]
        c += len(cand)
        r += _closest_ref_length(len(cand), [len(x) for x in refs])
    if c == 0:
        raise DegenerateInput("every candidate is empty")
    return _bleu_reports(matched, totals, c, r, max_n)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate, references, beta: float = ROUGE_BETA) -> MetricReport:
    """LCS F-measure; with several references the best precision and recall are used."""
    cand = _words(candidate)
    refs = [_words(r) for r in ([references] if isinstance(references, str) else references)]
    if not cand or not refs or any(not r for r in refs):
        raise DegenerateInput("ROUGE-L needs a nonempty candidate and nonempty references")
    precision = recall = 0.0
    for ref in refs:
        lcs = lcs_length(cand, ref)
        precision = max(precision, lcs / len(cand))
        recall = max(recall, lcs / len(ref))
    if precision == 0.0 or recall == 0.0:
        score = 0.0
    else:
        b2 = beta * beta
        score = (1 + b2) * precision * recall / (recall + b2 * precision)
    return MetricReport("ROUGE-L", score, {"precision": precision, "recall": recall})


def corpus_rouge_l(candidates: Mapping[str, str], references: Mapping[str, Sequence[str]]) -> MetricReport:
    ids = _aligned_ids(candidates, references)
    scores = [rouge_l(candidates[k], references[k]).value for k in ids]
    return MetricReport("ROUGE-L", math.fsum(scores) / len(scores), {"n": len(scores)})


def _aligned_ids(candidates: Mapping, references: Mapping) -> list[str]:
    missing_cand = sorted(set(references) - set(candidates))
    missing_refs = sorted(set(candidates) - set(references))
    if missing_cand or missing_refs:
        raise AlignmentError(missing_cand, missing_refs)
    if not candidates:
        raise DegenerateInput("empty corpus")
    for key, refs in references.items():
        if not refs:
            raise AlignmentError([], [key])
    return sorted(candidates)


def cider(candidates: Mapping[str, str], references: Mapping[str, Sequence[str]],
          sigma: float = CIDER_SIGMA) -> MetricReport:
    """CIDEr-D over a corpus (x10 scale), with document frequencies taken from the references."""
    ids = _aligned_ids(candidates, references)
    cand_counts = {k: [ngrams(_words(candidates[k]), n) for n in range(1, CIDER_MAX_N + 1)] for k in ids}
    ref_tokens = {k: [_words(r) for r in references[k]] for k in ids}
    ref_counts = {k: [[ngrams(t, n) for n in range(1, CIDER_MAX_N + 1)] for t in ref_tokens[k]] for k in ids}

    doc_freq: Counter = Counter()
    for k in ids:
        seen = set()
        for per_n in ref_counts[k]:
            for counts in per_n:
                seen.update(counts)
        doc_freq.update(seen)
    log_corpus = math.log(float(len(ids)))

    def weigh(per_n: list[Counter]) -> tuple[list[dict], list[float]]:
        vecs, norms = [], []
        for counts in per_n:
            vec = {g: tf * (log_corpus - math.log(max(1.0, doc_freq[g]))) for g, tf in counts.items()}
            vecs.append(vec)
            norms.append(math.sqrt(sum(w * w for w in vec.values())))
        return vecs, norms

    per_image = {}
    for k in ids:
        hyp_vec, hyp_norm = weigh(cand_counts[k])
        hyp_len = len(_words(candidates[k]))
        total = [0.0] * CIDER_MAX_N
        for per_n, ref in zip(ref_counts[k], ref_tokens[k]):
            ref_vec, ref_norm = weigh(per_n)
            penalty = math.exp(-((hyp_len - len(ref)) ** 2) / (2 * sigma ** 2))
            for n in range(CIDER_MAX_N):
                val = sum(min(w, ref_vec[n].get(g, 0.0)) * ref_vec[n].get(g, 0.0) for g, w in hyp_vec[n].items())
                if hyp_norm[n] != 0 and ref_norm[n] != 0:
                    val /= hyp_norm[n] * ref_norm[n]
                total[n] += val * penalty
        per_image[k] = 10.0 * (sum(total) / CIDER_MAX_N) / len(ref_tokens[k])
    score = math.fsum(per_image.values()) / len(per_image)
    return MetricReport("CIDEr", score, {f"image:{k}": v for k, v in per_image.items()})
