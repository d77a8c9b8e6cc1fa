"""Brute-force reference implementations of the caption metrics.

Written independently of ``textualize.bench``: plain lists, ``list.count`` for
n-gram tallies, a full dynamic-programming table for LCS, and the caption
toolkit's bigram-count length for the CIDEr-D penalty.
"""

import math
import re


def words(text):
    return re.findall(r"[a-z0-9]+", text.lower())


def all_ngrams(tokens, n):
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def clipped_matches(cand, refs, n):
    grams = all_ngrams(cand, n)
    ref_grams = [all_ngrams(r, n) for r in refs]
    total = 0
    for g in set(grams):
        total += min(grams.count(g), max(rg.count(g) for rg in ref_grams))
    return total, len(grams)


def closest_length(c, refs):
    best = None
    for r in refs:
        if best is None or abs(len(r) - c) < abs(best - c) or (abs(len(r) - c) == abs(best - c) and len(r) < best):
            best = len(r)
    return best


def _combine(matches, totals, c, r):
    out = []
    logs = []
    bp = 1.0 if c >= r else math.exp(1 - r / c)
    for m, t in zip(matches, totals):
        p = m / t if m > 0 else 1e-9 / max(t, 1)
        logs.append(math.log(p))
        out.append(bp * math.exp(sum(logs) / len(logs)))
    return out


def sentence_bleu(candidate, references):
    cand = words(candidate)
    refs = [words(r) for r in references]
    stats = [clipped_matches(cand, refs, n) for n in range(1, 5)]
    return _combine([s[0] for s in stats], [s[1] for s in stats], len(cand), closest_length(len(cand), refs))


def corpus_bleu(pairs):
    matches = [0, 0, 0, 0]
    totals = [0, 0, 0, 0]
    c = r = 0
    for candidate, references in pairs:
        cand = words(candidate)
        refs = [words(x) for x in references]
        for n in range(1, 5):
            m, t = clipped_matches(cand, refs, n)
            matches[n - 1] += m
            totals[n - 1] += t
        c += len(cand)
        r += closest_length(len(cand), refs)
    return _combine(matches, totals, c, r)


def lcs(a, b):
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[len(a)][len(b)]


def rouge_l(candidate, references, beta=1.2):
    cand = words(candidate)
    precisions = []
    recalls = []
    for ref in references:
        toks = words(ref)
        common = lcs(cand, toks)
        precisions.append(common / len(cand))
        recalls.append(common / len(toks))
    p, r = max(precisions), max(recalls)
    if p == 0 or r == 0:
        return 0.0
    return (1 + beta ** 2) * r * p / (r + beta ** 2 * p)


def cider_d(pairs, sigma=6.0):
    """``pairs`` is a list of (candidate, references); returns (corpus score, per-image scores)."""
    cands = [words(c) for c, _ in pairs]
    refs = [[words(r) for r in rs] for _, rs in pairs]
    n_images = len(pairs)

    def df(gram):
        return sum(1 for image_refs in refs if any(gram in all_ngrams(r, len(gram)) for r in image_refs))

    def vector(tokens):
        vecs = []
        for n in range(1, 5):
            grams = all_ngrams(tokens, n)
            vecs.append({g: grams.count(g) * (math.log(n_images) - math.log(max(1.0, df(g)))) for g in set(grams)})
        return vecs, max(len(tokens) - 1, 0)  # the toolkit measures length in bigrams

    scores = []
    for cand, image_refs in zip(cands, refs):
        hyp, hyp_len = vector(cand)
        acc = 0.0
        for ref_tokens in image_refs:
            ref, ref_len = vector(ref_tokens)
            per_n = []
            for n in range(4):
                dot = 0.0
                for g in hyp[n]:
                    if g in ref[n]:
                        dot += min(hyp[n][g], ref[n][g]) * ref[n][g]
                nh = math.sqrt(sum(v * v for v in hyp[n].values()))
                nr = math.sqrt(sum(v * v for v in ref[n].values()))
                if nh != 0 and nr != 0:
                    dot /= nh * nr
                per_n.append(dot * math.exp(-((hyp_len - ref_len) ** 2) / (2 * sigma ** 2)))
            acc += sum(per_n) / 4
        scores.append(10.0 * acc / len(image_refs))
    return sum(scores) / len(scores), scores
