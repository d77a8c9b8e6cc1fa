"""Acceptance gate: one PASS/FAIL line per criterion, printed even under capture."""

import json
import time

import pytest

import oracles
import test_bench
from test_prompting import CLOCK_OBJECTS, CLOCK_REFERENCE, SKIER_OBJECTS, SKIER_REFERENCE
from textualize.bench import bleu, cider, corpus_bleu, corpus_rouge_l, d2i_score, pope_score, readability, rouge_l
from textualize.detail import build_finegrained_info, object_depth
from textualize.hallucination import detect_hallucinations
from textualize.model import DepthMap, PixelMask
from textualize.pipeline import run_pipeline
from textualize.prompting import render_extract_prompt, render_recaption_prompt
from textualize.testkit import brute_force_measures, generate_scene, oracle_backends, oracle_config

SEEDS = range(1000, 1100)


@pytest.fixture(scope="module")
def scenes():
    return [generate_scene(seed, n_objects=seed % 9, n_distractors=seed % 4) for seed in SEEDS]


@pytest.fixture
def verdict(capsys):
    def report(number, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail
    return report


def test_criterion_1_detail_matches_brute_force(scenes, verdict):
    worst = 0.0
    start = time.perf_counter()
    for scene in scenes:
        image = scene.image_ref()
        objects = build_finegrained_info(image, oracle_backends(scene), "near_is_low")
        brute = brute_force_measures(scene, near_is_low=True)
        assert [o.phrase for o in objects] == [b.phrase for b in brute]
        depth = DepthMap(scene.width, scene.height, scene.depth.tolist())
        planted = [i for i, o in enumerate(scene.objects) if o.planted]
        for obj, b, index in zip(objects, brute, planted):
            mean = object_depth(PixelMask(scene.width, scene.height, scene.masks[index]), depth)
            worst = max(worst, abs(mean - b.depth_mean), abs(obj.depth_rel - b.depth_rel),
                        abs(obj.size_frac - b.size_frac), *(abs(p - q) for p, q in zip(obj.bbox.as_list(), b.bbox)))
    elapsed = time.perf_counter() - start
    sizes_ok = all(s.width <= 256 and s.height <= 256 and len(s.objects) <= 8 for s in scenes)
    verdict(1, worst <= 1e-9 and elapsed < 10.0 and sizes_ok,
            f"100 scenes, max deviation {worst:.2e}, {elapsed:.2f} s")


def test_criterion_2_hallucination_exactness(scenes, verdict):
    tp = fp = fn = 0
    partition_ok = True
    for scene in scenes:
        backends = oracle_backends(scene)
        report = detect_hallucinations(scene.image_ref(), scene.reference_description(), backends.llm,
                                       backends.detector, 0.35)
        flagged = set(report.hallucinated)
        truth = set(scene.distractor_phrases)
        tp += len(flagged & truth)
        fp += len(flagged - truth)
        fn += len(truth - flagged)
        verified = [p for p, _ in report.verified]
        partition_ok &= sorted(verified + list(report.hallucinated)) == sorted(report.extracted)
        partition_ok &= not set(verified) & flagged
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    verdict(2, precision == 1.0 and recall == 1.0 and partition_ok and tp > 0,
            f"precision {precision}, recall {recall}, {tp} distractors, partition {'holds' if partition_ok else 'broken'}")


def _dataset(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


def test_criterion_3_end_to_end_inclusion_exclusion(scenes, tmp_path, verdict):
    out, summary = run_pipeline([s.image_ref() for s in scenes], oracle_config(), oracle_backends(scenes),
                                tmp_path / "ds.jsonl", tmp_path / "cache")
    rows = {r["image_id"]: r for r in _dataset(out)}
    bad = []
    for scene in scenes:
        row = rows[scene.image_id]
        text = (row.get("final_description") or "").lower()
        missing = [o.phrase for o in scene.planted if o.phrase.lower() not in text]
        leaked = [h for h in row["hallucinations"] if h.lower() in text]
        if missing or leaked or set(map(str.lower, row["hallucinations"])) != set(map(str.lower, scene.distractor_phrases)):
            bad.append(scene.image_id)
    verdict(3, not bad and summary.complete == len(scenes),
            f"{len(scenes) - len(bad)}/{len(scenes)} descriptions keep every planted phrase and drop every hallucination")


def test_criterion_4_idempotent_resume(scenes, tmp_path, verdict):
    images = [s.image_ref() for s in scenes[:20]]
    backends = oracle_backends(scenes[:20])
    out, first = run_pipeline(images, oracle_config(), backends, tmp_path / "ds.jsonl", tmp_path / "cache")
    before = out.read_bytes()
    out, second = run_pipeline(images, oracle_config(), backends, tmp_path / "ds.jsonl", tmp_path / "cache")
    same = out.read_bytes() == before
    verdict(4, same and second.backend_calls == 0 and first.backend_calls > 0,
            f"byte-identical {same}, backend_calls {first.backend_calls} then {second.backend_calls}")


def test_criterion_5_metric_oracle_equivalence(toy_corpus, verdict):
    cands = {r["id"]: r["candidate"] for r in toy_corpus}
    refs = {r["id"]: r["references"] for r in toy_corpus}
    pairs = [(r["candidate"], r["references"]) for r in toy_corpus]
    worst = max(abs(a.value - b) for a, b in zip(corpus_bleu(cands, refs), oracles.corpus_bleu(pairs)))
    for cand, rs in pairs:
        worst = max(worst, *(abs(a.value - b) for a, b in zip(bleu(cand, rs), oracles.sentence_bleu(cand, rs))))
        worst = max(worst, abs(rouge_l(cand, rs).value - oracles.rouge_l(cand, rs)))
    oracle_rouge = sum(oracles.rouge_l(c, rs) for c, rs in pairs) / len(pairs)
    worst = max(worst, abs(corpus_rouge_l(cands, refs).value - oracle_rouge))
    worst = max(worst, abs(cider(cands, refs).value - oracles.cider_d(pairs)[0]))
    spot_bleu = bleu("the cat", ["the cat sat"], 1)[0].value
    spot_rouge = rouge_l("the cat sat", ["the cat"]).value
    spots_ok = abs(spot_bleu - 0.6065) <= 1e-4 and abs(spot_rouge - 0.8299) <= 1e-4
    verdict(5, worst <= 1e-6 and spots_ok,
            f"max deviation {worst:.2e} over 20 pairs; BLEU-1 spot {spot_bleu:.4f}, ROUGE-L spot {spot_rouge:.4f}")


def test_criterion_6_readability(verdict):
    worst = 0.0
    for text, ari, fk, smog in test_bench.HAND_READABILITY:
        got = readability(text)
        worst = max(worst, abs(got[0].value - ari), abs(got[1].value - fk), abs(got[2].value - smog))
    failures = []
    for prop in (test_bench.test_doubling_word_length_raises_ari, test_bench.test_adding_polysyllable_raises_smog):
        try:
            prop()
        except AssertionError as exc:
            failures.append(f"{prop.__name__}: {exc}")
    verdict(6, worst <= 1e-6 and not failures,
            f"max deviation {worst:.2e}; monotonicity {'holds' if not failures else failures}")


def test_criterion_7_prompt_fidelity(golden, verdict):
    rendered = {
        "extract_prompt.txt": render_extract_prompt("A black cat sleeps on a red sofa beside a tall lamp.").rendered,
        "recaption_prompt.txt": render_recaption_prompt(CLOCK_REFERENCE, ["a traffic light", "a bus"],
                                                        CLOCK_OBJECTS).rendered,
        "recaption_prompt_no_hallucinations.txt": render_recaption_prompt(SKIER_REFERENCE, [],
                                                                          SKIER_OBJECTS).rendered,
    }
    mismatched = [name for name, text in rendered.items() if text != golden(name)]
    clock = rendered["recaption_prompt.txt"]
    formatting = all(s in clock for s in ("[0.98, 0.57, 1.0, 0.6]", "Distance from the Lens: 0.0",
                                          "(Percentage): 0.05"))
    verdict(7, not mismatched and formatting,
            f"{len(rendered) - len(mismatched)}/{len(rendered)} prompts byte-identical; object formatting {formatting}")


def test_criterion_8_degenerate_scores(verdict):
    d2i = d2i_score([0.12, -0.5, 0.33, 0.9], [0.12, -0.5, 0.33, 0.9]).value
    pope = {r.name: r.value for r in pope_score([
        ("q1", "Adv", "yes", "Yes, there is."), ("q2", "Adv", "no", "No."),
        ("q3", "Adv", "yes", "no"), ("q4", "Adv", "no", "no, there isn't"),
    ])}
    verdict(8, d2i == 100.0 and pope["POPE-Adv"] == 75.0 and pope["POPE-Average"] == 75.0,
            f"D2I {d2i!r}, POPE {pope['POPE-Adv']!r}")
