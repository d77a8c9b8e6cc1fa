"""Command-line driver.

Exit codes: 0 success, 1 fatal error (bad input, misaligned corpora, invalid
records), 2 the pipeline ran but some images failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Iterator, Sequence

from . import __version__
from .bench import (
    AlignmentError,
    MetricReport,
    corpus_bleu,
    corpus_rouge_l,
    cider,
    d2i_score,
    description_stats,
    format_table,
    pope_score,
    readability,
    reports_to_json,
)
from .gateway import build_backends
from .model import ImageRef, PipelineConfig, config_from_mapping, read_records, validate_record
from .pipeline import Pipeline

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("textualize")

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2
METRICS = ("bleu", "rouge", "cider")


class CliError(Exception):
    """Fatal, user-facing error: printed without a traceback, exit status 1."""


def _jsonl(path: str | Path) -> Iterator[tuple[int, dict[str, Any]]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            value = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CliError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(value, dict):
            raise CliError(f"{path}:{lineno}: expected a JSON object")
        yield lineno, value


def load_manifest(path: str | Path) -> list[ImageRef]:
    """JSONL lines ``{id, path, width, height}``; relative paths resolve against the manifest."""
    base = Path(path).resolve().parent
    images = []
    for lineno, row in _jsonl(path):
        try:
            source = str(row["path"])
            if not source.startswith(("http://", "https://", "data:")) and not Path(source).is_absolute():
                source = str(base / source)
            images.append(ImageRef(str(row["id"]), int(row["width"]), int(row["height"]), source))
        except (KeyError, TypeError, ValueError) as exc:
            raise CliError(f"{path}:{lineno}: bad manifest entry ({exc})") from None
    return images


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        with open(path, "rb") as fh:
            values = tomllib.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc.strerror or exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise CliError(f"config {path}: {exc}") from None
    try:
        return config_from_mapping(values)
    except (TypeError, ValueError) as exc:
        raise CliError(f"config {path}: {exc}") from None


def _emit(reports: Sequence[MetricReport], json_out: str | None) -> None:
    if json_out:
        Path(json_out).write_text(reports_to_json(reports), encoding="utf-8")
    sys.stdout.write(format_table(reports))


# subcommands

def cmd_textualize(args: argparse.Namespace) -> int:
    images = load_manifest(args.images)
    config = load_config(args.config)
    base_dir = Path(args.config).resolve().parent if args.config else Path.cwd()
    try:
        backends = build_backends(config, args.max_concurrency, args.timeout, base_dir)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    out = Path(args.out)
    cache_dir = Path(args.cache) if args.cache else out.with_name(out.stem + ".cache")
    pipeline = Pipeline(config, backends, cache_dir, args.max_concurrency, reuse_cache=args.resume)
    try:
        _, summary, _ = pipeline.run(images, out, args.jobs)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot write dataset {out}: {exc}") from None
    print(json.dumps(summary.to_dict(), sort_keys=True))
    return EXIT_PARTIAL if summary.failures else EXIT_OK


def _load_corpus(pred: str, refs: str | None) -> tuple[dict[str, str], dict[str, list[str]]]:
    candidates: dict[str, str] = {}
    references: dict[str, list[str]] = {}
    for lineno, row in _jsonl(pred):
        if "id" not in row or "candidate" not in row:
            raise CliError(f"{pred}:{lineno}: expected keys id and candidate")
        candidates[str(row["id"])] = str(row["candidate"])
        if refs is None and "references" in row:
            references[str(row["id"])] = [str(r) for r in row["references"]]
    if refs is not None:
        for lineno, row in _jsonl(refs):
            if "id" not in row or not isinstance(row.get("references"), list):
                raise CliError(f"{refs}:{lineno}: expected keys id and references (a list)")
            references[str(row["id"])] = [str(r) for r in row["references"]]
    return candidates, references


def cmd_evaluate(args: argparse.Namespace) -> int:
    metrics = [m.strip().lower() for m in args.metrics.split(",") if m.strip()]
    unknown = [m for m in metrics if m not in METRICS]
    if unknown or not metrics:
        raise CliError(f"unknown metric(s) {', '.join(unknown) or '(none)'}; choose from {', '.join(METRICS)}")
    candidates, references = _load_corpus(args.pred, args.refs)
    reports: list[MetricReport] = []
    try:
        for metric in metrics:
            if metric == "bleu":
                reports.extend(corpus_bleu(candidates, references))
            elif metric == "rouge":
                reports.append(corpus_rouge_l(candidates, references))
            else:
                reports.append(cider(candidates, references))
    except AlignmentError as exc:
        for image_id in exc.missing_in_candidates:
            print(f"missing candidate: {image_id}", file=sys.stderr)
        for image_id in exc.missing_in_references:
            print(f"missing references: {image_id}", file=sys.stderr)
        raise CliError(f"corpora are not aligned: {exc}") from None
    except ValueError as exc:
        raise CliError(str(exc)) from None
    _emit(reports, args.json)
    return EXIT_OK


def _texts(path: str, field: str) -> list[str]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}") from None
    texts = []
    for line in lines:
        if not line.strip():
            continue
        if line.lstrip().startswith("{"):
            try:
                row = json.loads(line)
            except json.JSONDecodeError:
                row = None
            if isinstance(row, dict):
                value = row.get(field)
                if isinstance(value, str):
                    texts.append(value)
                continue
        texts.append(line)
    return texts


def cmd_stats(args: argparse.Namespace) -> int:
    texts = _texts(args.input, args.field)
    if not texts:
        raise CliError(f"{args.input}: no descriptions found")
    n = len(texts)
    stats = [description_stats(t) for t in texts]
    words = sum(s.details["words"] for s in stats) / n
    sentences = sum(s.details["sentences"] for s in stats) / n
    reports = [MetricReport("words", words, {"n": n}), MetricReport("sentences", sentences, {"n": n})]
    scored = [readability(t) for t in texts if description_stats(t).details["sentences"]]
    if scored:
        for i, name in enumerate(("ARI", "FK", "SMOG", "LIN-Avg")):
            reports.append(MetricReport(name, sum(r[i].value for r in scored) / len(scored), {"n": len(scored)}))
    _emit(reports, args.json)
    return EXIT_OK


def cmd_pope(args: argparse.Namespace) -> int:
    items = []
    for lineno, row in _jsonl(args.input):
        missing = [k for k in ("question_id", "split", "gt", "answer") if k not in row]
        if missing:
            raise CliError(f"{args.input}:{lineno}: missing {', '.join(missing)}")
        items.append(row)
    try:
        reports = pope_score(items)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    _emit(reports, args.json)
    return EXIT_OK


def cmd_d2i(args: argparse.Namespace) -> int:
    scores = []
    for lineno, row in _jsonl(args.input):
        try:
            scores.append((str(row["id"]), d2i_score(row["original"], row["generated"]).value))
        except (KeyError, TypeError, ValueError) as exc:
            raise CliError(f"{args.input}:{lineno}: {exc}") from None
    if not scores:
        raise CliError(f"{args.input}: no embedding pairs")
    mean = sum(v for _, v in scores) / len(scores)
    reports = [MetricReport("D2I", mean, {f"image:{k}": v for k, v in scores})]
    _emit(reports, args.json)
    return EXIT_OK


def cmd_fixtures(args: argparse.Namespace) -> int:
    from .testkit.fixtures import write_fixture_set

    seeds = range(args.start, args.start + args.count)
    config_path = write_fixture_set(args.out, seeds, args.objects, args.distractors)
    print(f"wrote {args.count} scene(s); config {config_path}; manifest {Path(args.out) / 'manifest.jsonl'}")
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace) -> int:
    try:
        records = read_records(args.dataset)
    except OSError as exc:
        raise CliError(f"cannot read {args.dataset}: {exc.strerror or exc}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"{args.dataset}: malformed record ({exc})") from None
    bad = 0
    for record in records:
        problems = validate_record(record)
        status = record.stage_status
        state = "complete" if status.is_complete() else (f"failed at {status.failed_stage()}" if status.failed_stage()
                                                         else "incomplete")
        print(f"{record.image.id}: {state}; {len(record.objects)} object(s), "
              f"{len(record.hallucinations)} hallucination(s)")
        if args.show_text and record.final_description:
            print(f"  {record.final_description}")
        for problem in problems:
            print(f"  invalid: {problem}")
        bad += bool(problems)
    print(f"{len(records)} record(s), {bad} invalid")
    return EXIT_FATAL if bad else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="textualize",
        description="Build detailed, hallucination-checked image descriptions and score description corpora.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress and warnings to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("textualize", help="run the three-phase pipeline over an image manifest",
                       description="Run description, hallucination/detail analysis and recaptioning per image.")
    p.add_argument("--images", required=True, metavar="MANIFEST", help="JSONL with {id, path, width, height} per image")
    p.add_argument("--config", metavar="FILE", help="key = value file mirroring PipelineConfig fields")
    p.add_argument("--out", required=True, metavar="PATH", help="output dataset (JSONL); summary goes next to it")
    p.add_argument("--cache", metavar="DIR", help="stage cache directory (default: <out stem>.cache next to --out)")
    p.add_argument("--resume", action="store_true", help="reuse completed stages found in the cache")
    p.add_argument("--jobs", type=int, default=4, metavar="N", help="images processed in parallel (default 4)")
    p.add_argument("--max-concurrency", type=int, default=4, metavar="N",
                   help="in-flight requests per backend (default 4)")
    p.add_argument("--timeout", type=float, default=60.0, metavar="SEC", help="HTTP timeout per request (default 60)")
    p.set_defaults(func=cmd_textualize)

    p = sub.add_parser("evaluate", help="BLEU / ROUGE-L / CIDEr-D over a candidate corpus",
                       description="Score candidates against references, aligned by id.")
    p.add_argument("--pred", required=True, metavar="JSONL", help="{id, candidate[, references]} per line")
    p.add_argument("--refs", metavar="JSONL", help="{id, references[]} per line (default: references in --pred)")
    p.add_argument("--metrics", default="bleu,rouge,cider", help="comma-separated subset of bleu,rouge,cider")
    p.add_argument("--json", metavar="PATH", help="also write the reports as JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="word/sentence counts and readability of descriptions",
                       description="Average length statistics and ARI/FK/SMOG over descriptions.")
    p.add_argument("--input", required=True, metavar="FILE", help="one description per line, or JSONL records")
    p.add_argument("--field", default="final_description", help="JSON field holding the text (default final_description)")
    p.add_argument("--json", metavar="PATH", help="also write the reports as JSON")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("pope", help="yes/no object-existence accuracy per split",
                       description="POPE accuracy for Adv, Rand and Popular splits plus their average.")
    p.add_argument("--input", required=True, metavar="JSONL", help="{question_id, split, gt, answer} per line")
    p.add_argument("--json", metavar="PATH", help="also write the reports as JSON")
    p.set_defaults(func=cmd_pope)

    p = sub.add_parser("d2i", help="description-to-image embedding similarity",
                       description="Mean 100 x cosine similarity between original and generated image embeddings.")
    p.add_argument("--input", required=True, metavar="JSONL", help="{id, original[], generated[]} per line")
    p.add_argument("--json", metavar="PATH", help="also write the reports as JSON")
    p.set_defaults(func=cmd_d2i)

    p = sub.add_parser("fixtures", help="generate synthetic scenes with recorded backend fixtures",
                       description="Write scenes, a manifest, recorded backend calls and a replay config.")
    p.add_argument("--out", required=True, metavar="DIR", help="output directory")
    p.add_argument("--count", type=int, default=3, metavar="N", help="number of scenes (default 3)")
    p.add_argument("--start", type=int, default=0, metavar="SEED", help="first seed (default 0)")
    p.add_argument("--objects", type=int, default=3, metavar="N", help="planted objects per scene (default 3)")
    p.add_argument("--distractors", type=int, default=2, metavar="N",
                   help="text-only distractor phrases per scene (default 2)")
    p.set_defaults(func=cmd_fixtures)

    p = sub.add_parser("inspect", help="validate and summarize a dataset",
                       description="Check every record's invariants and print one line per image.")
    p.add_argument("--dataset", required=True, metavar="JSONL", help="dataset written by the textualize command")
    p.add_argument("--show-text", action="store_true", help="also print final descriptions")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"textualize {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
