"""Score the committed toy corpus with every caption metric and print a table."""

import json
import sys
from pathlib import Path

from textualize.bench import cider, corpus_bleu, corpus_rouge_l, format_table

CORPUS = Path(__file__).resolve().parents[1] / "tests" / "data" / "toy_corpus.jsonl"


def main(path=CORPUS):
    rows = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
    cands = {r["id"]: r["candidate"] for r in rows}
    refs = {r["id"]: r["references"] for r in rows}
    reports = [*corpus_bleu(cands, refs), corpus_rouge_l(cands, refs), cider(cands, refs)]
    print(f"{len(rows)} pairs from {path}")
    sys.stdout.write(format_table(reports))


if __name__ == "__main__":
    main(*sys.argv[1:])
