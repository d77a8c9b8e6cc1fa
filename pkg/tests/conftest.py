import json
import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).parent
sys.path.insert(0, str(TESTS))


@pytest.fixture(scope="session")
def toy_corpus():
    return [json.loads(line) for line in (TESTS / "data" / "toy_corpus.jsonl").read_text().splitlines()]


@pytest.fixture
def golden():
    return lambda name: (TESTS / "golden" / name).read_text(encoding="utf-8")
