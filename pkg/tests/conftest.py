"""Shared fixtures: toy lexical resource, 200-motif index, and a seeded store.

The seeded store reproduces the corpus-wide bookkeeping the accounting
fixtures assert against: 58,450 labeled pairs over 26,262 unique sentences
with 2,670 positives.  Records are generated deterministically (no RNG) so
every test run sees byte-identical store state.
"""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from motifdex.corpus import LexicalResource
from motifdex.motif_index import load_index
from motifdex.store import AnnotationRecord, AnnotationStore
from motifdex.model import Expression, Label

FIXTURES = Path(__file__).parent / "fixtures"

SENTENCE_POOL_SIZE = 26_262
SEED_TIMESTAMP = "2025-01-01T00:00:00+00:00"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def toy_resource() -> LexicalResource:
    return LexicalResource.load(FIXTURES / "lexicon_toy.tsv")


@pytest.fixture(scope="session")
def motif_index_200():
    return load_index(FIXTURES / "motifs_200.csv")


@pytest.fixture(scope="session")
def motif_meta() -> dict:
    with open(FIXTURES / "motifs_200_meta.json", encoding="utf-8") as fh:
        return json.load(fh)


def _sentence_id(k: int) -> str:
    return f"nights:01:{k:06d}"


def build_seed_records(motif_meta: dict) -> list[AnnotationRecord]:
    """Deterministic 58,450-record dataset over a 26,262-sentence pool.

    A global cursor walks the pool; each motif takes a consecutive block of
    at most 293 ids (mod pool size), so pairs are unique within a motif.
    The total exceeds twice the pool, so every pool id is used at least
    once and the unique-sentence count is exactly the pool size.
    """
    records: list[AnnotationRecord] = []
    cursor = 0
    for motif_id in sorted(motif_meta):
        meta = motif_meta[motif_id]
        pos, neg = meta["positives"], meta["negatives"]
        complex_bucket = meta["expression"] == "complex"
        for j in range(pos + neg):
            sid = _sentence_id((cursor + j) % SENTENCE_POOL_SIZE)
            if j < pos:
                expr = (
                    Expression.COMPLEX
                    if complex_bucket and j % 2 == 1
                    else Expression.SIMPLE
                )
                records.append(
                    AnnotationRecord(
                        motif_id=motif_id,
                        sentence_id=sid,
                        annotator_id="seed-a",
                        label=Label.POSITIVE,
                        expression=expr,
                        timestamp=SEED_TIMESTAMP,
                    )
                )
            else:
                records.append(
                    AnnotationRecord(
                        motif_id=motif_id,
                        sentence_id=sid,
                        annotator_id="seed-a",
                        label=Label.NEGATIVE,
                        timestamp=SEED_TIMESTAMP,
                    )
                )
        cursor += pos + neg
    return records


@pytest.fixture(scope="session")
def seeded_records(motif_meta) -> list[AnnotationRecord]:
    return build_seed_records(motif_meta)


@pytest.fixture(scope="session")
def seeded_store(seeded_records) -> AnnotationStore:
    """Read-only session store; tests must not mutate it."""
    store = AnnotationStore()
    imported = store.import_labeled(seeded_records)
    assert imported == len(seeded_records)
    return store
