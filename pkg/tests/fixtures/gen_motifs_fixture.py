"""Regenerate motifs_200.csv and motifs_200_meta.json.

The fixture is fully deterministic (no RNG): 200 motifs over 20 themes with
142 simple / 58 complex conceptual labels, motif-level expression buckets
filling the four (conceptual x expression) cells at 34/108/11/47, and
per-motif pair counts summing to 2,670 positives + 55,780 negatives =
58,450 pairs.

Run from the repository root:  python3 tests/fixtures/gen_motifs_fixture.py
"""

import csv
import json
from pathlib import Path

HERE = Path(__file__).parent

THEMES = "BDFGHJKLMNPQRSTUVWXZ"  # 20 themes x 10 motifs = 200

SUBJECTS = [
    "Serpent", "Mermaid", "Barber", "King", "Fisherman",
    "Jinni", "Maiden", "Merchant", "Qadi", "Slave",
]
ATTRIBUTES = [
    "with human face", "of the deep sea", "who knows all secrets",
    "under a blind promise", "created from clay", "with a golden tongue",
    "bearing a hidden jewel", "sworn to silence", "of the seventh voyage",
    "beneath the palace",
]
ACTIONS = [
    "speaks", "grants a wish", "guards the treasure", "transforms at dawn",
    "breaks the oath", "reveals the truth", "demands tribute",
    "escapes the net", "weds the princess", "returns from the dead",
]

N_MOTIFS = 200
N_CONCEPTUAL_SIMPLE = 142
CELL_SIMPLE_SIMPLE = 34    # (conceptual simple, expression simple)
CELL_COMPLEX_SIMPLE = 11   # (conceptual complex, expression simple)
TOTAL_POSITIVES = 2670
TOTAL_NEGATIVES = 55780


def motif_ids():
    for theme in THEMES:
        for major in range(1, 6):
            yield f"{theme}{major}"
            yield f"{theme}{major}.1"


def generate():
    ids = list(motif_ids())
    assert len(ids) == N_MOTIFS == len(set(ids))

    pos_base, pos_extra = divmod(TOTAL_POSITIVES, N_MOTIFS)
    neg_base, neg_extra = divmod(TOTAL_NEGATIVES, N_MOTIFS)

    rows = []
    meta = {}
    for i, motif_id in enumerate(ids):
        conceptual = "simple" if i < N_CONCEPTUAL_SIMPLE else "complex"
        if conceptual == "simple":
            expression = "simple" if i < CELL_SIMPLE_SIMPLE else "complex"
        else:
            rank_in_complex = i - N_CONCEPTUAL_SIMPLE
            expression = "simple" if rank_in_complex < CELL_COMPLEX_SIMPLE else "complex"
        description = (
            f"{SUBJECTS[i % 10]} {ATTRIBUTES[(i // 10) % 10]} "
            f"{ACTIONS[(i // 100) % 10]}"
        )
        if i % 3 == 0:
            node_count = ""
        else:
            node_count = "2" if conceptual == "simple" else "3"
        page_refs = f"burton:{1 + (i % 3)}:{10 + i}" if i % 4 == 0 else ""
        rows.append(
            {
                "motif_id": motif_id,
                "description": description,
                "theme": motif_id[0],
                "conceptual": conceptual,
                "graph_node_count": node_count,
                "page_refs": page_refs,
            }
        )
        meta[motif_id] = {
            "conceptual": conceptual,
            "expression": expression,
            "positives": pos_base + (1 if i < pos_extra else 0),
            "negatives": neg_base + (1 if i < neg_extra else 0),
        }

    assert sum(1 for m in meta.values() if m["conceptual"] == "simple") == N_CONCEPTUAL_SIMPLE
    cells = {}
    for m in meta.values():
        cells[(m["conceptual"], m["expression"])] = (
            cells.get((m["conceptual"], m["expression"]), 0) + 1
        )
    assert cells == {
        ("simple", "simple"): 34,
        ("simple", "complex"): 108,
        ("complex", "simple"): 11,
        ("complex", "complex"): 47,
    }, cells
    assert sum(m["positives"] for m in meta.values()) == TOTAL_POSITIVES
    assert sum(m["negatives"] for m in meta.values()) == TOTAL_NEGATIVES
    assert all(m["negatives"] >= m["positives"] for m in meta.values())

    with open(HERE / "motifs_200.csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(
            handle,
            fieldnames=[
                "motif_id", "description", "theme", "conceptual",
                "graph_node_count", "page_refs",
            ],
        )
        writer.writeheader()
        writer.writerows(rows)
    (HERE / "motifs_200_meta.json").write_text(
        json.dumps(meta, indent=1) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(rows)} motifs; cells {cells}")


if __name__ == "__main__":
    generate()
