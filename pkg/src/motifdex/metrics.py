"""Measurement: precision/recall/F1, stage recall, Cohen's kappa, balanced
resampling, motif-disjoint splits, and the complexity-grid report.

Conventions, recorded in every report: 0/0 ratios are 0 with a degeneracy
flag, and OVERALL grid cells pool raw confusion counts (micro) rather than
averaging cell values.
"""

from __future__ import annotations

import csv
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Mapping, Sequence

from .errors import MotifdexError
from .model import Label, LabeledPair


class MetricsError(MotifdexError):
    module = "metrics"


class EmptyGold(MetricsError):
    code = "EMPTY_GOLD"


class LengthMismatch(MetricsError):
    code = "LENGTH_MISMATCH"


class InsufficientNegatives(MetricsError):
    code = "INSUFFICIENT_NEGATIVES"


class InfeasibleTargets(MetricsError):
    code = "INFEASIBLE_TARGETS"


class MissingLabel(MetricsError):
    code = "MISSING_LABEL"


SIMPLE = "simple"
COMPLEX = "complex"
OVERALL = "overall"
AXIS = (SIMPLE, COMPLEX, OVERALL)


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def add(self, other: "ConfusionCounts") -> None:
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        self.tn += other.tn

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    degenerate: bool = False


def prf1(c: ConfusionCounts) -> PRF:
    """p, r, f1 with the 0/0 -> 0 convention (flagged as degenerate)."""
    degenerate = False
    if c.tp + c.fp == 0:
        precision, degenerate = 0.0, True
    else:
        precision = c.tp / (c.tp + c.fp)
    if c.tp + c.fn == 0:
        recall, degenerate = 0.0, True
    else:
        recall = c.tp / (c.tp + c.fn)
    if precision + recall == 0.0:
        return PRF(precision, recall, 0.0, True)
    return PRF(precision, recall, 2 * precision * recall / (precision + recall), degenerate)


def stage_recall(retrieved: set[str], gold: set[str]) -> float:
    if not gold:
        raise EmptyGold("gold set for recall is empty")
    return len(retrieved & gold) / len(gold)


@dataclass(frozen=True)
class KappaResult:
    value: float
    degenerate: bool = False


def cohens_kappa(labels_a: Sequence, labels_b: Sequence) -> KappaResult:
    """Cohen's kappa over two parallel label lists.

    When both annotators are constant and identical, chance agreement is 1
    and kappa is undefined; we return 1.0 flagged degenerate.
    """
    if len(labels_a) != len(labels_b) or not labels_a:
        raise LengthMismatch(
            f"label lists must have equal nonzero length "
            f"({len(labels_a)} vs {len(labels_b)})",
            len_a=len(labels_a), len_b=len(labels_b),
        )
    n = len(labels_a)
    observed = sum(1 for a, b in zip(labels_a, labels_b) if a == b) / n
    marg_a = Counter(labels_a)
    marg_b = Counter(labels_b)
    expected = sum(
        (marg_a[c] / n) * (marg_b.get(c, 0) / n) for c in marg_a
    )
    if expected == 1.0:
        return KappaResult(1.0, degenerate=True)
    return KappaResult((observed - expected) / (1.0 - expected))


def resample_balanced(
    annotations: Iterable[LabeledPair], seed: int
) -> list[LabeledPair]:
    """Per motif: keep every positive, sample an equal number of its
    negatives without replacement (seeded).  Output is sorted and totals
    2x the positive count."""
    by_motif: dict[str, tuple[list[LabeledPair], list[LabeledPair]]] = {}
    for ann in annotations:
        pos, neg = by_motif.setdefault(ann.motif_id, ([], []))
        (pos if ann.label is Label.POSITIVE else neg).append(ann)
    offenders = sorted(
        motif_id
        for motif_id, (pos, neg) in by_motif.items()
        if pos and len(neg) < len(pos)
    )
    if offenders:
        raise InsufficientNegatives(
            f"{len(offenders)} motifs have fewer negatives than positives",
            motif_ids=offenders,
        )
    out: list[LabeledPair] = []
    for motif_id in sorted(by_motif):
        pos, neg = by_motif[motif_id]
        if not pos:
            continue
        out.extend(pos)
        rng = random.Random(f"{seed}|{motif_id}")
        ordered = sorted(neg, key=lambda a: a.sentence_id)
        out.extend(rng.sample(ordered, len(pos)))
    out.sort(key=lambda a: (a.motif_id, a.label is not Label.POSITIVE, a.sentence_id))
    return out


@dataclass(frozen=True)
class SplitSpec:
    train: frozenset[str]
    val: frozenset[str]
    test: frozenset[str]
    seed: int

    def __post_init__(self):
        if self.train & self.val or self.train & self.test or self.val & self.test:
            raise ValueError("splits must be pairwise disjoint")


def split_by_motif(
    cells: Mapping[str, Hashable],
    targets: Mapping[Hashable, tuple[int, int, int]],
    seed: int,
) -> SplitSpec:
    """Stratified motif-disjoint split hitting per-cell targets exactly.

    ``cells`` maps motif_id -> category cell; ``targets`` maps each cell to
    (train, val, test) counts that must sum to the cell's population.
    """
    members: dict[Hashable, list[str]] = {}
    for motif_id, cell in cells.items():
        members.setdefault(cell, []).append(motif_id)
    train: set[str] = set()
    val: set[str] = set()
    test: set[str] = set()
    for cell in sorted(members, key=repr):
        population = sorted(members[cell])
        if cell not in targets:
            raise InfeasibleTargets(f"no targets for cell {cell!r}", cell=repr(cell))
        want = targets[cell]
        if len(want) != 3 or any(w < 0 for w in want) or sum(want) != len(population):
            raise InfeasibleTargets(
                f"targets {want} infeasible for cell {cell!r} with "
                f"{len(population)} motifs",
                cell=repr(cell), targets=list(want), population=len(population),
            )
        rng = random.Random(f"{seed}|{cell!r}")
        rng.shuffle(population)
        n_train, n_val, _ = want
        train.update(population[:n_train])
        val.update(population[n_train : n_train + n_val])
        test.update(population[n_train + n_val :])
    for cell in targets:
        if cell not in members and sum(targets[cell]) != 0:
            raise InfeasibleTargets(
                f"targets given for empty cell {cell!r}", cell=repr(cell)
            )
    return SplitSpec(frozenset(train), frozenset(val), frozenset(test), seed)


# -- complexity grid ---------------------------------------------------------

@dataclass
class GridCell:
    counts: ConfusionCounts = field(default_factory=ConfusionCounts)

    @property
    def prf(self) -> PRF:
        return prf1(self.counts)


@dataclass
class GridReport:
    method_id: str
    cells: dict[tuple[str, str], GridCell]
    metadata: dict = field(default_factory=dict)

    def cell(self, conceptual: str, expression: str) -> GridCell:
        return self.cells[(conceptual, expression)]

    def to_json(self) -> dict:
        rows = []
        for conceptual in AXIS:
            for expression in AXIS:
                cell = self.cells[(conceptual, expression)]
                prf = cell.prf
                rows.append(
                    {
                        "conceptual": conceptual,
                        "expression": expression,
                        "precision": prf.precision,
                        "recall": prf.recall,
                        "f1": prf.f1,
                        "degenerate": prf.degenerate,
                        "tp": cell.counts.tp,
                        "fp": cell.counts.fp,
                        "fn": cell.counts.fn,
                        "tn": cell.counts.tn,
                    }
                )
        return {
            "method_id": self.method_id,
            "conventions": {"zero_over_zero": 0, "overall_cells": "micro-pooled"},
            "config": self.metadata,
            "cells": rows,
        }

    def render_text(self) -> str:
        """Aligned 3x3 grid: conceptual rows x expression columns, each cell
        shown as f1 (precision/recall)."""
        header = ["conceptual \\ expression"] + list(AXIS)
        body = []
        for conceptual in AXIS:
            row = [conceptual]
            for expression in AXIS:
                prf = self.cells[(conceptual, expression)].prf
                row.append(f"{prf.f1:.2f} ({prf.precision:.2f}/{prf.recall:.2f})")
            body.append(row)
        widths = [
            max(len(line[i]) for line in [header] + body) for i in range(len(header))
        ]
        lines = [
            "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(line)).rstrip()
            for line in [header] + body
        ]
        lines.insert(1, "-" * max(len(l) for l in lines))
        return f"method: {self.method_id}\n" + "\n".join(lines)


def grid_report(
    verdicts: Iterable,
    gold: Mapping[tuple[str, str], Label],
    expression_labels: Mapping[tuple[str, str], str],
    conceptual_labels: Mapping[str, str],
    method_id: str = "",
    metadata: dict | None = None,
) -> GridReport:
    """Pool confusion counts per (conceptual, expression) cell; OVERALL rows
    and columns are pooled micro counts.  Every verdict must join to a gold
    label and to both category labels, else MISSING_LABEL."""
    cells: dict[tuple[str, str], GridCell] = {
        (c, e): GridCell() for c in AXIS for e in AXIS
    }
    for verdict in verdicts:
        key = (verdict.motif_id, verdict.sentence_id)
        if key not in gold:
            raise MissingLabel(f"no gold label for pair {key}", pair=list(key))
        if key not in expression_labels:
            raise MissingLabel(f"no expression label for pair {key}", pair=list(key))
        if verdict.motif_id not in conceptual_labels:
            raise MissingLabel(
                f"no conceptual label for motif {verdict.motif_id}",
                motif_id=verdict.motif_id,
            )
        conceptual = str(
            getattr(conceptual_labels[verdict.motif_id], "value", conceptual_labels[verdict.motif_id])
        )
        expression = str(
            getattr(expression_labels[key], "value", expression_labels[key])
        )
        truth = gold[key]
        predicted_positive = verdict.label is Label.POSITIVE
        actually_positive = truth is Label.POSITIVE
        delta = ConfusionCounts(
            tp=int(predicted_positive and actually_positive),
            fp=int(predicted_positive and not actually_positive),
            fn=int(not predicted_positive and actually_positive),
            tn=int(not predicted_positive and not actually_positive),
        )
        for c_key in (conceptual, OVERALL):
            for e_key in (expression, OVERALL):
                cells[(c_key, e_key)].counts.add(delta)
    return GridReport(method_id=method_id, cells=cells, metadata=metadata or {})


def agreement_grid(
    double_records: Iterable[tuple[str, Label, Label]],
    conceptual_labels: Mapping[str, str],
    expression_labels: Mapping[str, str],
) -> dict[tuple[str, str], dict]:
    """Kappa per (conceptual, expression) cell over double-annotated pairs.

    ``double_records`` yields (motif_id, label_a, label_b); category labels
    are motif-level here.  Cells with no pairs report kappa None.
    """
    buckets: dict[tuple[str, str], tuple[list, list]] = {
        (c, e): ([], []) for c in AXIS for e in AXIS
    }
    motif_counts: dict[tuple[str, str], set[str]] = {
        (c, e): set() for c in AXIS for e in AXIS
    }
    for motif_id, label_a, label_b in double_records:
        if motif_id not in conceptual_labels or motif_id not in expression_labels:
            raise MissingLabel(
                f"no category labels for motif {motif_id}", motif_id=motif_id
            )
        conceptual = str(getattr(conceptual_labels[motif_id], "value", conceptual_labels[motif_id]))
        expression = str(getattr(expression_labels[motif_id], "value", expression_labels[motif_id]))
        for c_key in (conceptual, OVERALL):
            for e_key in (expression, OVERALL):
                a_list, b_list = buckets[(c_key, e_key)]
                a_list.append(label_a)
                b_list.append(label_b)
                motif_counts[(c_key, e_key)].add(motif_id)
    out: dict[tuple[str, str], dict] = {}
    for key, (a_list, b_list) in buckets.items():
        if not a_list:
            out[key] = {"kappa": None, "degenerate": False, "pairs": 0, "motifs": 0}
            continue
        result = cohens_kappa(a_list, b_list)
        out[key] = {
            "kappa": result.value,
            "degenerate": result.degenerate,
            "pairs": len(a_list),
            "motifs": len(motif_counts[key]),
        }
    return out


# -- published-row fixture ---------------------------------------------------

@dataclass(frozen=True)
class FixtureRow:
    method: str
    conceptual: str
    expression: str
    precision: float
    recall: float
    f1: float


def load_metric_fixture(path: str | Path) -> list[FixtureRow]:
    """CSV `method,conceptual,expression,precision,recall,f1`."""
    rows = []
    with open(path, newline="", encoding="utf-8") as handle:
        for row in csv.DictReader(handle):
            rows.append(
                FixtureRow(
                    method=row["method"],
                    conceptual=row["conceptual"],
                    expression=row["expression"],
                    precision=float(row["precision"]),
                    recall=float(row["recall"]),
                    f1=float(row["f1"]),
                )
            )
    return rows


def check_fixture_rows(
    rows: Iterable[FixtureRow], tolerance: float = 0.01
) -> tuple[list[FixtureRow], list[FixtureRow]]:
    """Split fixture rows into (consistent, excluded) by recomputing f1 from
    each row's own precision and recall.

    Published tables round to two digits, so a row is consistent when the
    harmonic mean of its printed p and r is within ``tolerance`` of its
    printed f1; the few rows that fail this precheck are returned for
    logging, not silently matched.
    """
    consistent, excluded = [], []
    for row in rows:
        if row.precision + row.recall == 0.0:
            recomputed = 0.0
        else:
            recomputed = 2 * row.precision * row.recall / (row.precision + row.recall)
        if abs(recomputed - row.f1) <= tolerance + 1e-9:
            consistent.append(row)
        else:
            excluded.append(row)
    return consistent, excluded
