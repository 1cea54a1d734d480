"""Annotation workflow engine and persistence.

State is derived from an append-only JSONL record log (enqueue / assign /
label / adjudicate events), so the store is auditable and crash-recoverable
by replay.  All mutation is serialized behind one lock; reads work on the
derived in-memory view.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import MotifdexError
from .model import Expression, Label

PairId = tuple[str, str]


class StoreError(MotifdexError):
    module = "annotation-store"


class UnknownReference(StoreError):
    code = "UNKNOWN_REFERENCE"


class EmptyQueue(StoreError):
    code = "EMPTY_QUEUE"


class NotAssigned(StoreError):
    code = "NOT_ASSIGNED"


class DuplicateRecord(StoreError):
    code = "DUPLICATE_RECORD"


class MissingExpression(StoreError):
    code = "MISSING_EXPRESSION"


class NotInQueue(StoreError):
    code = "NOT_IN_QUEUE"


def _check_expression(label: Label, expression: Expression | None) -> None:
    if label is Label.POSITIVE and expression is None:
        raise MissingExpression("a POSITIVE label requires an expression label")
    if label is Label.NEGATIVE and expression is not None:
        raise MissingExpression("a NEGATIVE label must not carry an expression label")


@dataclass(frozen=True)
class AnnotationRecord:
    motif_id: str
    sentence_id: str
    annotator_id: str
    label: Label
    expression: Expression | None = None
    flagged: bool = False
    timestamp: str = ""

    def __post_init__(self):
        _check_expression(self.label, self.expression)

    @property
    def pair(self) -> PairId:
        return (self.motif_id, self.sentence_id)


@dataclass(frozen=True)
class Batch:
    batch_id: str
    annotator_id: str
    pairs: tuple[PairId, ...]
    double_subset: tuple[PairId, ...]

    def __post_init__(self):
        if not set(self.double_subset) <= set(self.pairs):
            raise ValueError("double_subset must be a subset of pairs")


@dataclass(frozen=True)
class Adjudication:
    motif_id: str
    sentence_id: str
    final_label: Label
    final_expression: Expression | None
    resolver_id: str
    note: str = ""
    timestamp: str = ""

    def __post_init__(self):
        _check_expression(self.final_label, self.final_expression)

    @property
    def pair(self) -> PairId:
        return (self.motif_id, self.sentence_id)


@dataclass(frozen=True)
class Disagreement:
    motif_id: str
    sentence_id: str
    records: tuple[AnnotationRecord, AnnotationRecord]


@dataclass
class AccountingSummary:
    """Bookkeeping totals: distinct labeled pairs, unique sentences touched,
    gold positives/negatives, and per-motif example counts; plus workflow
    plumbing counts for progress displays."""

    pairs: int
    unique_sentences: int
    positives: int
    negatives: int
    per_motif: dict[str, dict[str, int]]
    records: int
    queue_depth: int
    assigned_pairs: int
    double_annotated: int
    disagreements_open: int
    adjudications: int

    def to_json(self) -> dict:
        return dict(vars(self))


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class AnnotationStore:
    def __init__(
        self,
        log_path: str | Path | None = None,
        known_motifs: Iterable[str] | None = None,
        known_sentences: Iterable[str] | None = None,
    ):
        self._lock = threading.RLock()
        self._log_path = Path(log_path) if log_path else None
        self.known_motifs = set(known_motifs) if known_motifs is not None else None
        self.known_sentences = set(known_sentences) if known_sentences is not None else None
        self._queue: dict[PairId, tuple[int, int]] = {}  # pair -> (priority, seq)
        self._seq = 0
        self._assignments: dict[PairId, list[str]] = {}
        self._assign_order: list[PairId] = []
        self._records: dict[PairId, dict[str, AnnotationRecord]] = {}
        self._adjudications: dict[PairId, Adjudication] = {}
        self._flagged: set[PairId] = set()
        self._batches: dict[str, Batch] = {}
        self.context: dict[PairId, dict] = {}
        if self._log_path and self._log_path.exists():
            self._replay()

    # -- log plumbing --------------------------------------------------------

    def _append(self, event: dict) -> None:
        if self._log_path is None:
            return
        self._log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self._log_path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(event, ensure_ascii=False) + "\n")

    def _append_many(self, events: list[dict]) -> None:
        if self._log_path is None or not events:
            return
        self._log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self._log_path, "a", encoding="utf-8") as handle:
            handle.write(
                "".join(json.dumps(e, ensure_ascii=False) + "\n" for e in events)
            )

    def _replay(self) -> None:
        for line_no, line in enumerate(
            self._log_path.read_text(encoding="utf-8").splitlines(), 1
        ):
            if not line.strip():
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError as exc:
                raise StoreError(
                    f"corrupt record log at line {line_no}: {exc}", line=line_no
                ) from exc
            kind = event.get("record_type")
            if kind == "enqueue":
                self._apply_enqueue(
                    [tuple(p) for p in event["pairs"]], int(event.get("priority", 0))
                )
            elif kind == "assign":
                self._apply_assign(
                    event["batch_id"],
                    event["annotator_id"],
                    [tuple(p) for p in event["pairs"]],
                    [tuple(p) for p in event["double_subset"]],
                )
            elif kind == "label":
                record = AnnotationRecord(
                    motif_id=event["motif_id"],
                    sentence_id=event["sentence_id"],
                    annotator_id=event["annotator_id"],
                    label=Label(event["label"]),
                    expression=Expression(event["expression"]) if event.get("expression") else None,
                    flagged=bool(event.get("flagged", False)),
                    timestamp=event.get("timestamp", ""),
                )
                self._apply_label(record, imported=bool(event.get("imported", False)))
            elif kind == "adjudicate":
                self._apply_adjudicate(
                    Adjudication(
                        motif_id=event["motif_id"],
                        sentence_id=event["sentence_id"],
                        final_label=Label(event["final_label"]),
                        final_expression=(
                            Expression(event["final_expression"])
                            if event.get("final_expression")
                            else None
                        ),
                        resolver_id=event["resolver_id"],
                        note=event.get("note", ""),
                        timestamp=event.get("timestamp", ""),
                    )
                )
            else:
                raise StoreError(
                    f"unknown record_type {kind!r} at line {line_no}", line=line_no
                )

    # -- reference validation --------------------------------------------------

    def _check_refs(self, pairs: Iterable[PairId]) -> None:
        for motif_id, sentence_id in pairs:
            if self.known_motifs is not None and motif_id not in self.known_motifs:
                raise UnknownReference(f"unknown motif {motif_id!r}", motif_id=motif_id)
            if self.known_sentences is not None and sentence_id not in self.known_sentences:
                raise UnknownReference(
                    f"unknown sentence {sentence_id!r}", sentence_id=sentence_id
                )

    # -- queueing ---------------------------------------------------------------

    def _apply_enqueue(self, pairs: Sequence[PairId], priority: int) -> list[PairId]:
        added = []
        for pair in pairs:
            if self._records.get(pair):
                continue  # already labeled
            if pair in self._queue or pair in self._assignments:
                continue  # entered once already
            self._queue[pair] = (priority, self._seq)
            self._seq += 1
            added.append(pair)
        return added

    def enqueue_candidates(
        self, candidates: Iterable[tuple[str, str]], priority: int = 0
    ) -> int:
        pairs = [(str(m), str(s)) for m, s in candidates]
        with self._lock:
            self._check_refs(pairs)
            added = self._apply_enqueue(pairs, priority)
            if added:
                self._append(
                    {
                        "record_type": "enqueue",
                        "pairs": [list(p) for p in added],
                        "priority": priority,
                    }
                )
            return len(added)

    def _apply_assign(
        self,
        batch_id: str,
        annotator_id: str,
        pairs: Sequence[PairId],
        double_subset: Sequence[PairId],
    ) -> Batch:
        batch = Batch(batch_id, annotator_id, tuple(pairs), tuple(double_subset))
        doubles = set(double_subset)
        for pair in pairs:
            if pair in doubles:
                self._assignments[pair].append(annotator_id)
            else:
                self._queue.pop(pair, None)
                self._assignments[pair] = [annotator_id]
                self._assign_order.append(pair)
        self._batches[batch_id] = batch
        return batch

    def next_batch(
        self, annotator_id: str, size: int = 1500, double_rate: float = 0.5
    ) -> Batch:
        """Draw up to ``size`` pairs: a double_subset from pairs assigned to
        exactly one *other* annotator (creating double annotation at the
        configured rate), the rest fresh from the queue.  Transactional."""
        if size < 1:
            raise ValueError("size must be >= 1")
        if not 0.0 <= double_rate <= 1.0:
            raise ValueError("double_rate must be in [0,1]")
        with self._lock:
            eligible_double = [
                pair
                for pair in self._assign_order
                if len(self._assignments.get(pair, ())) == 1
                and annotator_id not in self._assignments[pair]
                and annotator_id not in self._records.get(pair, {})
                and pair not in self._adjudications
            ]
            fresh = sorted(
                self._queue, key=lambda p: (-self._queue[p][0], self._queue[p][1])
            )
            double_target = min(round(size * double_rate), len(eligible_double))
            doubles = eligible_double[:double_target]
            fresh_take = fresh[: size - len(doubles)]
            shortfall = size - len(doubles) - len(fresh_take)
            if shortfall > 0:
                doubles = eligible_double[: double_target + shortfall][:size]
            pairs = fresh_take + doubles
            if not pairs:
                raise EmptyQueue(
                    f"no pairs available for annotator {annotator_id!r}",
                    annotator_id=annotator_id,
                )
            batch_id = f"batch-{len(self._batches):05d}"
            batch = self._apply_assign(batch_id, annotator_id, pairs, doubles)
            self._append(
                {
                    "record_type": "assign",
                    "batch_id": batch_id,
                    "annotator_id": annotator_id,
                    "pairs": [list(p) for p in batch.pairs],
                    "double_subset": [list(p) for p in batch.double_subset],
                }
            )
            return batch

    # -- labeling ---------------------------------------------------------------

    def _apply_label(self, record: AnnotationRecord, imported: bool = False) -> None:
        pair = record.pair
        by_annotator = self._records.setdefault(pair, {})
        by_annotator[record.annotator_id] = record
        if record.flagged:
            self._flagged.add(pair)
        if imported:
            self._queue.pop(pair, None)

    def record_label(self, record: AnnotationRecord) -> AnnotationRecord:
        with self._lock:
            pair = record.pair
            self._check_refs([pair])
            assignees = self._assignments.get(pair, [])
            if record.annotator_id not in assignees:
                raise NotAssigned(
                    f"pair {pair} is not assigned to annotator {record.annotator_id!r}",
                    pair=list(pair), annotator_id=record.annotator_id,
                )
            if record.annotator_id in self._records.get(pair, {}):
                raise DuplicateRecord(
                    f"annotator {record.annotator_id!r} already labeled pair {pair}",
                    pair=list(pair), annotator_id=record.annotator_id,
                )
            if not record.timestamp:
                record = replace(record, timestamp=_now())
            self._apply_label(record)
            self._append(
                {
                    "record_type": "label",
                    "motif_id": record.motif_id,
                    "sentence_id": record.sentence_id,
                    "annotator_id": record.annotator_id,
                    "label": record.label.value,
                    "expression": record.expression.value if record.expression else None,
                    "flagged": record.flagged,
                    "timestamp": record.timestamp,
                }
            )
            return record

    def import_labeled(self, records: Iterable[AnnotationRecord]) -> int:
        """Bulk-load an existing labeled dataset, bypassing assignment (the
        records are marked imported in the log).  Duplicate (pair, annotator)
        combinations are rejected."""
        with self._lock:
            events = []
            count = 0
            for record in records:
                pair = record.pair
                self._check_refs([pair])
                if record.annotator_id in self._records.get(pair, {}):
                    raise DuplicateRecord(
                        f"annotator {record.annotator_id!r} already labeled pair {pair}",
                        pair=list(pair), annotator_id=record.annotator_id,
                    )
                self._apply_label(record, imported=True)
                events.append(
                    {
                        "record_type": "label",
                        "imported": True,
                        "motif_id": record.motif_id,
                        "sentence_id": record.sentence_id,
                        "annotator_id": record.annotator_id,
                        "label": record.label.value,
                        "expression": record.expression.value if record.expression else None,
                        "flagged": record.flagged,
                        "timestamp": record.timestamp,
                    }
                )
                count += 1
            self._append_many(events)
            return count

    # -- disagreement & adjudication ---------------------------------------------

    def _conflict(self, records: dict[str, AnnotationRecord]) -> bool:
        if len(records) != 2:
            return False
        first, second = sorted(records.values(), key=lambda r: r.annotator_id)
        return first.label != second.label or first.expression != second.expression

    def disagreements(self) -> list[Disagreement]:
        """Double-annotated pairs whose labels or expression labels differ
        and which have not been adjudicated."""
        with self._lock:
            out = []
            for pair in sorted(self._records):
                records = self._records[pair]
                if pair in self._adjudications or not self._conflict(records):
                    continue
                ordered = tuple(sorted(records.values(), key=lambda r: r.annotator_id))
                out.append(Disagreement(pair[0], pair[1], ordered))
            return out

    def _apply_adjudicate(self, adjudication: Adjudication) -> None:
        self._adjudications[adjudication.pair] = adjudication

    def adjudicate(
        self,
        motif_id: str,
        sentence_id: str,
        final_label: Label,
        final_expression: Expression | None,
        resolver_id: str,
        note: str = "",
    ) -> Adjudication:
        with self._lock:
            pair = (motif_id, sentence_id)
            if pair in self._adjudications:
                raise NotInQueue(
                    f"pair {pair} was already adjudicated", pair=list(pair)
                )
            conflicted = self._conflict(self._records.get(pair, {}))
            if not conflicted and pair not in self._flagged:
                raise NotInQueue(
                    f"pair {pair} is neither in the disagreement queue nor flagged",
                    pair=list(pair),
                )
            adjudication = Adjudication(
                motif_id=motif_id,
                sentence_id=sentence_id,
                final_label=final_label,
                final_expression=final_expression,
                resolver_id=resolver_id,
                note=note,
                timestamp=_now(),
            )
            self._apply_adjudicate(adjudication)
            self._append(
                {
                    "record_type": "adjudicate",
                    "motif_id": motif_id,
                    "sentence_id": sentence_id,
                    "final_label": final_label.value,
                    "final_expression": final_expression.value if final_expression else None,
                    "resolver_id": resolver_id,
                    "note": note,
                    "timestamp": adjudication.timestamp,
                }
            )
            return adjudication

    # -- gold & accounting ---------------------------------------------------------

    def gold_labels(self) -> dict[PairId, tuple[Label, Expression | None]]:
        """Adjudication > agreeing double records > single record; pairs with
        an unresolved disagreement are excluded."""
        with self._lock:
            gold: dict[PairId, tuple[Label, Expression | None]] = {}
            for pair, records in self._records.items():
                if pair in self._adjudications:
                    continue  # handled below
                if len(records) == 1:
                    (record,) = records.values()
                    gold[pair] = (record.label, record.expression)
                elif len(records) == 2 and not self._conflict(records):
                    record = next(iter(records.values()))
                    gold[pair] = (record.label, record.expression)
            for pair, adjudication in self._adjudications.items():
                gold[pair] = (adjudication.final_label, adjudication.final_expression)
            return gold

    def accounting(self) -> AccountingSummary:
        with self._lock:
            gold = self.gold_labels()
            positives = sum(1 for label, _ in gold.values() if label is Label.POSITIVE)
            per_motif: dict[str, dict[str, int]] = {}
            for (motif_id, _), (label, _) in gold.items():
                bucket = per_motif.setdefault(motif_id, {"positives": 0, "negatives": 0})
                bucket["positives" if label is Label.POSITIVE else "negatives"] += 1
            labeled_pairs = set(self._records) | set(self._adjudications)
            return AccountingSummary(
                pairs=len(labeled_pairs),
                unique_sentences=len({s for _, s in labeled_pairs}),
                positives=positives,
                negatives=len(gold) - positives,
                per_motif=dict(sorted(per_motif.items())),
                records=sum(len(r) for r in self._records.values()),
                queue_depth=len(self._queue),
                assigned_pairs=len(self._assignments),
                double_annotated=sum(
                    1 for r in self._records.values() if len(r) == 2
                ),
                disagreements_open=len(self.disagreements()),
                adjudications=len(self._adjudications),
            )

    # -- export --------------------------------------------------------------------

    def export_gold(self, path: str | Path) -> int:
        """Write gold labels as JSONL rows {motif_id, sentence_id, label,
        expression} in sorted pair order (metrics-compatible)."""
        gold = self.gold_labels()
        with open(path, "w", encoding="utf-8") as handle:
            for motif_id, sentence_id in sorted(gold):
                label, expression = gold[(motif_id, sentence_id)]
                handle.write(
                    json.dumps(
                        {
                            "motif_id": motif_id,
                            "sentence_id": sentence_id,
                            "label": label.value,
                            "expression": expression.value if expression else None,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
        return len(gold)

    def labels(
        self,
        motif_id: str | None = None,
        sentence_id: str | None = None,
        annotator_id: str | None = None,
    ) -> list[AnnotationRecord]:
        """All label records matching the given filters, in sorted pair order."""
        with self._lock:
            out = []
            for pair in sorted(self._records):
                if motif_id is not None and pair[0] != motif_id:
                    continue
                if sentence_id is not None and pair[1] != sentence_id:
                    continue
                for annotator, record in sorted(self._records[pair].items()):
                    if annotator_id is not None and annotator != annotator_id:
                        continue
                    out.append(record)
            return out

    def double_labeled_pairs(self) -> list[tuple[str, Label, Label]]:
        """(motif_id, label_a, label_b) per double-annotated pair, annotators
        ordered by id — the raw material for agreement grids."""
        with self._lock:
            out = []
            for pair in sorted(self._records):
                records = self._records[pair]
                if len(records) != 2:
                    continue
                first, second = sorted(records.values(), key=lambda r: r.annotator_id)
                out.append((pair[0], first.label, second.label))
            return out

    def batch(self, batch_id: str) -> Batch | None:
        return self._batches.get(batch_id)

    def assigned_to(self, annotator_id: str) -> list[PairId]:
        with self._lock:
            return [
                pair
                for pair in self._assign_order
                if annotator_id in self._assignments.get(pair, ())
            ]

    def unlabeled_assigned(self, annotator_id: str) -> list[PairId]:
        """Pairs assigned to the annotator and not yet labeled by them —
        what a resumed session still owes."""
        with self._lock:
            return [
                pair
                for pair in self.assigned_to(annotator_id)
                if annotator_id not in self._records.get(pair, {})
            ]
