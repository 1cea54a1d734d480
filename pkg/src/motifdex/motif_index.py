"""Motif index: hierarchical IDs, descriptions, complexity labels, page refs.

IDs look like ``B3.1`` — a single uppercase theme letter followed by dotted
non-negative integers (internal zero segments such as ``U10.0.1`` are legal).
The index is immutable after load and non-exhaustive: a motif's parent may
be absent, which is flagged rather than rejected.
"""

from __future__ import annotations

import csv
import functools
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

from .errors import MotifdexError
from .model import Conceptual

_ID_RE = re.compile(r"^([A-Z])(\d+(?:\.\d+)*)$")


class MalformedId(MotifdexError):
    code = "MALFORMED_ID"
    module = "motif-index"


class DuplicateId(MotifdexError):
    code = "DUPLICATE_ID"
    module = "motif-index"


class LabelConflict(MotifdexError):
    code = "LABEL_CONFLICT"
    module = "motif-index"


@functools.total_ordering
@dataclass(frozen=True)
class MotifId:
    theme: str
    path: tuple[int, ...]

    def __str__(self) -> str:
        return self.theme + ".".join(str(p) for p in self.path)

    def _key(self) -> tuple:
        return (self.theme, self.path)

    def __lt__(self, other: "MotifId") -> bool:
        return self._key() < other._key()

    @property
    def parent(self) -> Optional["MotifId"]:
        if len(self.path) == 1:
            return None
        return MotifId(self.theme, self.path[:-1])


def parse_motif_id(s: str) -> MotifId:
    """Parse THEME + dotted integers; raise MALFORMED_ID otherwise."""
    m = _ID_RE.match(s.strip())
    if not m:
        raise MalformedId(f"not a motif id: {s!r}", offending=s)
    theme, digits = m.groups()
    return MotifId(theme, tuple(int(p) for p in digits.split(".")))


def parent_of(motif_id: MotifId) -> Optional[MotifId]:
    return motif_id.parent


@dataclass(frozen=True)
class PageRef:
    edition_id: str
    volume_no: int
    page_no: int

    def __str__(self) -> str:
        return f"{self.edition_id}:{self.volume_no}:{self.page_no}"


@dataclass
class MotifEntry:
    id: MotifId
    description: str
    conceptual: Conceptual
    graph_node_count: int | None = None
    page_refs: list[PageRef] = field(default_factory=list)

    def __post_init__(self):
        if self.graph_node_count is not None:
            expected = Conceptual.COMPLEX if self.graph_node_count > 2 else Conceptual.SIMPLE
            if self.conceptual is not expected:
                raise LabelConflict(
                    f"motif {self.id}: conceptual={self.conceptual.value} conflicts "
                    f"with graph_node_count={self.graph_node_count}",
                    motif_id=str(self.id),
                    graph_node_count=self.graph_node_count,
                )

    @property
    def parent(self) -> Optional[MotifId]:
        return self.id.parent


class MotifIndex:
    """Entries keyed by id string, iterated in (theme, path) order."""

    def __init__(self, entries: list[MotifEntry]):
        self._entries: dict[str, MotifEntry] = {}
        for entry in entries:
            key = str(entry.id)
            if key in self._entries:
                raise DuplicateId(f"duplicate motif id {key}", motif_id=key)
            self._entries[key] = entry

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, motif_id: str) -> bool:
        return motif_id in self._entries

    def __iter__(self) -> Iterator[MotifEntry]:
        return iter(sorted(self._entries.values(), key=lambda e: e.id._key()))

    def __getitem__(self, motif_id: str) -> MotifEntry:
        return self._entries[motif_id]

    def get(self, motif_id: str) -> MotifEntry | None:
        return self._entries.get(motif_id)

    def ids(self) -> list[str]:
        return [str(e.id) for e in self]

    def missing_parents(self) -> list[str]:
        """Ids whose parent motif is not itself in the index (flag, not error)."""
        missing = []
        for entry in self:
            parent = entry.parent
            if parent is not None and str(parent) not in self._entries:
                missing.append(str(entry.id))
        return missing

    def conceptual_counts(self) -> dict[Conceptual, int]:
        counts = {Conceptual.SIMPLE: 0, Conceptual.COMPLEX: 0}
        for entry in self:
            counts[entry.conceptual] += 1
        return counts


def _parse_page_refs(raw: str) -> list[PageRef]:
    refs = []
    for chunk in raw.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(":")
        if len(parts) != 3:
            raise MalformedId(f"bad page ref {chunk!r}", offending=chunk)
        refs.append(PageRef(parts[0], int(parts[1]), int(parts[2])))
    return refs


def _entry_from_row(row: dict) -> MotifEntry:
    motif_id = parse_motif_id(str(row["motif_id"]))
    raw_conceptual = str(row.get("conceptual", "")).strip().lower()
    try:
        conceptual = Conceptual(raw_conceptual)
    except ValueError:
        raise LabelConflict(
            f"motif {motif_id}: unknown conceptual label {raw_conceptual!r}",
            motif_id=str(motif_id),
        ) from None
    raw_count = row.get("graph_node_count")
    count = int(raw_count) if raw_count not in (None, "") else None
    raw_refs = row.get("page_refs") or ""
    refs = _parse_page_refs(raw_refs) if isinstance(raw_refs, str) else [
        PageRef(r["edition_id"], int(r["volume_no"]), int(r["page_no"])) for r in raw_refs
    ]
    theme = str(row.get("theme", "")).strip()
    if theme and theme != motif_id.theme:
        raise MalformedId(
            f"theme column {theme!r} disagrees with id {motif_id}",
            offending=theme, motif_id=str(motif_id),
        )
    return MotifEntry(
        id=motif_id,
        description=str(row.get("description", "")).strip(),
        conceptual=conceptual,
        graph_node_count=count,
        page_refs=refs,
    )


def load_index(path: str | Path) -> MotifIndex:
    """Load a motif index from CSV (header: motif_id,description,theme,
    conceptual,graph_node_count,page_refs) or an equivalent JSON array."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json" or text.lstrip().startswith("["):
        rows = json.loads(text) if text.strip() else []
    else:
        rows = list(csv.DictReader(text.splitlines()))
    return MotifIndex([_entry_from_row(row) for row in rows])
