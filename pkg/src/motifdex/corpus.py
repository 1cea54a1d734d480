"""Editions, pages, sentences, tokens, and the lexical resource.

Text flows through here before anything else sees it: volumes are normalized
on load, segmented into sentence records, and tokenized against a
user-supplied lexical resource (lemma table + synonym table).
"""

from __future__ import annotations

import bisect
import json
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import MotifdexError

_WS_RUN = re.compile(r"\s+")
# Word = alphanumeric runs joined by internal apostrophes (straight or curly).
_TOKEN = re.compile(r"[^\W_]+(?:['’][^\W_]+)*", re.UNICODE)
_CLOSING_QUOTES = "\"'’”»)]"

DEFAULT_ABBREVIATIONS = frozenset(
    {
        "mr", "mrs", "ms", "dr", "st", "prof", "rev", "hon", "gen", "col",
        "vol", "no", "ch", "pp", "p", "etc", "vs", "viz", "cf", "al", "ibid",
        "ed", "trans", "e.g", "i.e",
    }
)


class CorpusError(MotifdexError):
    module = "corpus"


def normalize(text: str) -> str:
    """Lowercase, collapse whitespace runs to single spaces, strip
    non-whitespace control characters.  Idempotent and total."""
    cleaned = []
    for ch in text:
        if unicodedata.category(ch) in ("Cc", "Cf") and not ch.isspace():
            continue
        cleaned.append(ch)
    return _WS_RUN.sub(" ", "".join(cleaned)).strip().lower()


@dataclass(frozen=True)
class Token:
    surface: str
    lemma: str
    char_offset: int


class LexicalResource:
    """Flat lemma + synonym tables.

    Unknown words lemmatize to their own lowercase form with an empty synonym
    set, so every lookup is total.  Synonym sets are stored per lemma and
    never include the lemma itself.
    """

    def __init__(
        self,
        lemma_table: dict[str, str] | None = None,
        synonym_table: dict[str, frozenset[str]] | None = None,
    ):
        self.lemma_table = {k.lower(): v.lower() for k, v in (lemma_table or {}).items()}
        self.synonym_table = {
            lemma.lower(): frozenset(s.lower() for s in syns) - {lemma.lower()}
            for lemma, syns in (synonym_table or {}).items()
        }

    @classmethod
    def empty(cls) -> "LexicalResource":
        return cls()

    @classmethod
    def load(cls, path: str | Path) -> "LexicalResource":
        """Parse ``lemma<TAB>surface1,surface2,...<TAB>synonym1,...`` lines."""
        lemmas: dict[str, str] = {}
        synonyms: dict[str, frozenset[str]] = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            parts += [""] * (3 - len(parts))
            lemma, surfaces, syns = parts[0].strip(), parts[1], parts[2]
            if not lemma:
                continue
            lemmas[lemma] = lemma
            for surface in surfaces.split(","):
                if surface.strip():
                    lemmas[surface.strip()] = lemma
            synonyms[lemma] = frozenset(
                s.strip() for s in syns.split(",") if s.strip()
            )
        return cls(lemmas, synonyms)

    def lemma_of(self, word: str) -> str:
        word = word.lower()
        return self.lemma_table.get(word, word)

    def synonyms_of(self, word: str) -> frozenset[str]:
        """Synonym lemmas of the word's lemma; never contains the lemma."""
        lemma = self.lemma_of(word)
        return self.synonym_table.get(lemma, frozenset()) - {lemma}


def tokenize(text: str, resource: LexicalResource | None = None) -> list[Token]:
    """Split normalized text on non-alphanumerics (internal apostrophes kept)."""
    resource = resource or LexicalResource.empty()
    return [
        Token(m.group(0), resource.lemma_of(m.group(0)), m.start())
        for m in _TOKEN.finditer(text)
    ]


def synonyms(word: str, resource: LexicalResource) -> frozenset[str]:
    return resource.synonyms_of(word)


@dataclass(frozen=True)
class Page:
    page_no: int
    char_start: int
    char_end: int


@dataclass
class Volume:
    volume_no: int
    full_text: str
    pages: list[Page]

    def __post_init__(self):
        cursor = 0
        last_no = None
        for page in self.pages:
            if page.char_start != cursor:
                raise CorpusError(
                    f"page {page.page_no} of volume {self.volume_no} does not "
                    f"start where the previous page ended",
                    volume_no=self.volume_no, page_no=page.page_no,
                )
            if last_no is not None and page.page_no <= last_no:
                raise CorpusError(
                    f"page numbers must strictly increase (volume {self.volume_no})",
                    volume_no=self.volume_no, page_no=page.page_no,
                )
            cursor = page.char_end
            last_no = page.page_no
        if self.pages and cursor != len(self.full_text):
            raise CorpusError(
                f"pages of volume {self.volume_no} do not cover its text",
                volume_no=self.volume_no,
            )

    def page_text(self, page_no: int) -> str:
        for page in self.pages:
            if page.page_no == page_no:
                return self.full_text[page.char_start:page.char_end]
        raise CorpusError(f"no page {page_no} in volume {self.volume_no}",
                          volume_no=self.volume_no, page_no=page_no)

    def page_of_offset(self, offset: int) -> int:
        starts = [p.char_start for p in self.pages]
        idx = bisect.bisect_right(starts, offset) - 1
        if idx < 0:
            idx = 0
        return self.pages[idx].page_no if self.pages else 1


@dataclass
class Edition:
    edition_id: str
    volumes: list[Volume]

    def __post_init__(self):
        if not self.edition_id:
            raise CorpusError("edition_id must be non-empty")
        nos = [v.volume_no for v in self.volumes]
        if nos != sorted(nos) or len(set(nos)) != len(nos):
            raise CorpusError("volumes must be ordered and unique",
                              edition_id=self.edition_id)

    def volume(self, volume_no: int) -> Volume:
        for vol in self.volumes:
            if vol.volume_no == volume_no:
                return vol
        raise CorpusError(f"no volume {volume_no} in edition {self.edition_id}",
                          edition_id=self.edition_id, volume_no=volume_no)


@dataclass
class SentenceRecord:
    sentence_id: str
    volume_no: int
    page_no: int
    char_start: int
    char_end: int
    text: str
    tokens: list[Token] = field(default_factory=list)


_TERMINALS = ".!?"


def segment_sentences(
    volume: Volume,
    resource: LexicalResource | None = None,
    abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS,
    id_prefix: str = "",
) -> list[SentenceRecord]:
    """Split a normalized volume into covering, non-overlapping sentences.

    Breaks on ``. ! ?`` followed by whitespace (closing quotes attach to the
    sentence they close); a trailing-word match against the abbreviation
    stop-list suppresses the break.  A volume with no terminal punctuation
    yields a single sentence.
    """
    text = volume.full_text
    breaks: list[int] = []  # index one past each sentence's final character
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in _TERMINALS:
            end = i + 1
            while end < n and text[end] in _CLOSING_QUOTES:
                end += 1
            at_boundary = end >= n or text[end].isspace()
            if at_boundary and ch == "." and _is_abbreviation(text, i, abbreviations):
                at_boundary = False
            if at_boundary:
                breaks.append(end)
                i = end
                continue
        i += 1
    if not breaks or breaks[-1] < n:
        breaks.append(n)

    records: list[SentenceRecord] = []
    start = 0
    for brk in breaks:
        seg_start, seg_end = start, brk
        while seg_start < seg_end and text[seg_start].isspace():
            seg_start += 1
        while seg_end > seg_start and text[seg_end - 1].isspace():
            seg_end -= 1
        if seg_end > seg_start:
            idx = len(records)
            sentence_text = text[seg_start:seg_end]
            records.append(
                SentenceRecord(
                    sentence_id=f"{id_prefix}{volume.volume_no:02d}:{idx:06d}",
                    volume_no=volume.volume_no,
                    page_no=volume.page_of_offset(seg_start),
                    char_start=seg_start,
                    char_end=seg_end,
                    text=sentence_text,
                    tokens=[
                        Token(t.surface, t.lemma, t.char_offset + seg_start)
                        for t in tokenize(sentence_text, resource)
                    ],
                )
            )
        start = brk
    return records


def _is_abbreviation(text: str, dot_index: int, abbreviations: frozenset[str]) -> bool:
    """The word ending at ``text[dot_index]`` (a period) is a known abbreviation."""
    j = dot_index
    while j > 0 and (text[j - 1].isalnum() or text[j - 1] == "."):
        j -= 1
    word = text[j:dot_index].rstrip(".")
    return word in abbreviations


def load_edition(manifest_path: str | Path) -> Edition:
    """Load an edition from a manifest naming one text file per volume.

    Manifest: ``{"edition_id": ..., "volumes": [{"volume_no": int, "file":
    str, "page_breaks": [int, ...]}]}`` where page_breaks are character
    offsets into the raw file at which pages 2..k begin.  Volume text is
    normalized page by page so page spans stay aligned after whitespace
    collapsing.
    """
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CorpusError(f"unreadable manifest {manifest_path}: {exc}") from exc
    volumes = []
    for spec in manifest.get("volumes", []):
        raw = (manifest_path.parent / spec["file"]).read_text(encoding="utf-8")
        breaks = sorted(b for b in spec.get("page_breaks", []) if 0 < b < len(raw))
        bounds = [0] + breaks + [len(raw)]
        page_texts = [normalize(raw[a:b]) for a, b in zip(bounds, bounds[1:])]
        # Pages are normalized individually, then rejoined with single spaces
        # (the separator belongs to the page before it) so that page spans
        # partition the volume text exactly.
        pages: list[Page] = []
        chunks: list[str] = []
        cursor = 0
        for page_no, page_text in enumerate(page_texts, start=1):
            start = cursor
            if page_text:
                if chunks:
                    chunks.append(" ")
                    cursor += 1
                    prev = pages[-1]
                    pages[-1] = Page(prev.page_no, prev.char_start, cursor)
                    start = cursor
                chunks.append(page_text)
                cursor += len(page_text)
            pages.append(Page(page_no=page_no, char_start=start, char_end=cursor))
        volumes.append(
            Volume(volume_no=spec["volume_no"], full_text="".join(chunks), pages=pages)
        )
    volumes.sort(key=lambda v: v.volume_no)
    return Edition(edition_id=manifest["edition_id"], volumes=volumes)


def load_sentences_jsonl(
    path: str | Path, resource: LexicalResource | None = None
) -> list[SentenceRecord]:
    """Load pre-segmented sentences: JSONL of {sentence_id, volume_no, page_no, text}."""
    records = []
    seen: set[str] = set()
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"bad JSON on line {line_no} of {path}: {exc}") from exc
        sid = str(row["sentence_id"])
        if sid in seen:
            raise CorpusError(f"duplicate sentence_id {sid!r} on line {line_no}",
                              sentence_id=sid)
        seen.add(sid)
        text = normalize(str(row["text"]))
        records.append(
            SentenceRecord(
                sentence_id=sid,
                volume_no=int(row.get("volume_no", 1)),
                page_no=int(row.get("page_no", 1)),
                char_start=int(row.get("char_start", 0)),
                char_end=int(row.get("char_start", 0)) + len(text),
                text=text,
                tokens=tokenize(text, resource),
            )
        )
    return records


def segment_edition(
    edition: Edition,
    resource: LexicalResource | None = None,
    abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS,
) -> list[SentenceRecord]:
    """Segment every volume; sentence ids are prefixed with the edition id."""
    out: list[SentenceRecord] = []
    for volume in edition.volumes:
        out.extend(
            segment_sentences(
                volume, resource, abbreviations, id_prefix=f"{edition.edition_id}:"
            )
        )
    return out


def iter_volume_tokens(
    edition: Edition, resource: LexicalResource | None = None
) -> Iterator[tuple[int, Token]]:
    """Yield (volume_no, token) over an edition in document order."""
    for volume in edition.volumes:
        for token in tokenize(volume.full_text, resource):
            yield volume.volume_no, token
