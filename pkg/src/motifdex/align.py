"""Page alignment between editions.

Two methods share one incremental cursor procedure: for each source page,
take the last ``window_words`` tokens, scan candidate windows of the same
width in the target starting at the cursor (coarse stride, then a stride-1
refinement pass around the coarse winner), and commit the best candidate's
end as the page boundary.  Candidates are scored either by synonym-aware
Needleman-Wunsch alignment or by embedding cosine similarity.
"""

from __future__ import annotations

import bisect
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

from .corpus import Edition, LexicalResource, Token, tokenize
from .errors import MotifdexError


class AlignError(MotifdexError):
    module = "align"


class WindowTooLarge(AlignError):
    code = "WINDOW_TOO_LARGE"


class CursorExhausted(AlignError):
    code = "CURSOR_EXHAUSTED"


class EmptyGold(AlignError):
    code = "EMPTY_GOLD"


@dataclass(frozen=True)
class ScoringScheme:
    match_score: float = 1.0
    partial_score: float = 0.8
    mismatch_score: float = 0.0
    gap_penalty: float = -0.5

    def __post_init__(self):
        if not (self.match_score >= self.partial_score >= self.mismatch_score):
            raise ValueError("require match_score >= partial_score >= mismatch_score")
        if self.gap_penalty > 0:
            raise ValueError("gap_penalty must be <= 0")


class OpKind(str, enum.Enum):
    MATCH = "MATCH"
    PARTIAL = "PARTIAL"
    MISMATCH = "MISMATCH"
    GAP_A = "GAP_A"  # gap inserted in A: consumes a token of B only
    GAP_B = "GAP_B"  # gap inserted in B: consumes a token of A only


@dataclass(frozen=True)
class AlignmentOp:
    kind: OpKind
    a_index: int | None
    b_index: int | None


@dataclass
class Alignment:
    score: float
    ops: list[AlignmentOp]

    def replay(self, seq_a: Sequence, seq_b: Sequence) -> tuple[list, list]:
        """Walk the ops, consuming both sequences exactly once, in order."""
        out_a, out_b = [], []
        next_a = next_b = 0
        for op in self.ops:
            if op.a_index is not None:
                if op.a_index != next_a:
                    raise ValueError(f"ops consume A out of order at {op}")
                out_a.append(seq_a[op.a_index])
                next_a += 1
            if op.b_index is not None:
                if op.b_index != next_b:
                    raise ValueError(f"ops consume B out of order at {op}")
                out_b.append(seq_b[op.b_index])
                next_b += 1
        if next_a != len(seq_a) or next_b != len(seq_b):
            raise ValueError("ops do not consume both sequences completely")
        return out_a, out_b


def _classify(a: Token, b: Token, resource: LexicalResource) -> OpKind:
    if a.lemma == b.lemma:
        return OpKind.MATCH
    set_a = resource.synonyms_of(a.lemma) | {a.lemma}
    set_b = resource.synonyms_of(b.lemma) | {b.lemma}
    if not set_a.isdisjoint(set_b):
        return OpKind.PARTIAL
    return OpKind.MISMATCH


def word_match_score(
    a: Token, b: Token, resource: LexicalResource, scheme: ScoringScheme
) -> float:
    kind = _classify(a, b, resource)
    if kind is OpKind.MATCH:
        return scheme.match_score
    if kind is OpKind.PARTIAL:
        return scheme.partial_score
    return scheme.mismatch_score


def nw_align(
    seq_a: Sequence[Token],
    seq_b: Sequence[Token],
    resource: LexicalResource | None = None,
    scheme: ScoringScheme | None = None,
    window_bound: int = 512,
) -> Alignment:
    """Maximum-score global alignment with a full traceback.

    Tie-break during traceback prefers diagonal moves over GAP_B over GAP_A,
    which makes the returned op list deterministic.
    """
    resource = resource or LexicalResource.empty()
    scheme = scheme or ScoringScheme()
    m, n = len(seq_a), len(seq_b)
    if m > window_bound or n > window_bound:
        raise WindowTooLarge(
            f"sequence lengths ({m}, {n}) exceed window bound {window_bound}",
            len_a=m, len_b=n, window_bound=window_bound,
        )
    gap = scheme.gap_penalty
    matrix = [[0.0] * (n + 1) for _ in range(m + 1)]
    for i in range(1, m + 1):
        matrix[i][0] = i * gap
    for j in range(1, n + 1):
        matrix[0][j] = j * gap
    kinds = [[OpKind.MISMATCH] * n for _ in range(m)]
    for i in range(1, m + 1):
        row, prev = matrix[i], matrix[i - 1]
        a = seq_a[i - 1]
        for j in range(1, n + 1):
            kind = _classify(a, seq_b[j - 1], resource)
            kinds[i - 1][j - 1] = kind
            d = (
                scheme.match_score
                if kind is OpKind.MATCH
                else scheme.partial_score if kind is OpKind.PARTIAL else scheme.mismatch_score
            )
            row[j] = max(prev[j - 1] + d, prev[j] + gap, row[j - 1] + gap)

    ops: list[AlignmentOp] = []
    i, j = m, n
    while i > 0 or j > 0:
        cell = matrix[i][j]
        if i > 0 and j > 0:
            kind = kinds[i - 1][j - 1]
            d = (
                scheme.match_score
                if kind is OpKind.MATCH
                else scheme.partial_score if kind is OpKind.PARTIAL else scheme.mismatch_score
            )
            if cell == matrix[i - 1][j - 1] + d:
                ops.append(AlignmentOp(kind, i - 1, j - 1))
                i, j = i - 1, j - 1
                continue
        if i > 0 and cell == matrix[i - 1][j] + gap:
            ops.append(AlignmentOp(OpKind.GAP_B, i - 1, None))
            i -= 1
            continue
        ops.append(AlignmentOp(OpKind.GAP_A, None, j - 1))
        j -= 1
    ops.reverse()
    return Alignment(score=matrix[m][n], ops=ops)


# -- fast score-only scorer used by the page scan --------------------------

_MatchKey = tuple[str, frozenset[str]]


def _match_keys(
    tokens: Sequence[Token], resource: LexicalResource, cache: dict[str, _MatchKey]
) -> list[_MatchKey]:
    keys = []
    for tok in tokens:
        key = cache.get(tok.lemma)
        if key is None:
            key = (tok.lemma, resource.synonyms_of(tok.lemma) | {tok.lemma})
            cache[tok.lemma] = key
        keys.append(key)
    return keys


def _nw_score(keys_a: list[_MatchKey], keys_b: list[_MatchKey], scheme: ScoringScheme) -> float:
    """Score of the optimal global alignment, rolling-row, no traceback."""
    gap = scheme.gap_penalty
    match, partial, mismatch = scheme.match_score, scheme.partial_score, scheme.mismatch_score
    prev = [j * gap for j in range(len(keys_b) + 1)]
    for i, (lemma_a, set_a) in enumerate(keys_a, 1):
        cur = [i * gap]
        append = cur.append
        left = cur[0]
        for j, (lemma_b, set_b) in enumerate(keys_b, 1):
            if lemma_a == lemma_b:
                d = match
            elif not set_a.isdisjoint(set_b):
                d = partial
            else:
                d = mismatch
            best = prev[j - 1] + d
            up = prev[j] + gap
            if up > best:
                best = up
            skip = left + gap
            if skip > best:
                best = skip
            append(best)
            left = best
        prev = cur
    return prev[-1]


# -- page alignment ---------------------------------------------------------

@dataclass(frozen=True)
class AlignmentEntry:
    source_volume: int
    source_page: int
    target_volume: int
    target_char_start: int
    target_char_end: int
    confidence: float


@dataclass
class AlignmentMap:
    entries: list[AlignmentEntry]
    flagged: dict | None = None  # CURSOR_EXHAUSTED report when the scan ran dry

    def __post_init__(self):
        order = [(e.source_volume, e.source_page) for e in self.entries]
        if order != sorted(order):
            raise ValueError("entries must be sorted by (source_volume, source_page)")
        last_end: dict[int, int] = {}
        for e in self.entries:
            if not (0.0 <= e.confidence <= 1.0):
                raise ValueError(f"confidence out of range on {e}")
            if e.target_char_end < e.target_char_start:
                raise ValueError(f"inverted target span on {e}")
            if e.target_char_start < last_end.get(e.target_volume, 0):
                raise ValueError(f"target spans overlap within volume on {e}")
            last_end[e.target_volume] = e.target_char_end

    def lookup(self, source_volume: int, source_page: int) -> AlignmentEntry | None:
        for e in self.entries:
            if e.source_volume == source_volume and e.source_page == source_page:
                return e
        return None

    def to_json(self) -> dict:
        return {
            "entries": [vars(e) | {} for e in self.entries],
            "flagged": self.flagged,
        }

    @classmethod
    def from_json(cls, data: dict | list[dict]) -> "AlignmentMap":
        if isinstance(data, list):  # bare entry list, no flag
            return cls([AlignmentEntry(**row) for row in data])
        return cls(
            [AlignmentEntry(**row) for row in data["entries"]],
            flagged=data.get("flagged"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "AlignmentMap":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


class SupportsEmbed(Protocol):
    def embed(self, texts: list[str]) -> list[list[float]]: ...


def _page_windows(
    edition: Edition, resource: LexicalResource, window_words: int
) -> list[tuple[int, int, list[Token]]]:
    """(volume_no, page_no, last-window_words-tokens) per source page."""
    windows = []
    for volume in edition.volumes:
        tokens = tokenize(volume.full_text, resource)
        offsets = [t.char_offset for t in tokens]
        for page in volume.pages:
            lo = bisect.bisect_left(offsets, page.char_start)
            hi = bisect.bisect_left(offsets, page.char_end)
            page_tokens = tokens[lo:hi]
            windows.append((volume.volume_no, page.page_no, page_tokens[-window_words:]))
    return windows


def _target_stream(
    target: Edition, resource: LexicalResource
) -> list[tuple[int, Token]]:
    stream = []
    for volume in target.volumes:
        for token in tokenize(volume.full_text, resource):
            stream.append((volume.volume_no, token))
    return stream


def _align_pages(
    source: Edition,
    target: Edition,
    resource: LexicalResource,
    window_words: int,
    stride: int,
    horizon_tokens_for: Callable[[int], int],
    batch_score: Callable[[list[Token], list[list[Token]]], list[float]],
    confidence_of: Callable[[float, int], float],
    score_lipschitz: float | None = None,
) -> AlignmentMap:
    if window_words < 10:
        raise ValueError("window_words must be >= 10")
    windows = _page_windows(source, resource, window_words)
    stream = _target_stream(target, resource)
    total = len(stream)

    entries: list[AlignmentEntry] = []
    flagged = None
    cursor = 0
    last_end_char: dict[int, int] = {}

    def span_start(volume_no: int) -> int:
        return last_end_char.get(volume_no, 0)

    for vol_no, page_no, window in windows:
        if not window:
            # Empty page: zero-width span at the current cursor position.
            if cursor < total:
                tvol, tok = stream[cursor]
                at = tok.char_offset
            elif stream:
                tvol, tok = stream[-1]
                at = tok.char_offset + len(tok.surface)
            else:
                tvol, at = (target.volumes[0].volume_no if target.volumes else 1), 0
            at = max(at, span_start(tvol))
            entries.append(AlignmentEntry(vol_no, page_no, tvol, at, at, 0.0))
            last_end_char[tvol] = at
            continue
        if cursor >= total:
            flagged = CursorExhausted(
                "target text exhausted before all source pages were placed",
                source_volume=vol_no, source_page=page_no,
            ).report()
            break
        horizon = horizon_tokens_for(len(window))
        limit = min(cursor + max(horizon - 1, 0), total - 1)
        coarse = list(range(cursor, limit + 1, max(stride, 1)))
        candidates = [
            [tok for _, tok in stream[s : s + len(window)]] for s in coarse
        ]
        scores = batch_score(window, candidates)
        best_i = max(range(len(coarse)), key=lambda k: (scores[k], -coarse[k]))
        best_start, best_score = coarse[best_i], scores[best_i]
        # Refinement: stride-1 sweep so boundaries land exactly even when the
        # true offset is not a stride multiple.  With a Lipschitz bound on
        # how far the score can move per one-token shift, every coarse
        # candidate that could still hide the true peak is swept
        # (branch-and-bound, exact); without one, only the winner's basin is.
        if score_lipschitz is not None:
            slack = score_lipschitz * max(stride - 1, 0)
            seeds = [s for k, s in enumerate(coarse) if scores[k] + slack >= best_score]
        else:
            seeds = [best_start]
        fine_set: set[int] = set()
        for seed in seeds:
            lo = max(cursor, seed - stride + 1)
            hi = min(limit, seed + stride - 1)
            fine_set.update(range(lo, hi + 1))
        fine = sorted(fine_set - set(coarse))
        if fine:
            fine_candidates = [
                [tok for _, tok in stream[s : s + len(window)]] for s in fine
            ]
            fine_scores = batch_score(window, fine_candidates)
            for s, sc in zip(fine, fine_scores):
                if sc > best_score or (sc == best_score and s < best_start):
                    best_start, best_score = s, sc
        chosen_len = min(len(window), total - best_start)
        end_vol, end_tok = stream[best_start + chosen_len - 1]
        end_char = end_tok.char_offset + len(end_tok.surface)
        start_char = span_start(end_vol)
        if end_char < start_char:
            end_char = start_char
        entries.append(
            AlignmentEntry(
                vol_no, page_no, end_vol, start_char, end_char,
                confidence_of(best_score, len(window)),
            )
        )
        last_end_char[end_vol] = end_char
        cursor = best_start + chosen_len
    return AlignmentMap(entries=entries, flagged=flagged)


def _expected_page_len(source: Edition, target_total_tokens: int, resource: LexicalResource) -> int:
    pages = sum(len(v.pages) for v in source.volumes)
    return max(1, round(target_total_tokens / max(pages, 1)))


def align_pages_nw(
    source: Edition,
    target: Edition,
    resource: LexicalResource | None = None,
    scheme: ScoringScheme | None = None,
    window_words: int = 100,
    stride: int = 10,
    horizon_factor: int = 5,
) -> AlignmentMap:
    """Cursor alignment scored by Needleman-Wunsch over word windows.

    Confidence is the best alignment score normalized by the window length
    (1.0 means every window token matched exactly).
    """
    resource = resource or LexicalResource.empty()
    scheme = scheme or ScoringScheme()
    stream_len = sum(len(tokenize(v.full_text, resource)) for v in target.volumes)
    expected = _expected_page_len(source, stream_len, resource)
    key_cache: dict[str, _MatchKey] = {}

    def batch_score(window: list[Token], candidates: list[list[Token]]) -> list[float]:
        window_keys = _match_keys(window, resource, key_cache)
        return [
            _nw_score(window_keys, _match_keys(cand, resource, key_cache), scheme)
            for cand in candidates
        ]

    def confidence(score: float, window_len: int) -> float:
        if window_len == 0 or scheme.match_score <= 0:
            return 0.0
        return max(0.0, min(1.0, score / (window_len * scheme.match_score)))

    # One-token window shift changes the optimal score by at most this much
    # (lose one scored pair to a gap, gain one appended gap); a sound bound
    # makes the coarse-scan pruning exact.
    lipschitz = (
        scheme.match_score - 2 * scheme.gap_penalty + max(0.0, -scheme.mismatch_score)
    )
    return _align_pages(
        source, target, resource, window_words, stride,
        lambda _w: horizon_factor * expected, batch_score, confidence,
        score_lipschitz=lipschitz,
    )


def align_pages_embed(
    source: Edition,
    target: Edition,
    embedder: SupportsEmbed,
    window_words: int = 100,
    horizon_pages: int = 5,
    stride: int = 10,
    resource: LexicalResource | None = None,
) -> AlignmentMap:
    """Cursor alignment scored by embedding cosine similarity.

    Confidence is the best cosine, clamped to [0, 1].
    """
    resource = resource or LexicalResource.empty()
    stream_len = sum(len(tokenize(v.full_text, resource)) for v in target.volumes)
    expected = _expected_page_len(source, stream_len, resource)

    def batch_score(window: list[Token], candidates: list[list[Token]]) -> list[float]:
        texts = [" ".join(t.surface for t in window)] + [
            " ".join(t.surface for t in cand) for cand in candidates
        ]
        vectors = embedder.embed(texts)
        anchor, rest = vectors[0], vectors[1:]
        return [_cosine(anchor, v) for v in rest]

    def confidence(score: float, _window_len: int) -> float:
        return max(0.0, min(1.0, score))

    return _align_pages(
        source, target, resource, window_words, stride,
        lambda _w: horizon_pages * expected, batch_score, confidence,
    )


def _cosine(u: Sequence[float], v: Sequence[float]) -> float:
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return dot / (nu * nv)


def audit_alignment(
    alignment_map: AlignmentMap,
    gold: Sequence[dict],
    tolerance_chars: int,
) -> float:
    """Fraction of gold pages whose mapped span endpoints both land within
    tolerance_chars of the true span.  Pages missing from the map count as
    misses."""
    if not gold:
        raise EmptyGold("gold audit sample is empty")
    hits = 0
    for row in gold:
        entry = alignment_map.lookup(int(row["source_volume"]), int(row["source_page"]))
        if entry is None:
            continue
        if (
            abs(entry.target_char_start - int(row["true_char_start"])) <= tolerance_chars
            and abs(entry.target_char_end - int(row["true_char_end"])) <= tolerance_chars
        ):
            hits += 1
    return hits / len(gold)
