"""Candidate generation: BM25 lexical retrieval plus embedding-space
semantic retrieval, each capped (default 100), merged and deduplicated."""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import LexicalResource, SentenceRecord, tokenize
from .errors import MotifdexError


class RetrievalError(MotifdexError):
    module = "retrieval"


class EmptyCorpus(RetrievalError):
    code = "EMPTY_CORPUS"


class UnknownSentence(RetrievalError):
    code = "UNKNOWN_SENTENCE"


class DimMismatch(RetrievalError):
    code = "DIM_MISMATCH"


class ZeroVector(RetrievalError):
    code = "ZERO_VECTOR"


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.5
    b: float = 0.75

    def __post_init__(self):
        if self.k1 <= 0:
            raise ValueError("k1 must be > 0")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError("b must be in [0,1]")


@dataclass
class InvertedIndex:
    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    avg_doc_length: float
    doc_count: int
    params: Bm25Params = field(default_factory=Bm25Params)


def build_index(
    sentences: Sequence[SentenceRecord], params: Bm25Params | None = None
) -> InvertedIndex:
    if not sentences:
        raise EmptyCorpus("cannot index an empty corpus")
    params = params or Bm25Params()
    postings: dict[str, dict[str, int]] = {}
    doc_lengths: dict[str, int] = {}
    for sent in sentences:
        doc_lengths[sent.sentence_id] = len(sent.tokens)
        counts = Counter(tok.lemma for tok in sent.tokens)
        for lemma, tf in counts.items():
            postings.setdefault(lemma, {})[sent.sentence_id] = tf
    return InvertedIndex(
        postings={
            lemma: sorted(docs.items()) for lemma, docs in postings.items()
        },
        doc_lengths=doc_lengths,
        avg_doc_length=sum(doc_lengths.values()) / len(doc_lengths),
        doc_count=len(doc_lengths),
        params=params,
    )


def _idf(index: InvertedIndex, lemma: str) -> float:
    n_q = len(index.postings.get(lemma, ()))
    return math.log((index.doc_count - n_q + 0.5) / (n_q + 0.5) + 1.0)


def bm25_score(index: InvertedIndex, query_lemmas: Iterable[str], sentence_id: str) -> float:
    """Okapi BM25 of one sentence for a query.  Distinct query lemmas each
    contribute once (bag-of-query convention: repeats are deduplicated)."""
    if sentence_id not in index.doc_lengths:
        raise UnknownSentence(f"sentence {sentence_id!r} not in index",
                              sentence_id=sentence_id)
    k1, b = index.params.k1, index.params.b
    length = index.doc_lengths[sentence_id]
    norm = k1 * (1.0 - b + b * length / index.avg_doc_length)
    score = 0.0
    for lemma in dict.fromkeys(query_lemmas):
        tf = 0
        for doc_id, doc_tf in index.postings.get(lemma, ()):
            if doc_id == sentence_id:
                tf = doc_tf
                break
        if tf == 0:
            continue
        score += _idf(index, lemma) * tf * (k1 + 1.0) / (tf + norm)
    return score


def lexical_retrieve(
    index: InvertedIndex,
    motif_description: str,
    k: int = 100,
    resource: LexicalResource | None = None,
) -> list[tuple[str, float]]:
    """Top-k sentences by BM25 over the tokenized motif description.

    Only sentences with nonzero score are returned; ties break by ascending
    sentence_id.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    query = list(dict.fromkeys(t.lemma for t in tokenize(motif_description, resource)))
    accum: dict[str, float] = {}
    k1, b = index.params.k1, index.params.b
    for lemma in query:
        posting = index.postings.get(lemma)
        if not posting:
            continue
        idf = _idf(index, lemma)
        for sentence_id, tf in posting:
            length = index.doc_lengths[sentence_id]
            norm = k1 * (1.0 - b + b * length / index.avg_doc_length)
            accum[sentence_id] = accum.get(sentence_id, 0.0) + (
                idf * tf * (k1 + 1.0) / (tf + norm)
            )
    ranked = sorted(accum.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(sid, score) for sid, score in ranked[:k] if score > 0.0]


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    if len(u) != len(v):
        raise DimMismatch(f"dims differ: {len(u)} vs {len(v)}",
                          dim_u=len(u), dim_v=len(v))
    dot = nu = nv = 0.0
    for a, b in zip(u, v):
        dot += a * b
        nu += a * a
        nv += b * b
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine undefined for a zero vector")
    # sqrt each norm separately: the product nu*nv can underflow to 0.0
    # for tiny components even when both norms are representable
    return dot / (math.sqrt(nu) * math.sqrt(nv))


def semantic_retrieve(
    sentence_vectors: Mapping[str, Sequence[float]],
    motif_vector: Sequence[float],
    k: int = 100,
) -> list[tuple[str, float]]:
    """Top-k sentences by cosine to the motif vector, ties by sentence_id.

    Exact scan over all sentences (the corpus is small enough that no ANN
    index is warranted); one numpy matrix pass.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not sentence_vectors:
        return []
    ids = list(sentence_vectors.keys())
    dim = len(motif_vector)
    for sid in ids:
        if len(sentence_vectors[sid]) != dim:
            raise DimMismatch(
                f"sentence {sid!r} has dim {len(sentence_vectors[sid])}, "
                f"motif vector has dim {dim}",
                sentence_id=sid,
            )
    matrix = np.asarray([sentence_vectors[sid] for sid in ids], dtype=np.float64)
    query = np.asarray(motif_vector, dtype=np.float64)
    q_norm = float(np.linalg.norm(query))
    if q_norm == 0.0:
        raise ZeroVector("motif vector is all zeros")
    norms = np.linalg.norm(matrix, axis=1)
    if bool((norms == 0.0).any()):
        zero_id = ids[int(np.argmax(norms == 0.0))]
        raise ZeroVector(f"sentence {zero_id!r} has a zero vector", sentence_id=zero_id)
    sims = (matrix @ query) / (norms * q_norm)
    scored = sorted(zip(ids, sims.tolist()), key=lambda kv: (-kv[1], kv[0]))
    return scored[:k]


@dataclass(frozen=True)
class MergedCandidate:
    sentence_id: str
    stage: str  # "lex" | "sem" | "both"
    lex_score: float | None
    sem_score: float | None


def merge_candidates(
    lex: Sequence[tuple[str, float]], sem: Sequence[tuple[str, float]]
) -> list[MergedCandidate]:
    """Union of the two ranked lists keeping each sentence once, tagged with
    the stage(s) that produced it.  Lexical order first, then unseen
    semantic results in their order."""
    sem_scores = dict(sem)
    merged: list[MergedCandidate] = []
    seen: set[str] = set()
    for sid, score in lex:
        if sid in seen:
            continue
        seen.add(sid)
        if sid in sem_scores:
            merged.append(MergedCandidate(sid, "both", score, sem_scores[sid]))
        else:
            merged.append(MergedCandidate(sid, "lex", score, None))
    for sid, score in sem:
        if sid in seen:
            continue
        seen.add(sid)
        merged.append(MergedCandidate(sid, "sem", None, score))
    return merged


@dataclass
class CandidateSet:
    motif_id: str
    lexical: list[tuple[str, float]]
    semantic: list[tuple[str, float]]
    merged: list[MergedCandidate]

    def to_jsonl_rows(self) -> list[dict]:
        return [
            {
                "motif_id": self.motif_id,
                "sentence_id": c.sentence_id,
                "stage": c.stage,
                "lex_score": c.lex_score,
                "sem_score": c.sem_score,
            }
            for c in self.merged
        ]


def retrieve_candidates(
    index: InvertedIndex,
    motif_id: str,
    motif_description: str,
    sentence_vectors: Mapping[str, Sequence[float]] | None,
    motif_vector: Sequence[float] | None,
    lex_k: int = 100,
    sem_k: int = 100,
    resource: LexicalResource | None = None,
) -> CandidateSet:
    """Run both stages for one motif and merge.  The semantic stage is
    skipped (empty) when vectors are not supplied."""
    lex = lexical_retrieve(index, motif_description, lex_k, resource)
    sem: list[tuple[str, float]] = []
    if sentence_vectors and motif_vector is not None:
        sem = semantic_retrieve(sentence_vectors, motif_vector, sem_k)
    return CandidateSet(
        motif_id=motif_id, lexical=lex, semantic=sem, merged=merge_candidates(lex, sem)
    )


class EmbeddingCache:
    """Disk cache of embedding vectors keyed by (provider_id, text hash).

    One JSON file per provider with header fields {provider_id, dim, count}
    so reruns of retrieval and calibration are free and deterministic.
    """

    def __init__(self, directory: str | Path, provider_id: str):
        self.provider_id = provider_id
        self.path = Path(directory) / f"{provider_id}.json"
        self._vectors: dict[str, list[float]] = {}
        self._dim: int | None = None
        if self.path.exists():
            data = json.loads(self.path.read_text(encoding="utf-8"))
            if data.get("provider_id") != provider_id:
                raise RetrievalError(
                    f"cache file {self.path} belongs to provider "
                    f"{data.get('provider_id')!r}, not {provider_id!r}",
                    path=str(self.path),
                )
            self._vectors = data.get("vectors", {})
            self._dim = data.get("dim")

    @staticmethod
    def key_of(text: str) -> str:
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def get(self, text: str) -> list[float] | None:
        return self._vectors.get(self.key_of(text))

    def put_many(self, texts: Sequence[str], vectors: Sequence[Sequence[float]]) -> None:
        for text, vec in zip(texts, vectors):
            vec = list(vec)
            if self._dim is None:
                self._dim = len(vec)
            elif len(vec) != self._dim:
                raise DimMismatch(
                    f"cache dim {self._dim} != vector dim {len(vec)}",
                    provider_id=self.provider_id,
                )
            self._vectors[self.key_of(text)] = vec

    def save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "provider_id": self.provider_id,
            "dim": self._dim,
            "count": len(self._vectors),
            "vectors": self._vectors,
        }
        self.path.write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


class CachingEmbedder:
    """Wrap an embedding provider with the disk cache."""

    def __init__(self, inner, cache: EmbeddingCache):
        self.inner = inner
        self.cache = cache

    def embed(self, texts: list[str]) -> list[list[float]]:
        missing = [t for t in dict.fromkeys(texts) if self.cache.get(t) is None]
        if missing:
            fetched = self.inner.embed(missing)
            self.cache.put_many(missing, fetched)
            self.cache.save()
        out = []
        for t in texts:
            vec = self.cache.get(t)
            assert vec is not None
            out.append(vec)
        return out
