"""Model backends as remote providers plus deterministic in-process mocks.

Three kinds of backend sit behind one JSON-over-HTTP wire protocol:

  POST {base_url}/v1/embed    {"texts": [...]}            -> {"dim", "vectors"}
  POST {base_url}/v1/score    {"pairs": [[motif, sent]]}  -> {"labels", "scores"?}
  POST {base_url}/v1/generate {"prompt", "system",
                               "temperature": 0,
                               "max_new_tokens": 1}       -> {"text"}

Clients enforce at-most-once semantics per logical request id: retries
happen only on pre-response transport failures and reuse the same
idempotency key.  Responses are schema-validated before use.
"""

from __future__ import annotations

import hashlib
import re
import threading
import uuid
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

import httpx

from .corpus import LexicalResource, tokenize
from .errors import MotifdexError

GENERATION_DECODING = {"temperature": 0, "max_new_tokens": 1}


class ProviderError(MotifdexError):
    code = "PROVIDER_ERROR"
    module = "gateway"


class ProviderTimeout(ProviderError):
    code = "PROVIDER_TIMEOUT"


class SchemaViolation(ProviderError):
    code = "SCHEMA_VIOLATION"


class Transport(ProviderError):
    code = "TRANSPORT"


@dataclass(frozen=True)
class ProviderConfig:
    kind: str  # EMBED | PAIR_SCORE | GENERATE
    provider_id: str
    base_url: str
    timeout_ms: int = 30_000
    max_in_flight: int = 8
    retries: int = 2

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be > 0")
        if self.kind not in ("EMBED", "PAIR_SCORE", "GENERATE"):
            raise ValueError(f"unknown provider kind {self.kind!r}")


@dataclass
class ScoreBatch:
    labels: list[bool]
    scores: list[float] | None = None


class EmbeddingProvider(Protocol):
    provider_id: str

    def embed(self, texts: list[str]) -> list[list[float]]: ...


class PairScorerProvider(Protocol):
    def score(self, pairs: Sequence[tuple[str, str]]) -> ScoreBatch: ...


class GenerationProvider(Protocol):
    def generate(self, prompt: str, system: str) -> str: ...


class _HttpProviderClient:
    def __init__(self, config: ProviderConfig, client: httpx.Client | None = None):
        self.config = config
        self.provider_id = config.provider_id
        self._client = client or httpx.Client(
            base_url=config.base_url, timeout=config.timeout_ms / 1000.0
        )
        self._gate = threading.Semaphore(max(1, config.max_in_flight))

    def _post(self, path: str, payload: dict) -> dict:
        request_id = str(uuid.uuid4())
        headers = {"X-Request-Id": request_id}
        last_error: Exception | None = None
        for _attempt in range(self.config.retries + 1):
            try:
                with self._gate:
                    response = self._client.post(path, json=payload, headers=headers)
            except httpx.TimeoutException as exc:
                # A timed-out request may have executed server-side; surface
                # it rather than re-sending (at-most-once).
                raise ProviderTimeout(
                    f"{self.provider_id}: request timed out",
                    provider_id=self.provider_id, request_id=request_id,
                ) from exc
            except httpx.TransportError as exc:
                last_error = exc
                continue
            if response.status_code != 200:
                raise ProviderError(
                    f"{self.provider_id}: HTTP {response.status_code}",
                    provider_id=self.provider_id, request_id=request_id,
                    status=response.status_code,
                )
            try:
                body = response.json()
            except ValueError as exc:
                raise SchemaViolation(
                    f"{self.provider_id}: response is not JSON",
                    provider_id=self.provider_id, request_id=request_id,
                ) from exc
            if not isinstance(body, dict):
                raise SchemaViolation(
                    f"{self.provider_id}: response is not an object",
                    provider_id=self.provider_id, request_id=request_id,
                )
            return body
        raise Transport(
            f"{self.provider_id}: transport failed after "
            f"{self.config.retries + 1} attempts: {last_error}",
            provider_id=self.provider_id, request_id=request_id,
        )


class EmbeddingClient(_HttpProviderClient):
    """EMBED-kind provider over the wire protocol; dim must stay constant
    for the life of the client."""

    def __init__(self, config: ProviderConfig, client: httpx.Client | None = None):
        super().__init__(config, client)
        self._dim: int | None = None

    def embed(self, texts: list[str]) -> list[list[float]]:
        body = self._post("/v1/embed", {"texts": list(texts)})
        vectors = body.get("vectors")
        dim = body.get("dim")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise SchemaViolation(
                f"{self.provider_id}: expected {len(texts)} vectors, got "
                f"{len(vectors) if isinstance(vectors, list) else type(vectors).__name__}",
                provider_id=self.provider_id,
            )
        for vec in vectors:
            if not isinstance(vec, list) or (dim is not None and len(vec) != dim):
                raise SchemaViolation(
                    f"{self.provider_id}: vector length disagrees with declared dim",
                    provider_id=self.provider_id,
                )
        if self._dim is None:
            self._dim = dim if isinstance(dim, int) else (len(vectors[0]) if vectors else None)
        elif dim is not None and dim != self._dim:
            raise SchemaViolation(
                f"{self.provider_id}: dim changed from {self._dim} to {dim} mid-session",
                provider_id=self.provider_id,
            )
        return [[float(x) for x in vec] for vec in vectors]


class PairScorerClient(_HttpProviderClient):
    def score(self, pairs: Sequence[tuple[str, str]]) -> ScoreBatch:
        body = self._post("/v1/score", {"pairs": [list(p) for p in pairs]})
        labels = body.get("labels")
        if not isinstance(labels, list) or len(labels) != len(pairs):
            raise SchemaViolation(
                f"{self.provider_id}: expected {len(pairs)} labels, got "
                f"{len(labels) if isinstance(labels, list) else type(labels).__name__}",
                provider_id=self.provider_id,
            )
        scores = body.get("scores")
        if scores is not None:
            if not isinstance(scores, list) or len(scores) != len(pairs):
                raise SchemaViolation(
                    f"{self.provider_id}: scores length disagrees with pairs",
                    provider_id=self.provider_id,
                )
            scores = [float(s) for s in scores]
        return ScoreBatch(labels=[bool(l) for l in labels], scores=scores)


class GenerationClient(_HttpProviderClient):
    def generate(self, prompt: str, system: str) -> str:
        body = self._post(
            "/v1/generate",
            {"prompt": prompt, "system": system, **GENERATION_DECODING},
        )
        text = body.get("text")
        if not isinstance(text, str):
            raise SchemaViolation(
                f"{self.provider_id}: response missing text field",
                provider_id=self.provider_id,
            )
        return text


# -- deterministic mocks ------------------------------------------------------

def _stable_slot(lemma: str, dim: int) -> int:
    digest = hashlib.sha1(lemma.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big") % dim


class MockEmbeddingProvider:
    """Bag-of-lemma count vectors, hashed into a fixed dimension.

    Identical texts embed identically, so cosine(v, v) = 1 and reruns are
    deterministic across processes (hashing is content-based, not id-based).
    """

    def __init__(self, resource: LexicalResource | None = None, dim: int = 256,
                 provider_id: str = "mock-embed"):
        self.resource = resource or LexicalResource.empty()
        self.dim = dim
        self.provider_id = provider_id

    def embed(self, texts: list[str]) -> list[list[float]]:
        out = []
        for text in texts:
            vec = [0.0] * self.dim
            for token in tokenize(text.lower(), self.resource):
                vec[_stable_slot(token.lemma, self.dim)] += 1.0
            out.append(vec)
        return out


class MockPairScorer:
    """True iff the sentence contains a lemma of the motif description;
    score is the fraction of motif lemmas found in the sentence."""

    def __init__(self, resource: LexicalResource | None = None,
                 provider_id: str = "mock-score"):
        self.resource = resource or LexicalResource.empty()
        self.provider_id = provider_id

    def score(self, pairs: Sequence[tuple[str, str]]) -> ScoreBatch:
        labels, scores = [], []
        for motif, sentence in pairs:
            motif_lemmas = {t.lemma for t in tokenize(motif.lower(), self.resource)}
            sentence_lemmas = {t.lemma for t in tokenize(sentence.lower(), self.resource)}
            hit = motif_lemmas & sentence_lemmas
            labels.append(bool(hit))
            scores.append(len(hit) / len(motif_lemmas) if motif_lemmas else 0.0)
        return ScoreBatch(labels=labels, scores=scores)


class ScriptedPairScorer:
    """Lookup-table scorer keyed by (motif_description, sentence_text)."""

    def __init__(self, table: Mapping[tuple[str, str], bool],
                 scores: Mapping[tuple[str, str], float] | None = None,
                 provider_id: str = "scripted-score"):
        self.table = dict(table)
        self.score_table = dict(scores or {})
        self.provider_id = provider_id

    def score(self, pairs: Sequence[tuple[str, str]]) -> ScoreBatch:
        labels = [bool(self.table.get((m, s), False)) for m, s in pairs]
        scores = [float(self.score_table.get((m, s), 1.0 if l else 0.0))
                  for (m, s), l in zip(pairs, labels)]
        return ScoreBatch(labels=labels, scores=scores)


_MOTIF_LINE = re.compile(r"^Motif:\s?(.*)$")
_SENTENCE_LINE = re.compile(r"^Sentence:\s?(.*)$")


def _query_pair_of_prompt(prompt: str) -> tuple[str, str]:
    """Recover the query (motif, sentence) from a built prompt: the last
    Motif:/Sentence: lines are always the query pair in both templates."""
    motif = sentence = ""
    for line in prompt.splitlines():
        m = _MOTIF_LINE.match(line)
        if m:
            motif = m.group(1)
        s = _SENTENCE_LINE.match(line)
        if s:
            sentence = s.group(1)
    return motif, sentence


class ScriptedGenerator:
    """Deterministic generator answering from a (motif, sentence) lookup
    table; unknown pairs get the fallback text."""

    def __init__(self, table: Mapping[tuple[str, str], str], fallback: str = "No",
                 provider_id: str = "scripted-gen"):
        self.table = dict(table)
        self.fallback = fallback
        self.provider_id = provider_id
        self.calls: list[tuple[str, str]] = []

    def generate(self, prompt: str, system: str) -> str:
        pair = _query_pair_of_prompt(prompt)
        self.calls.append(pair)
        return self.table.get(pair, self.fallback)


class MockGenerator:
    """Heuristic generator: answers Yes iff motif and sentence share a lemma."""

    def __init__(self, resource: LexicalResource | None = None,
                 provider_id: str = "mock-gen"):
        self.resource = resource or LexicalResource.empty()
        self.provider_id = provider_id

    def generate(self, prompt: str, system: str) -> str:
        motif, sentence = _query_pair_of_prompt(prompt)
        motif_lemmas = {t.lemma for t in tokenize(motif.lower(), self.resource)}
        sentence_lemmas = {t.lemma for t in tokenize(sentence.lower(), self.resource)}
        return "Yes" if motif_lemmas & sentence_lemmas else "No"


def build_mock_provider_app(
    embedder: MockEmbeddingProvider | None = None,
    scorer=None,
    generator=None,
    resource: LexicalResource | None = None,
):
    """FastAPI app speaking the provider wire protocol over the mocks.

    Used by tests (via an in-process transport) and as a local stand-in
    backend when no real model service is available."""
    from fastapi import FastAPI
    from pydantic import BaseModel

    embedder = embedder or MockEmbeddingProvider(resource)
    scorer = scorer or MockPairScorer(resource)
    generator = generator or MockGenerator(resource)

    class EmbedRequest(BaseModel):
        texts: list[str]

    class ScoreRequest(BaseModel):
        pairs: list[tuple[str, str]]

    class GenerateRequest(BaseModel):
        prompt: str
        system: str = ""
        temperature: float = 0
        max_new_tokens: int = 1

    app = FastAPI(title="mock motif providers")

    @app.post("/v1/embed")
    def embed(req: EmbedRequest):
        vectors = embedder.embed(req.texts)
        return {"dim": embedder.dim, "vectors": vectors}

    @app.post("/v1/score")
    def score(req: ScoreRequest):
        batch = scorer.score(req.pairs)
        payload = {"labels": batch.labels}
        if batch.scores is not None:
            payload["scores"] = batch.scores
        return payload

    @app.post("/v1/generate")
    def generate(req: GenerateRequest):
        return {"text": generator.generate(req.prompt, req.system)}

    return app
