"""REST service exposing the annotation workflow and classification jobs.

Error contract: request-schema violations are 400; assignment/duplicate
conflicts 409; domain-rule violations 422; provider failures 502.  Every
error body is the module-qualified report {module, code, message, detail}.
Mutations all route through the store's serialized writer; long-running
classification/retrieval work runs as polled background jobs so reads never
block on provider calls.
"""

from __future__ import annotations

import itertools
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Literal, Sequence

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .classifiers import (
    PAPER_SHOTS,
    CandidatePair,
    Method,
    ThresholdModel,
    Verdict,
    calibrate_threshold,
    generative_classify,
    rerank,
    threshold_classify,
)
from .config import ProjectConfig
from .corpus import LexicalResource, SentenceRecord
from .errors import MotifdexError
from .metrics import AXIS, agreement_grid
from .model import Expression, Label
from .motif_index import MotifEntry, MotifIndex
from .providers import ProviderError
from .retrieval import build_index, cosine, retrieve_candidates
from .store import Adjudication, AnnotationRecord, AnnotationStore

_CONFLICT_CODES = {"NOT_ASSIGNED", "DUPLICATE_RECORD", "NOT_IN_QUEUE", "EMPTY_QUEUE"}


def _status_for(exc: MotifdexError) -> int:
    if isinstance(exc, ProviderError):
        return 502
    if exc.code in _CONFLICT_CODES:
        return 409
    return 422


def _not_found(message: str, **detail) -> JSONResponse:
    return JSONResponse(
        status_code=404,
        content={
            "module": "gateway",
            "code": "NOT_FOUND",
            "message": message,
            "detail": detail,
        },
    )


# -- request bodies -------------------------------------------------------------


class LabelIn(BaseModel):
    motif_id: str
    sentence_id: str
    annotator_id: str
    label: Literal["positive", "negative"]
    expression: Literal["simple", "complex"] | None = None
    flagged: bool = False


class AdjudicationIn(BaseModel):
    motif_id: str
    sentence_id: str
    final_label: Literal["positive", "negative"]
    final_expression: Literal["simple", "complex"] | None = None
    resolver_id: str
    note: str = ""


class RecalibrateIn(BaseModel):
    provider_id: str
    positive_scores: list[float] = []
    negative_scores: list[float] = []


class PairRefIn(BaseModel):
    motif_id: str
    sentence_id: str


class ClassifyJobIn(BaseModel):
    method: Literal["rerank", "threshold", "zero-shot", "few-shot"]
    pairs: list[PairRefIn]
    provider_id: str | None = None


class RetrieveJobIn(BaseModel):
    motif_id: str


# -- serialization helpers ---------------------------------------------------------


def _record_json(record: AnnotationRecord) -> dict:
    return {
        "motif_id": record.motif_id,
        "sentence_id": record.sentence_id,
        "annotator_id": record.annotator_id,
        "label": record.label.value,
        "expression": record.expression.value if record.expression else None,
        "flagged": record.flagged,
        "timestamp": record.timestamp,
    }


def _adjudication_json(adjudication: Adjudication) -> dict:
    return {
        "motif_id": adjudication.motif_id,
        "sentence_id": adjudication.sentence_id,
        "final_label": adjudication.final_label.value,
        "final_expression": (
            adjudication.final_expression.value if adjudication.final_expression else None
        ),
        "resolver_id": adjudication.resolver_id,
        "note": adjudication.note,
        "timestamp": adjudication.timestamp,
    }


def _motif_json(entry: MotifEntry) -> dict:
    return {
        "motif_id": str(entry.id),
        "theme": entry.id.theme,
        "description": entry.description,
        "conceptual": entry.conceptual.value,
        "graph_node_count": entry.graph_node_count,
        "page_refs": [str(ref) for ref in entry.page_refs],
    }


# -- jobs ----------------------------------------------------------------------------


@dataclass
class _Job:
    job_id: str
    kind: str
    status: str = "pending"  # pending | running | done | error
    result: Any = None
    error: dict | None = None

    def to_json(self) -> dict:
        body = {"job_id": self.job_id, "kind": self.kind, "status": self.status}
        if self.status == "done":
            body["result"] = self.result
        if self.status == "error":
            body["error"] = self.error
        return body


@dataclass
class _AppState:
    store: AnnotationStore
    motif_index: MotifIndex | None
    sentences: list[SentenceRecord]
    resource: LexicalResource | None
    config: ProjectConfig | None
    embedder: Any
    scorer: Any
    generator: Any
    thresholds: dict[str, ThresholdModel]
    sentence_by_id: dict[str, SentenceRecord] = field(default_factory=dict)
    sentence_pos: dict[str, int] = field(default_factory=dict)
    jobs: dict[str, _Job] = field(default_factory=dict)
    executor: ThreadPoolExecutor = field(
        default_factory=lambda: ThreadPoolExecutor(max_workers=4)
    )
    job_lock: threading.Lock = field(default_factory=threading.Lock)
    job_counter: "itertools.count[int]" = field(default_factory=itertools.count)
    retrieval_lock: threading.Lock = field(default_factory=threading.Lock)
    bm25_index: Any = None
    sentence_vectors: dict[str, list[float]] | None = None

    def __post_init__(self):
        for pos, record in enumerate(self.sentences):
            self.sentence_by_id[record.sentence_id] = record
            self.sentence_pos[record.sentence_id] = pos

    def motif_entry(self, motif_id: str) -> MotifEntry | None:
        if self.motif_index is None or motif_id not in self.motif_index:
            return None
        return self.motif_index[motif_id]

    def new_job(self, kind: str) -> _Job:
        with self.job_lock:
            job = _Job(job_id=f"job-{next(self.job_counter):05d}", kind=kind)
            self.jobs[job.job_id] = job
            return job


def _motif_expression_buckets(store: AnnotationStore) -> dict[str, str]:
    """Motif-level expression bucket from gold: 'complex' when any gold
    positive carries a COMPLEX expression label, else 'simple'."""
    buckets: dict[str, str] = {}
    for (motif_id, _), (label, expression) in store.gold_labels().items():
        current = buckets.setdefault(motif_id, "simple")
        if (
            label is Label.POSITIVE
            and expression is Expression.COMPLEX
            and current != "complex"
        ):
            buckets[motif_id] = "complex"
    return buckets


def create_app(
    store: AnnotationStore,
    *,
    motif_index: MotifIndex | None = None,
    sentences: Sequence[SentenceRecord] | None = None,
    resource: LexicalResource | None = None,
    config: ProjectConfig | None = None,
    embedder: Any = None,
    scorer: Any = None,
    generator: Any = None,
) -> FastAPI:
    state = _AppState(
        store=store,
        motif_index=motif_index,
        sentences=list(sentences or []),
        resource=resource,
        config=config,
        embedder=embedder,
        scorer=scorer,
        generator=generator,
        thresholds=dict(config.thresholds) if config else {},
    )
    app = FastAPI(title="motifdex", docs_url=None, redoc_url=None)
    app.state.motifdex = state

    token = config.bearer_token if config else None

    @app.middleware("http")
    async def _auth(request: Request, call_next):
        if token and request.url.path.startswith("/api"):
            supplied = request.headers.get("authorization", "")
            if supplied != f"Bearer {token}":
                return JSONResponse(
                    status_code=401,
                    content={
                        "module": "gateway",
                        "code": "UNAUTHORIZED",
                        "message": "missing or invalid bearer token",
                        "detail": {},
                    },
                )
        return await call_next(request)

    @app.exception_handler(MotifdexError)
    async def _domain_error(_request: Request, exc: MotifdexError):
        return JSONResponse(status_code=_status_for(exc), content=exc.report())

    @app.exception_handler(RequestValidationError)
    async def _schema_error(_request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={
                "module": "gateway",
                "code": "SCHEMA_VIOLATION",
                "message": "request body does not match the endpoint schema",
                "detail": {"errors": exc.errors()},
            },
        )

    # -- annotation workflow -------------------------------------------------

    @app.get("/api/batches/next")
    def next_batch(annotator: str, size: int | None = None):
        batch_size = size or (config.batch_size if config else 1500)
        double_rate = config.double_rate if config else 0.5
        batch = store.next_batch(annotator, batch_size, double_rate)
        return {
            "batch_id": batch.batch_id,
            "annotator_id": batch.annotator_id,
            "pairs": [
                {"motif_id": m, "sentence_id": s} for m, s in batch.pairs
            ],
            "double_subset": [
                {"motif_id": m, "sentence_id": s} for m, s in batch.double_subset
            ],
        }

    @app.get("/api/batches/remaining")
    def remaining(annotator: str):
        return {
            "annotator_id": annotator,
            "pairs": [
                {"motif_id": m, "sentence_id": s}
                for m, s in store.unlabeled_assigned(annotator)
            ],
        }

    @app.post("/api/labels", status_code=201)
    def post_label(body: LabelIn):
        record = store.record_label(
            AnnotationRecord(
                motif_id=body.motif_id,
                sentence_id=body.sentence_id,
                annotator_id=body.annotator_id,
                label=Label(body.label),
                expression=Expression(body.expression) if body.expression else None,
                flagged=body.flagged,
            )
        )
        return _record_json(record)

    @app.get("/api/labels")
    def list_labels(
        motif_id: str | None = None,
        sentence_id: str | None = None,
        annotator_id: str | None = None,
    ):
        records = store.labels(motif_id, sentence_id, annotator_id)
        return {"records": [_record_json(r) for r in records]}

    @app.get("/api/disagreements")
    def disagreements():
        return {
            "disagreements": [
                {
                    "motif_id": d.motif_id,
                    "sentence_id": d.sentence_id,
                    "records": [_record_json(r) for r in d.records],
                }
                for d in store.disagreements()
            ]
        }

    @app.post("/api/adjudications", status_code=201)
    def post_adjudication(body: AdjudicationIn):
        adjudication = store.adjudicate(
            motif_id=body.motif_id,
            sentence_id=body.sentence_id,
            final_label=Label(body.final_label),
            final_expression=(
                Expression(body.final_expression) if body.final_expression else None
            ),
            resolver_id=body.resolver_id,
            note=body.note,
        )
        return _adjudication_json(adjudication)

    # -- reference data --------------------------------------------------------

    @app.get("/api/motifs")
    def motifs():
        if state.motif_index is None:
            return {"motifs": []}
        return {"motifs": [_motif_json(e) for e in state.motif_index]}

    @app.get("/api/motifs/{motif_id}")
    def motif(motif_id: str):
        entry = state.motif_entry(motif_id)
        if entry is None:
            return _not_found(f"unknown motif {motif_id!r}", motif_id=motif_id)
        return _motif_json(entry)

    @app.get("/api/pairs/{pair_id}/context")
    def pair_context(pair_id: str):
        if "|" not in pair_id:
            return _not_found(
                "pair id must be 'motif_id|sentence_id'", pair_id=pair_id
            )
        motif_id, sentence_id = pair_id.split("|", 1)
        override = store.context.get((motif_id, sentence_id))
        if override is not None:
            return {"motif_id": motif_id, "sentence_id": sentence_id, **override}
        sentence = state.sentence_by_id.get(sentence_id)
        if sentence is None:
            return _not_found(
                f"unknown sentence {sentence_id!r}", sentence_id=sentence_id
            )
        entry = state.motif_entry(motif_id)
        pos = state.sentence_pos[sentence_id]

        def neighbours(offsets):
            return [
                state.sentences[i].text
                for i in offsets
                if 0 <= i < len(state.sentences)
                and state.sentences[i].volume_no == sentence.volume_no
            ]

        return {
            "motif_id": motif_id,
            "sentence_id": sentence_id,
            "motif_description": entry.description if entry else None,
            "sentence_text": sentence.text,
            "before": neighbours([pos - 2, pos - 1]),
            "after": neighbours([pos + 1, pos + 2]),
        }

    # -- monitoring --------------------------------------------------------------

    @app.get("/api/agreement")
    def agreement():
        doubles = store.double_labeled_pairs()
        conceptual = {
            str(e.id): e.conceptual.value for e in (state.motif_index or [])
        }
        expression = _motif_expression_buckets(store)
        for motif_id, _, _ in doubles:
            expression.setdefault(motif_id, "simple")
        grid = agreement_grid(doubles, conceptual, expression)
        return {
            "double_pairs": len(doubles),
            "cells": [
                {"conceptual": c, "expression": e, **grid[(c, e)]}
                for c in AXIS
                for e in AXIS
            ],
        }

    @app.get("/api/progress")
    def progress():
        return {
            "project_id": config.project_id if config else "motifdex",
            "accounting": store.accounting().to_json(),
            "thresholds": {
                pid: {"threshold": m.threshold, "provenance": m.provenance}
                for pid, m in sorted(state.thresholds.items())
            },
        }

    @app.post("/api/recalibrate")
    def recalibrate(body: RecalibrateIn):
        threshold = calibrate_threshold(body.positive_scores, body.negative_scores)
        model = ThresholdModel(
            provider_id=body.provider_id,
            threshold=threshold,
            provenance="locally-calibrated",
        )
        state.thresholds[body.provider_id] = model
        return {
            "provider_id": model.provider_id,
            "threshold": model.threshold,
            "provenance": model.provenance,
        }

    # -- background jobs ------------------------------------------------------------

    def _pair_texts(refs: list[PairRefIn]) -> list[CandidatePair]:
        pairs = []
        for ref in refs:
            entry = state.motif_entry(ref.motif_id)
            sentence = state.sentence_by_id.get(ref.sentence_id)
            if entry is None:
                raise MotifdexError.with_code(
                    "UNKNOWN_REFERENCE", "gateway",
                    f"unknown motif {ref.motif_id!r}", motif_id=ref.motif_id,
                )
            if sentence is None:
                raise MotifdexError.with_code(
                    "UNKNOWN_REFERENCE", "gateway",
                    f"unknown sentence {ref.sentence_id!r}",
                    sentence_id=ref.sentence_id,
                )
            pairs.append(
                CandidatePair(
                    motif_id=ref.motif_id,
                    sentence_id=ref.sentence_id,
                    motif_description=entry.description,
                    sentence_text=sentence.text,
                )
            )
        return pairs

    def _verdict_json(verdict) -> dict:
        return {
            "motif_id": verdict.motif_id,
            "sentence_id": verdict.sentence_id,
            "method": verdict.method.value,
            "label": verdict.label.value,
            "score": verdict.score,
            "raw": verdict.raw,
        }

    def _run_classify(job: _Job, body: ClassifyJobIn) -> None:
        job.status = "running"
        try:
            pairs = _pair_texts(body.pairs)
            if body.method == "rerank":
                if state.scorer is None:
                    raise MotifdexError.with_code(
                        "BAD_CONFIG", "gateway", "no pair-scorer provider configured"
                    )
                result = {"verdicts": [_verdict_json(v) for v in rerank(pairs, state.scorer)]}
            elif body.method == "threshold":
                if state.embedder is None:
                    raise MotifdexError.with_code(
                        "BAD_CONFIG", "gateway", "no embedding provider configured"
                    )
                provider_id = body.provider_id or getattr(
                    state.embedder, "provider_id", None
                )
                model = state.thresholds.get(provider_id)
                if model is None:
                    raise MotifdexError.with_code(
                        "BAD_CONFIG", "gateway",
                        f"no threshold for provider {provider_id!r}",
                        provider_id=provider_id,
                    )
                texts = [p.motif_description for p in pairs] + [
                    p.sentence_text for p in pairs
                ]
                vectors = state.embedder.embed(texts)
                verdicts = []
                for i, pair in enumerate(pairs):
                    sim = cosine(vectors[i], vectors[len(pairs) + i])
                    verdicts.append(
                        Verdict(
                            motif_id=pair.motif_id,
                            sentence_id=pair.sentence_id,
                            label=threshold_classify(sim, model),
                            method=Method.THRESHOLD,
                            score=sim,
                        )
                    )
                result = {"verdicts": [_verdict_json(v) for v in verdicts]}
            else:
                if state.generator is None:
                    raise MotifdexError.with_code(
                        "BAD_CONFIG", "gateway", "no generation provider configured"
                    )
                shots = None
                if body.method == "few-shot":
                    shots = (config.shots if config else None) or PAPER_SHOTS
                run = generative_classify(pairs, state.generator, shots)
                result = {
                    "verdicts": [_verdict_json(v) for v in run.verdicts],
                    "failures": [
                        {
                            "motif_id": f.motif_id,
                            "sentence_id": f.sentence_id,
                            "error": f.error,
                        }
                        for f in run.failures
                    ],
                }
            job.result = result
            job.status = "done"
        except MotifdexError as exc:
            job.error = exc.report()
            job.status = "error"
        except Exception as exc:  # pragma: no cover - defensive
            job.error = {
                "module": "gateway",
                "code": "INTERNAL",
                "message": str(exc),
                "detail": {},
            }
            job.status = "error"

    def _ensure_retrieval_state() -> None:
        with state.retrieval_lock:
            if state.bm25_index is None:
                if not state.sentences:
                    raise MotifdexError.with_code(
                        "BAD_CONFIG", "gateway", "no sentence corpus loaded"
                    )
                bm25 = config.bm25 if config else None
                state.bm25_index = build_index(state.sentences, bm25)
            if state.sentence_vectors is None and state.embedder is not None:
                texts = [s.text for s in state.sentences]
                vectors = state.embedder.embed(texts)
                state.sentence_vectors = {
                    s.sentence_id: vectors[i] for i, s in enumerate(state.sentences)
                }

    def _run_retrieve(job: _Job, body: RetrieveJobIn) -> None:
        job.status = "running"
        try:
            entry = state.motif_entry(body.motif_id)
            if entry is None:
                raise MotifdexError.with_code(
                    "UNKNOWN_REFERENCE", "gateway",
                    f"unknown motif {body.motif_id!r}", motif_id=body.motif_id,
                )
            _ensure_retrieval_state()
            motif_vector = None
            if state.embedder is not None:
                motif_vector = state.embedder.embed([entry.description])[0]
            caps = config.caps if config else None
            candidate_set = retrieve_candidates(
                state.bm25_index,
                body.motif_id,
                entry.description,
                state.sentence_vectors,
                motif_vector,
                lex_k=caps.lexical if caps else 100,
                sem_k=caps.semantic if caps else 100,
                resource=state.resource,
            )
            job.result = {"candidates": candidate_set.to_jsonl_rows()}
            job.status = "done"
        except MotifdexError as exc:
            job.error = exc.report()
            job.status = "error"
        except Exception as exc:  # pragma: no cover - defensive
            job.error = {
                "module": "gateway",
                "code": "INTERNAL",
                "message": str(exc),
                "detail": {},
            }
            job.status = "error"

    @app.post("/api/jobs/classify", status_code=202)
    def submit_classify(body: ClassifyJobIn):
        job = state.new_job("classify")
        state.executor.submit(_run_classify, job, body)
        return {"job_id": job.job_id, "status": job.status}

    @app.post("/api/jobs/retrieve", status_code=202)
    def submit_retrieve(body: RetrieveJobIn):
        job = state.new_job("retrieve")
        state.executor.submit(_run_retrieve, job, body)
        return {"job_id": job.job_id, "status": job.status}

    @app.get("/api/jobs/{job_id}")
    def job_status(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            return _not_found(f"unknown job {job_id!r}", job_id=job_id)
        return job.to_json()

    @app.get("/api/health")
    def health():
        return {"status": "ok", "project_id": config.project_id if config else "motifdex"}

    return app
