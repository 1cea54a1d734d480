"""Command-line front door for every pipeline stage.

Each subcommand reads the project config, runs one module's operation, and
writes that module's documented export format.  Success exits 0; any domain
failure prints a machine-readable error report (JSON on stderr) and exits 1.
Exports carry no timestamps, so identical config + seeds + mock providers
reproduce byte-identical files.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import uvicorn

from .align import align_pages_embed, align_pages_nw
from .classifiers import (
    CandidatePair,
    Method,
    ThresholdModel,
    Verdict,
    calibrate_threshold,
    generative_classify,
    load_verdicts,
    rerank,
    threshold_classify,
    write_verdicts,
)
from .config import ConfigError, ProjectConfig, load_config
from .corpus import (
    LexicalResource,
    load_edition,
    load_sentences_jsonl,
    segment_edition,
)
from .errors import MotifdexError
from .metrics import (
    MissingLabel,
    check_fixture_rows,
    grid_report,
    load_metric_fixture,
)
from .model import Expression, Label
from .motif_index import load_index
from .providers import (
    EmbeddingClient,
    GenerationClient,
    MockEmbeddingProvider,
    MockGenerator,
    MockPairScorer,
    PairScorerClient,
)
from .retrieval import build_index, cosine, retrieve_candidates
from .service import create_app
from .store import AnnotationStore


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except MotifdexError as exc:
            click.echo(json.dumps(exc.report(), ensure_ascii=False), err=True)
            sys.exit(1)

    return wrapper


def _emit(payload: dict) -> None:
    click.echo(json.dumps(payload, ensure_ascii=False))


@click.group()
@click.option(
    "--config",
    "config_path",
    type=click.Path(),
    default=None,
    help="Project config document (JSON or TOML).",
)
@click.pass_context
def main(ctx, config_path):
    """Motif-indexing toolkit: corpus ingestion, edition alignment, candidate
    retrieval, classification, calibration, annotation batching, evaluation,
    and the annotation REST service."""
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path


def _load_project(ctx) -> ProjectConfig:
    path = ctx.obj.get("config_path")
    if path is None:
        raise ConfigError("this command requires --config")
    return load_config(path)


def _load_resource(config: ProjectConfig) -> LexicalResource | None:
    if config.lexical_resource is None:
        return None
    return LexicalResource.load(config.resolve(config.lexical_resource))


def _require(config: ProjectConfig, attr: str, flag: str) -> Path:
    value = getattr(config, attr)
    if value is None:
        raise ConfigError(f"config is missing {flag!r}", field=flag)
    return config.resolve(value)


def _build_provider(config: ProjectConfig, slot: str, resource):
    """HTTP client for the configured backend; the reserved base_url scheme
    mock:// selects the in-process deterministic provider."""
    provider_config = config.providers.get(slot)
    if provider_config is None:
        return None
    if provider_config.base_url.startswith("mock:"):
        if slot == "embed":
            return MockEmbeddingProvider(resource, provider_id=provider_config.provider_id)
        if slot == "pair_score":
            return MockPairScorer(resource, provider_id=provider_config.provider_id)
        return MockGenerator(resource, provider_id=provider_config.provider_id)
    if slot == "embed":
        return EmbeddingClient(provider_config)
    if slot == "pair_score":
        return PairScorerClient(provider_config)
    return GenerationClient(provider_config)


def _load_edition_by_id(config: ProjectConfig, edition_id: str):
    if edition_id not in config.editions:
        raise ConfigError(
            f"edition {edition_id!r} not in config", edition_id=edition_id
        )
    return load_edition(config.resolve(config.editions[edition_id]))


# -- ingest ------------------------------------------------------------------------


@main.command()
@click.option("--edition", "edition_id", required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_context
@_guard
def ingest(ctx, edition_id, out_path):
    """Ingest an edition manifest and write segmented sentences (JSONL)."""
    config = _load_project(ctx)
    resource = _load_resource(config)
    edition = _load_edition_by_id(config, edition_id)
    sentences = segment_edition(edition, resource)
    with open(out_path, "w", encoding="utf-8") as handle:
        for record in sentences:
            handle.write(
                json.dumps(
                    {
                        "sentence_id": record.sentence_id,
                        "volume_no": record.volume_no,
                        "page_no": record.page_no,
                        "char_start": record.char_start,
                        "char_end": record.char_end,
                        "text": record.text,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    _emit(
        {
            "edition_id": edition.edition_id,
            "volumes": len(edition.volumes),
            "sentences": len(sentences),
            "out": str(out_path),
        }
    )


# -- align -------------------------------------------------------------------------


@main.command()
@click.option("--source", "source_id", required=True)
@click.option("--target", "target_id", required=True)
@click.option("--method", type=click.Choice(["nw", "embed"]), default="nw")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_context
@_guard
def align(ctx, source_id, target_id, method, out_path):
    """Map source-edition pages onto target-edition spans."""
    config = _load_project(ctx)
    resource = _load_resource(config)
    source = _load_edition_by_id(config, source_id)
    target = _load_edition_by_id(config, target_id)
    if method == "nw":
        alignment_map = align_pages_nw(
            source,
            target,
            resource,
            config.scoring,
            window_words=config.window_words,
        )
    else:
        embedder = _build_provider(config, "embed", resource)
        if embedder is None:
            raise ConfigError("align --method embed requires an embed provider")
        alignment_map = align_pages_embed(
            source, target, embedder, window_words=config.window_words,
            resource=resource,
        )
    alignment_map.save(out_path)
    _emit(
        {
            "source": source_id,
            "target": target_id,
            "method": method,
            "pages": len(alignment_map.entries),
            "flagged": alignment_map.flagged,
            "out": str(out_path),
        }
    )


# -- index-load ---------------------------------------------------------------------


@main.command("index-load")
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.pass_context
@_guard
def index_load(ctx, out_path):
    """Validate the motif index; optionally re-export it as JSON."""
    config = _load_project(ctx)
    index = load_index(_require(config, "index_file", "index_file"))
    if out_path:
        rows = [
            {
                "motif_id": str(entry.id),
                "description": entry.description,
                "theme": entry.id.theme,
                "conceptual": entry.conceptual.value,
                "graph_node_count": entry.graph_node_count,
                "page_refs": [str(ref) for ref in entry.page_refs],
            }
            for entry in index
        ]
        Path(out_path).write_text(
            json.dumps(rows, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
    _emit(
        {
            "motifs": len(index),
            "conceptual": index.conceptual_counts(),
            "missing_parents": len(index.missing_parents()),
            "out": str(out_path) if out_path else None,
        }
    )


# -- retrieve -----------------------------------------------------------------------


@main.command()
@click.option("--motif", "motif_id", default=None)
@click.option("--all", "all_motifs", is_flag=True, default=False)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_context
@_guard
def retrieve(ctx, motif_id, all_motifs, out_path):
    """Run lexical + semantic candidate retrieval; write CandidateSet JSONL."""
    if (motif_id is None) == (not all_motifs):
        raise ConfigError("pass exactly one of --motif or --all")
    config = _load_project(ctx)
    resource = _load_resource(config)
    index = load_index(_require(config, "index_file", "index_file"))
    sentences = load_sentences_jsonl(
        _require(config, "sentences_file", "sentences_file"), resource
    )
    bm25 = build_index(sentences, config.bm25)
    embedder = _build_provider(config, "embed", resource)
    sentence_vectors = None
    if embedder is not None:
        vectors = embedder.embed([s.text for s in sentences])
        sentence_vectors = {
            s.sentence_id: vectors[i] for i, s in enumerate(sentences)
        }
    if all_motifs:
        targets = list(index)
    else:
        if motif_id not in index:
            raise ConfigError(f"motif {motif_id!r} not in index", motif_id=motif_id)
        targets = [index[motif_id]]
    rows_written = 0
    with open(out_path, "w", encoding="utf-8") as handle:
        for entry in targets:
            motif_vector = (
                embedder.embed([entry.description])[0] if embedder is not None else None
            )
            candidates = retrieve_candidates(
                bm25,
                str(entry.id),
                entry.description,
                sentence_vectors,
                motif_vector,
                lex_k=config.caps.lexical,
                sem_k=config.caps.semantic,
                resource=resource,
            )
            for row in candidates.to_jsonl_rows():
                handle.write(json.dumps(row, ensure_ascii=False) + "\n")
                rows_written += 1
    _emit({"motifs": len(targets), "rows": rows_written, "out": str(out_path)})


# -- classify -----------------------------------------------------------------------


def _pairs_from_candidates(
    path: Path, index, sentences
) -> list[CandidatePair]:
    by_id = {s.sentence_id: s for s in sentences}
    pairs = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        motif_id, sentence_id = row["motif_id"], row["sentence_id"]
        if motif_id not in index:
            raise ConfigError(f"motif {motif_id!r} not in index", motif_id=motif_id)
        if sentence_id not in by_id:
            raise ConfigError(
                f"sentence {sentence_id!r} not in corpus", sentence_id=sentence_id
            )
        pairs.append(
            CandidatePair(
                motif_id=motif_id,
                sentence_id=sentence_id,
                motif_description=index[motif_id].description,
                sentence_text=by_id[sentence_id].text,
            )
        )
    return pairs


@main.command()
@click.option(
    "--method",
    type=click.Choice(["rerank", "threshold", "zero-shot", "few-shot"]),
    required=True,
)
@click.option("--candidates", "candidates_path", type=click.Path(exists=True), required=True)
@click.option("--provider", "provider_id", default=None,
              help="Threshold-table key for --method threshold.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_context
@_guard
def classify(ctx, method, candidates_path, provider_id, out_path):
    """Classify candidate pairs; write verdicts JSONL."""
    config = _load_project(ctx)
    resource = _load_resource(config)
    index = load_index(_require(config, "index_file", "index_file"))
    sentences = load_sentences_jsonl(
        _require(config, "sentences_file", "sentences_file"), resource
    )
    pairs = _pairs_from_candidates(Path(candidates_path), index, sentences)
    failures: list[dict] = []
    if method == "rerank":
        scorer = _build_provider(config, "pair_score", resource)
        if scorer is None:
            raise ConfigError("classify --method rerank requires a pair_score provider")
        verdicts = rerank(pairs, scorer)
    elif method == "threshold":
        embedder = _build_provider(config, "embed", resource)
        if embedder is None:
            raise ConfigError("classify --method threshold requires an embed provider")
        key = provider_id or getattr(embedder, "provider_id", None)
        model = config.thresholds.get(key)
        if model is None:
            raise ConfigError(f"no threshold for provider {key!r}", provider_id=key)
        texts = [p.motif_description for p in pairs] + [p.sentence_text for p in pairs]
        vectors = embedder.embed(texts) if pairs else []
        verdicts = []
        for i, pair in enumerate(pairs):
            similarity = cosine(vectors[i], vectors[len(pairs) + i])
            verdicts.append(
                Verdict(
                    motif_id=pair.motif_id,
                    sentence_id=pair.sentence_id,
                    label=threshold_classify(similarity, model),
                    method=Method.THRESHOLD,
                    score=similarity,
                )
            )
    else:
        generator = _build_provider(config, "generate", resource)
        if generator is None:
            raise ConfigError(f"classify --method {method} requires a generate provider")
        shots = config.shots if method == "few-shot" else None
        run = generative_classify(pairs, generator, shots)
        verdicts = run.verdicts
        failures = [
            {"motif_id": f.motif_id, "sentence_id": f.sentence_id, "error": f.error}
            for f in run.failures
        ]
    write_verdicts(verdicts, out_path)
    _emit(
        {
            "method": method,
            "pairs": len(pairs),
            "verdicts": len(verdicts),
            "failures": failures,
            "out": str(out_path),
        }
    )


# -- calibrate ----------------------------------------------------------------------


@main.command()
@click.option("--provider", "provider_id", required=True)
@click.option("--labeled", "labeled_path", type=click.Path(exists=True), required=True,
              help="JSONL rows {motif_id, sentence_id, label} or {label, score}.")
@click.pass_context
@_guard
def calibrate(ctx, provider_id, labeled_path):
    """Fit a midpoint threshold from a labeled set; print the operating point."""
    config = _load_project(ctx)
    resource = _load_resource(config)
    rows = [
        json.loads(line)
        for line in Path(labeled_path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    if rows and "score" in rows[0]:
        scored = [(Label(row["label"]), float(row["score"])) for row in rows]
    else:
        index = load_index(_require(config, "index_file", "index_file"))
        sentences = load_sentences_jsonl(
            _require(config, "sentences_file", "sentences_file"), resource
        )
        embedder = _build_provider(config, "embed", resource)
        if embedder is None:
            raise ConfigError("calibrate without pre-scored rows requires an embed provider")
        pairs = _pairs_from_candidates(Path(labeled_path), index, sentences)
        texts = [p.motif_description for p in pairs] + [p.sentence_text for p in pairs]
        vectors = embedder.embed(texts) if pairs else []
        scored = [
            (Label(rows[i]["label"]), cosine(vectors[i], vectors[len(pairs) + i]))
            for i in range(len(pairs))
        ]
    positives = [s for label, s in scored if label is Label.POSITIVE]
    negatives = [s for label, s in scored if label is Label.NEGATIVE]
    threshold = calibrate_threshold(positives, negatives)
    model = ThresholdModel(provider_id, threshold)
    _emit(
        {
            "provider_id": model.provider_id,
            "threshold": model.threshold,
            "provenance": model.provenance,
            "positives": len(positives),
            "negatives": len(negatives),
        }
    )


# -- batch --------------------------------------------------------------------------


@main.command()
@click.option("--annotator", required=True)
@click.option("--size", type=int, default=None)
@click.pass_context
@_guard
def batch(ctx, annotator, size):
    """Draw the next annotation batch for an annotator; print it as JSON."""
    config = _load_project(ctx)
    store = AnnotationStore(_require(config, "store_log", "store_log"))
    drawn = store.next_batch(
        annotator, size or config.batch_size, config.double_rate
    )
    _emit(
        {
            "batch_id": drawn.batch_id,
            "annotator_id": drawn.annotator_id,
            "pairs": [{"motif_id": m, "sentence_id": s} for m, s in drawn.pairs],
            "double_subset": [
                {"motif_id": m, "sentence_id": s} for m, s in drawn.double_subset
            ],
        }
    )


# -- eval ---------------------------------------------------------------------------


def _load_gold_rows(path: Path) -> list[dict]:
    return [
        json.loads(line)
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]


@main.command("eval")
@click.option("--fixture", "fixture_path", type=click.Path(exists=True), default=None,
              help="Published-table fixture CSV to sanity-check.")
@click.option("--verdicts", "verdicts_path", type=click.Path(exists=True), default=None)
@click.option("--gold", "gold_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.pass_context
@_guard
def eval_cmd(ctx, fixture_path, verdicts_path, gold_path, out_path):
    """Evaluate verdicts against gold as a complexity grid, or sanity-check a
    published-table fixture."""
    if fixture_path:
        rows = load_metric_fixture(fixture_path)
        consistent, excluded = check_fixture_rows(rows)
        _emit(
            {
                "fixture": str(fixture_path),
                "rows": len(rows),
                "consistent": len(consistent),
                "excluded": [
                    {
                        "method": row.method,
                        "conceptual": row.conceptual,
                        "expression": row.expression,
                    }
                    for row in excluded
                ],
            }
        )
        return
    if not verdicts_path or not gold_path:
        raise ConfigError("eval requires either --fixture or both --verdicts and --gold")
    verdicts = load_verdicts(verdicts_path)
    if not verdicts:
        raise MissingLabel("verdict file is empty", path=str(verdicts_path))
    config = _load_project(ctx)
    index = load_index(_require(config, "index_file", "index_file"))
    gold_rows = _load_gold_rows(Path(gold_path))
    gold = {
        (row["motif_id"], row["sentence_id"]): Label(row["label"])
        for row in gold_rows
    }
    # Pair-level expression; negatives (no expression of their own) inherit the
    # motif-level bucket: complex if any of the motif's gold positives is complex.
    motif_bucket: dict[str, str] = {}
    for row in gold_rows:
        bucket = motif_bucket.setdefault(row["motif_id"], Expression.SIMPLE.value)
        if row["label"] == Label.POSITIVE.value and row.get("expression") == Expression.COMPLEX.value:
            if bucket != Expression.COMPLEX.value:
                motif_bucket[row["motif_id"]] = Expression.COMPLEX.value
    expression_labels = {
        (row["motif_id"], row["sentence_id"]): row.get("expression")
        or motif_bucket[row["motif_id"]]
        for row in gold_rows
    }
    conceptual_labels = {str(e.id): e.conceptual.value for e in index}
    method_id = verdicts[0].method.value
    report = grid_report(
        verdicts,
        gold,
        expression_labels,
        conceptual_labels,
        method_id=method_id,
        metadata={
            "bm25": {"k1": config.bm25.k1, "b": config.bm25.b},
            "seeds": config.seeds,
            "thresholds": {
                pid: model.threshold for pid, model in sorted(config.thresholds.items())
            },
        },
    )
    if out_path:
        Path(out_path).write_text(
            json.dumps(report.to_json(), ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )
    click.echo(report.render_text())


# -- serve --------------------------------------------------------------------------


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
@click.pass_context
@_guard
def serve(ctx, host, port):
    """Run the annotation REST service."""
    config = _load_project(ctx)
    resource = _load_resource(config)
    index = (
        load_index(config.resolve(config.index_file)) if config.index_file else None
    )
    sentences = (
        load_sentences_jsonl(config.resolve(config.sentences_file), resource)
        if config.sentences_file
        else []
    )
    store = AnnotationStore(
        config.resolve(config.store_log) if config.store_log else None,
        known_motifs={str(e.id) for e in index} if index else None,
        known_sentences={s.sentence_id for s in sentences} if sentences else None,
    )
    if config.queue_seed:
        seed_rows = _load_gold_rows(config.resolve(config.queue_seed))
        store.enqueue_candidates(
            (row["motif_id"], row["sentence_id"]) for row in seed_rows
        )
    app = create_app(
        store,
        motif_index=index,
        sentences=sentences,
        resource=resource,
        config=config,
        embedder=_build_provider(config, "embed", resource),
        scorer=_build_provider(config, "pair_score", resource),
        generator=_build_provider(config, "generate", resource),
    )
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
