"""Project configuration: one JSON or TOML document driving CLI and service.

The file bundles corpus/index/lexicon paths, alignment and BM25 parameters,
retrieval caps, the threshold table (seeded with the published operating
points), the few-shot example set, seeds, and provider endpoints.  Base URLs
and the bearer token can be overridden from the environment.
"""

from __future__ import annotations

import json
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .align import ScoringScheme
from .classifiers import PAPER_SHOTS, PAPER_THRESHOLDS, FewShotExample, ThresholdModel
from .errors import MotifdexError
from .providers import ProviderConfig
from .retrieval import Bm25Params

ENV_PREFIX = "MOTIFDEX"
_ENV_URL_KEYS = {
    "embed": f"{ENV_PREFIX}_EMBED_BASE_URL",
    "pair_score": f"{ENV_PREFIX}_SCORE_BASE_URL",
    "generate": f"{ENV_PREFIX}_GENERATE_BASE_URL",
}
_ENV_TOKEN_KEY = f"{ENV_PREFIX}_BEARER_TOKEN"


class ConfigError(MotifdexError):
    code = "BAD_CONFIG"
    module = "gateway"


@dataclass(frozen=True)
class RetrievalCaps:
    lexical: int = 100
    semantic: int = 100

    def __post_init__(self):
        if self.lexical < 1 or self.semantic < 1:
            raise ConfigError(
                "retrieval caps must be >= 1",
                lexical=self.lexical, semantic=self.semantic,
            )


@dataclass
class ProjectConfig:
    project_id: str = "motifdex"
    #: edition_id -> ingest manifest path
    editions: dict[str, str] = field(default_factory=dict)
    index_file: str | None = None
    lexical_resource: str | None = None
    #: pre-segmented corpus (JSONL of SentenceRecord rows)
    sentences_file: str | None = None
    store_log: str | None = None
    #: candidate pairs (JSONL with motif_id/sentence_id) enqueued at serve start
    queue_seed: str | None = None
    scoring: ScoringScheme = field(default_factory=ScoringScheme)
    bm25: Bm25Params = field(default_factory=Bm25Params)
    caps: RetrievalCaps = field(default_factory=RetrievalCaps)
    window_words: int = 100
    thresholds: dict[str, ThresholdModel] = field(
        default_factory=lambda: dict(PAPER_THRESHOLDS)
    )
    shots: tuple[FewShotExample, ...] = PAPER_SHOTS
    seeds: dict[str, int] = field(default_factory=lambda: {"resample": 13, "split": 13})
    double_rate: float = 0.5
    batch_size: int = 1500
    providers: dict[str, ProviderConfig] = field(default_factory=dict)
    bearer_token: str | None = None
    base_dir: Path = field(default_factory=Path)

    def resolve(self, path: str | None) -> Path | None:
        if path is None:
            return None
        candidate = Path(path)
        return candidate if candidate.is_absolute() else self.base_dir / candidate


def _require_exists(config: ProjectConfig, label: str, path: str | None) -> None:
    resolved = config.resolve(path)
    if resolved is not None and not resolved.exists():
        raise ConfigError(f"{label} file not found: {resolved}", path=str(resolved))


def _parse_document(path: Path) -> dict:
    raw = path.read_bytes()
    if path.suffix.lower() == ".toml":
        return tomllib.loads(raw.decode("utf-8"))
    if path.suffix.lower() == ".json":
        return json.loads(raw.decode("utf-8"))
    # No recognizable suffix: try JSON first, then TOML.
    try:
        return json.loads(raw.decode("utf-8"))
    except json.JSONDecodeError:
        try:
            return tomllib.loads(raw.decode("utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(
                f"config is neither valid JSON nor TOML: {path}", path=str(path)
            ) from exc


def _load_thresholds(raw: Mapping[str, Any]) -> dict[str, ThresholdModel]:
    thresholds = dict(PAPER_THRESHOLDS)
    for provider_id, value in raw.items():
        if isinstance(value, Mapping):
            thresholds[provider_id] = ThresholdModel(
                provider_id=provider_id,
                threshold=float(value["threshold"]),
                provenance=str(value.get("provenance", "locally-calibrated")),
            )
        else:
            thresholds[provider_id] = ThresholdModel(
                provider_id=provider_id,
                threshold=float(value),
                provenance="locally-calibrated",
            )
    return thresholds


def _load_shots(path: Path) -> tuple[FewShotExample, ...]:
    rows = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(rows, list):
        raise ConfigError(f"shot set must be a JSON array: {path}", path=str(path))
    return tuple(
        FewShotExample(
            motif_description=row["motif_description"],
            positive_sentence=row["positive_sentence"],
            negative_sentence=row["negative_sentence"],
        )
        for row in rows
    )


_PROVIDER_KINDS = {"embed": "EMBED", "pair_score": "PAIR_SCORE", "generate": "GENERATE"}


def _load_providers(raw: Mapping[str, Any]) -> dict[str, ProviderConfig]:
    providers = {}
    for slot, entry in raw.items():
        if slot not in _PROVIDER_KINDS:
            raise ConfigError(
                f"unknown provider slot {slot!r} (expected one of {sorted(_PROVIDER_KINDS)})",
                slot=slot,
            )
        providers[slot] = ProviderConfig(
            kind=_PROVIDER_KINDS[slot],
            provider_id=str(entry["provider_id"]),
            base_url=str(entry["base_url"]),
            timeout_ms=int(entry.get("timeout_ms", 30_000)),
            max_in_flight=int(entry.get("max_in_flight", 8)),
            retries=int(entry.get("retries", 2)),
        )
    return providers


def _apply_env(config: ProjectConfig, environ: Mapping[str, str]) -> None:
    for slot, key in _ENV_URL_KEYS.items():
        url = environ.get(key)
        if url and slot in config.providers:
            current = config.providers[slot]
            config.providers[slot] = ProviderConfig(
                kind=current.kind,
                provider_id=current.provider_id,
                base_url=url,
                timeout_ms=current.timeout_ms,
                max_in_flight=current.max_in_flight,
                retries=current.retries,
            )
    token = environ.get(_ENV_TOKEN_KEY)
    if token:
        config.bearer_token = token


def load_config(
    path: str | Path, environ: Mapping[str, str] | None = None
) -> ProjectConfig:
    """Parse and validate a project config document.

    Every referenced data file must exist (the store log and export targets
    are exempt — they are created on demand).
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}", path=str(path))
    doc = _parse_document(path)
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a table/object", path=str(path))

    base_dir = path.parent
    scoring_doc = doc.get("scoring", {})
    bm25_doc = doc.get("bm25", {})
    caps_doc = doc.get("caps", {})
    try:
        config = ProjectConfig(
            project_id=str(doc.get("project_id", "motifdex")),
            editions={str(k): str(v) for k, v in doc.get("editions", {}).items()},
            index_file=doc.get("index_file"),
            lexical_resource=doc.get("lexical_resource"),
            sentences_file=doc.get("sentences_file"),
            store_log=doc.get("store_log"),
            queue_seed=doc.get("queue_seed"),
            scoring=ScoringScheme(
                match_score=float(scoring_doc.get("match", 1.0)),
                partial_score=float(scoring_doc.get("partial", 0.8)),
                mismatch_score=float(scoring_doc.get("mismatch", 0.0)),
                gap_penalty=float(scoring_doc.get("gap", -0.5)),
            ),
            bm25=Bm25Params(
                k1=float(bm25_doc.get("k1", 1.5)), b=float(bm25_doc.get("b", 0.75))
            ),
            caps=RetrievalCaps(
                lexical=int(caps_doc.get("lexical", 100)),
                semantic=int(caps_doc.get("semantic", 100)),
            ),
            window_words=int(doc.get("window_words", 100)),
            thresholds=_load_thresholds(doc.get("thresholds", {})),
            seeds={
                "resample": 13,
                "split": 13,
                **{str(k): int(v) for k, v in doc.get("seeds", {}).items()},
            },
            double_rate=float(doc.get("double_rate", 0.5)),
            batch_size=int(doc.get("batch_size", 1500)),
            providers=_load_providers(doc.get("providers", {})),
            bearer_token=doc.get("bearer_token"),
            base_dir=base_dir,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}", path=str(path)) from exc

    if config.window_words < 1:
        raise ConfigError("window_words must be >= 1", window_words=config.window_words)
    if not 0.0 <= config.double_rate <= 1.0:
        raise ConfigError("double_rate must be in [0,1]", double_rate=config.double_rate)
    if config.batch_size < 1:
        raise ConfigError("batch_size must be >= 1", batch_size=config.batch_size)

    shots_file = doc.get("shots_file")
    if shots_file:
        _require_exists(config, "shot set", shots_file)
        config.shots = _load_shots(config.resolve(shots_file))

    for edition_id, manifest in config.editions.items():
        _require_exists(config, f"edition {edition_id!r} manifest", manifest)
    _require_exists(config, "motif index", config.index_file)
    _require_exists(config, "lexical resource", config.lexical_resource)
    _require_exists(config, "sentence corpus", config.sentences_file)
    _require_exists(config, "queue seed", config.queue_seed)

    _apply_env(config, os.environ if environ is None else environ)
    return config
