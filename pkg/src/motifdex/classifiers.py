"""Sentence-motif classification: pair-scorer reranking, embedding-threshold
classification with midpoint calibration, and prompt-based generative
classification with deterministic decoding.

Prompt templates are frozen strings; the golden files under the test
fixtures are normative and the builders must reproduce them byte for byte.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import MotifdexError
from .model import Label
from .providers import (
    GENERATION_DECODING,
    GenerationProvider,
    PairScorerProvider,
    ProviderError,
)


class ClassifierError(MotifdexError):
    module = "classifiers"


class EmptyCalibrationSet(ClassifierError):
    code = "EMPTY_CALIBRATION_SET"


class EmptyShots(ClassifierError):
    code = "EMPTY_SHOTS"


class UnparseableVerdict(ClassifierError):
    code = "UNPARSEABLE_VERDICT"


class Method(str, enum.Enum):
    RERANK = "rerank"
    THRESHOLD = "threshold"
    GENERATIVE = "generative"


@dataclass(frozen=True)
class Verdict:
    motif_id: str
    sentence_id: str
    label: Label
    method: Method
    score: float | None = None
    raw: str | None = None


@dataclass(frozen=True)
class CandidatePair:
    """A (motif, sentence) pair carrying both ids and both texts, so any
    classifier family can work from the same input."""

    motif_id: str
    sentence_id: str
    motif_description: str
    sentence_text: str


def rerank(
    pairs: Sequence[CandidatePair],
    scorer: PairScorerProvider,
    batch_size: int = 32,
) -> list[Verdict]:
    """One verdict per pair, order preserved.  A provider failure aborts the
    whole run (annotated with the failing batch index); partial results are
    never returned silently."""
    verdicts: list[Verdict] = []
    for batch_index, start in enumerate(range(0, len(pairs), batch_size)):
        chunk = pairs[start : start + batch_size]
        try:
            batch = scorer.score([(p.motif_description, p.sentence_text) for p in chunk])
        except ProviderError as exc:
            exc.detail["batch_index"] = batch_index
            raise
        for offset, pair in enumerate(chunk):
            verdicts.append(
                Verdict(
                    motif_id=pair.motif_id,
                    sentence_id=pair.sentence_id,
                    label=Label.POSITIVE if batch.labels[offset] else Label.NEGATIVE,
                    method=Method.RERANK,
                    score=batch.scores[offset] if batch.scores is not None else None,
                )
            )
    return verdicts


@dataclass(frozen=True)
class ThresholdModel:
    provider_id: str
    threshold: float
    provenance: str = "locally-calibrated"

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise ValueError("threshold must be finite")


#: Operating points published with the original study, shipped as defaults.
#: Calibrating locally replaces these with "locally-calibrated" models.
PAPER_THRESHOLDS: dict[str, ThresholdModel] = {
    model.provider_id: model
    for model in (
        ThresholdModel("mistral-embed", 0.73, "paper-published"),
        ThresholdModel("text-embedding-004", 0.46, "paper-published"),
        ThresholdModel("nv-embed-v2", 0.25, "paper-published"),
        ThresholdModel("jina-embeddings-v3", 0.32, "paper-published"),
        ThresholdModel("sentence-t5-base", 0.77, "paper-published"),
        ThresholdModel("sbert-ft", 0.32, "paper-published"),
        ThresholdModel("sentence-t5-base-ft", 0.45, "paper-published"),
    )
}


def calibrate_threshold(
    pos_sims: Sequence[float], neg_sims: Sequence[float]
) -> float:
    """Midpoint between the mean positive and mean negative similarity,
    pooled across all motifs."""
    if not pos_sims:
        raise EmptyCalibrationSet("no positive similarities to calibrate on",
                                  side="positive")
    if not neg_sims:
        raise EmptyCalibrationSet("no negative similarities to calibrate on",
                                  side="negative")
    return (sum(pos_sims) / len(pos_sims) + sum(neg_sims) / len(neg_sims)) / 2.0


def threshold_classify(similarity: float, model: ThresholdModel) -> Label:
    """POSITIVE iff similarity >= threshold (boundary inclusive)."""
    return Label.POSITIVE if similarity >= model.threshold else Label.NEGATIVE


# -- prompting ---------------------------------------------------------------

SYSTEM_PROMPT = (
    "You are a strict classifier. You must answer with ONLY one token: Yes or No."
)

_TASK_BLOCK = (
    "Task: Decide if the motif is present in the sentence.\n"
    'Rules: Answer ONLY "Yes" or "No".\n'
    "Do not explain."
)


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str
    decoding: dict = field(default_factory=lambda: dict(GENERATION_DECODING))

    def __post_init__(self):
        if self.decoding != GENERATION_DECODING:
            raise ValueError(
                f"decoding must be exactly {GENERATION_DECODING}, got {self.decoding}"
            )


@dataclass(frozen=True)
class FewShotExample:
    motif_description: str
    positive_sentence: str
    negative_sentence: str

    def __post_init__(self):
        if self.positive_sentence == self.negative_sentence:
            raise ValueError("positive and negative sentences must differ")


def build_zero_shot_prompt(motif_description: str, sentence_text: str) -> PromptBundle:
    """Single-pass literal substitution into the zero-shot template."""
    user = f"{_TASK_BLOCK}\nMotif: {motif_description}\nSentence: {sentence_text}"
    return PromptBundle(system=SYSTEM_PROMPT, user=user)


def build_few_shot_prompt(
    shots: Sequence[FewShotExample], motif_description: str, sentence_text: str
) -> PromptBundle:
    """Examples header, then a Yes block and a No block per shot in order,
    then the task header and the query pair ending with ``Answer:``."""
    if not shots:
        raise EmptyShots("few-shot prompting requires at least one shot")
    blocks = []
    for shot in shots:
        blocks.append(
            f"Motif: {shot.motif_description}\n"
            f"Sentence: {shot.positive_sentence}\n"
            "Answer: Yes"
        )
        blocks.append(
            f"Motif: {shot.motif_description}\n"
            f"Sentence: {shot.negative_sentence}\n"
            "Answer: No"
        )
    user = (
        "Examples:\n"
        + "\n\n".join(blocks)
        + f"\n\n{_TASK_BLOCK}\nMotif: {motif_description}\nSentence: {sentence_text}\nAnswer:"
    )
    return PromptBundle(system=SYSTEM_PROMPT, user=user)


#: The study's published few-shot configuration: four motif triplets, one
#: per complexity class, each pairing a positive with a random negative.
PAPER_SHOTS: tuple[FewShotExample, ...] = (
    FewShotExample(
        "Mermaid",
        "While he was doing this the sea became disturbed and out from it came "
        "mermaids the sea’s daughters each carrying in her hand a jewel "
        "gleaming like a lamp.",
        "She can look as she stands and she will not be long.",
    ),
    FewShotExample(
        "Barber as know-all expert",
        "The attendant then started to shave Dau’ alMakan’s head after "
        "which he and the furnace man bathed.",
        "He is the expert in the field they said a very wealthy man and a "
        "skilled craftsman.",
    ),
    FewShotExample(
        "Blind promise of immunity from punishment. Person of authority (king, "
        "queen, father, etc.) grants request for safety for culprit before "
        "learning nature of offense",
        "My brother said ‘I want a guarantee of immunity’ at which the "
        "wali gave him the kerchief that was a sign of this.",
        "I am the shaikh of a monastery and under my control and authority are "
        "forty dervishes.",
    ),
    FewShotExample(
        "Adam created from clay (mud), mud foam (zabad), foam from sea, sea "
        "from darkness, darkness from bull, bull from whale, whale from rock, "
        "rock from ruby (gem), ruby from water, water from [God's] Omnipotence "
        "(al-Qudrah)",
        "The darkness itself was created from light, which was created from a "
        "fish, with the fish being created from a rock, the rock from a ruby, "
        "the ruby from water and the water from the power of God, as He said, "
        "Almighty is He: ‘When He wishes for something, He commands 'Be' "
        "and it is.",
        "These are water earth light darkness and fruits’ she answered.",
    ),
)


def parse_verdict(raw: str) -> Label:
    """Case-insensitive trim: yes -> POSITIVE, no -> NEGATIVE; anything else
    is UNPARSEABLE_VERDICT (never coerced to a label)."""
    cleaned = raw.strip().lower()
    if cleaned == "yes":
        return Label.POSITIVE
    if cleaned == "no":
        return Label.NEGATIVE
    raise UnparseableVerdict(f"cannot parse verdict {raw!r}", raw=raw)


@dataclass(frozen=True)
class ClassifyFailure:
    motif_id: str
    sentence_id: str
    error: dict


@dataclass
class GenerativeRun:
    verdicts: list[Verdict]
    failures: list[ClassifyFailure]


def generative_classify(
    pairs: Sequence[CandidatePair],
    generator: GenerationProvider,
    shots: Sequence[FewShotExample] | None = None,
) -> GenerativeRun:
    """Zero-shot when ``shots`` is None, few-shot otherwise.  Per-pair
    provider and parse failures are collected and the run continues."""
    verdicts: list[Verdict] = []
    failures: list[ClassifyFailure] = []
    for pair in pairs:
        if shots is None:
            bundle = build_zero_shot_prompt(pair.motif_description, pair.sentence_text)
        else:
            bundle = build_few_shot_prompt(shots, pair.motif_description, pair.sentence_text)
        try:
            raw = generator.generate(bundle.user, bundle.system)
            label = parse_verdict(raw)
        except (ProviderError, UnparseableVerdict) as exc:
            failures.append(ClassifyFailure(pair.motif_id, pair.sentence_id, exc.report()))
            continue
        verdicts.append(
            Verdict(
                motif_id=pair.motif_id,
                sentence_id=pair.sentence_id,
                label=label,
                method=Method.GENERATIVE,
                raw=raw,
            )
        )
    return GenerativeRun(verdicts=verdicts, failures=failures)


# -- verdict persistence -------------------------------------------------------

def write_verdicts(verdicts: Iterable[Verdict], path: str | Path) -> int:
    rows = 0
    with open(path, "w", encoding="utf-8") as handle:
        for v in verdicts:
            handle.write(
                json.dumps(
                    {
                        "motif_id": v.motif_id,
                        "sentence_id": v.sentence_id,
                        "method": v.method.value,
                        "label": v.label.value,
                        "score": v.score,
                        "raw": v.raw,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
            rows += 1
    return rows


def load_verdicts(path: str | Path) -> list[Verdict]:
    verdicts = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        verdicts.append(
            Verdict(
                motif_id=row["motif_id"],
                sentence_id=row["sentence_id"],
                label=Label(row["label"]),
                method=Method(row["method"]),
                score=row.get("score"),
                raw=row.get("raw"),
            )
        )
    return verdicts
