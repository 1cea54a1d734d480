"""Cross-cutting vocabulary shared by classifiers, metrics and the store."""

from __future__ import annotations

import enum
from dataclasses import dataclass


class Label(str, enum.Enum):
    """Binary presence judgement for a (motif, sentence) pair."""

    POSITIVE = "positive"
    NEGATIVE = "negative"


class Expression(str, enum.Enum):
    """How a motif surfaces in text.

    SIMPLE: carried by a single sentence in isolation.
    COMPLEX: requires narrative context beyond the sentence.
    """

    SIMPLE = "simple"
    COMPLEX = "complex"


class Conceptual(str, enum.Enum):
    """Conceptual complexity of a motif.

    COMPLEX when the motif's idea needs a semantic graph of more than two
    nodes to state; SIMPLE otherwise.
    """

    SIMPLE = "simple"
    COMPLEX = "complex"


@dataclass(frozen=True)
class LabeledPair:
    """A gold-labeled (motif, sentence) pair as consumed by metrics code."""

    motif_id: str
    sentence_id: str
    label: Label


def pair_key(motif_id: str, sentence_id: str) -> str:
    return f"{motif_id}|{sentence_id}"
