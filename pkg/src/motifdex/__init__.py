"""Motif-indexing toolkit: edition alignment, candidate retrieval,
classification backends, annotation workflow, and evaluation grids."""

from .errors import MotifdexError
from .model import Conceptual, Expression, Label, LabeledPair, pair_key

__version__ = "0.1.0"

__all__ = [
    "Conceptual",
    "Expression",
    "Label",
    "LabeledPair",
    "MotifdexError",
    "pair_key",
    "__version__",
]
