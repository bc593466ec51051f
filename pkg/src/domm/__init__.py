"""Ordinal emotion sequence modeling.

Fuses per-frame ordinal state posteriors with rank-difference-conditioned
transition probabilities and Viterbi-decodes the most probable ordinal label
sequence, plus the label-conversion and evaluation pipeline around it.
"""

__version__ = "0.1.0"

from domm.core import (
    AnnotationSet,
    AolSequence,
    AolState,
    DataError,
    DatasetManifest,
    RolSequence,
    UtteranceFeatures,
    load_manifest,
    parse_annotations,
    parse_features,
)

__all__ = [
    "__version__",
    "AnnotationSet",
    "AolSequence",
    "AolState",
    "DataError",
    "DatasetManifest",
    "RolSequence",
    "UtteranceFeatures",
    "load_manifest",
    "parse_annotations",
    "parse_features",
]
