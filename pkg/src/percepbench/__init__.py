"""percepbench: psychophysical tests for full-reference quality metrics.

Synthesizes calibrated contrast-detection, masking, flicker and
contrast-matching stimuli, collects metric responses over parameter grids,
and scores how well the responses align with human threshold and matching
data.
"""

__version__ = "0.1.0"

from .errors import (
    AliasingError,
    GamutExceeded,
    HandshakeFailed,
    ImageTooSmall,
    ManifestMismatch,
    NonFiniteInput,
    NoValidSamples,
    OutOfDomain,
    OutOfHull,
    ParseError,
    SeedRequired,
    ShapeMismatch,
)

__all__ = [
    "AliasingError",
    "GamutExceeded",
    "HandshakeFailed",
    "ImageTooSmall",
    "ManifestMismatch",
    "NonFiniteInput",
    "NoValidSamples",
    "OutOfDomain",
    "OutOfHull",
    "ParseError",
    "SeedRequired",
    "ShapeMismatch",
    "__version__",
]
