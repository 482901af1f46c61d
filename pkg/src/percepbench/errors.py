"""Shared exception types."""


class PercepBenchError(Exception):
    """Base class for all library errors."""


class NonFiniteInput(PercepBenchError):
    """Input contains NaN or Inf samples."""


class GamutExceeded(PercepBenchError):
    """A modulation leaves the display gamut.

    Raised only when a caller asks for strict gamut checking; the encoding
    path clamps and counts instead.
    """


class AliasingError(PercepBenchError):
    """Spatial frequency above ppd/2 or temporal frequency >= fps/2."""


class SeedRequired(PercepBenchError):
    """A noise stimulus was requested without a seed."""


class ShapeMismatch(PercepBenchError):
    """Test and reference dimensions differ."""


class ImageTooSmall(PercepBenchError):
    """Image smaller than the analysis window at some scale."""


class OutOfDomain(PercepBenchError):
    """Query outside a reference curve's tabulated domain."""


class OutOfHull(PercepBenchError):
    """Interpolation query outside the sampled grid hull."""


class NoValidSamples(PercepBenchError):
    """No (axis value, multiplier) samples survived range filtering."""


class ParseError(PercepBenchError):
    """Malformed reference pack or config file."""

    def __init__(self, msg, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f" [{path}" + (f":{line}" if line is not None else "") + "]"
        super().__init__(f"{msg}{loc}")
        self.path = path
        self.line = line


class HandshakeFailed(PercepBenchError):
    """Adapter subprocess did not produce a valid hello message."""


class NonNumericScore(PercepBenchError):
    """Adapter returned a score that is not a finite number."""


class ManifestMismatch(PercepBenchError):
    """Stage inputs changed underneath an existing output manifest."""


class EmptySurface(PercepBenchError):
    """Contour extraction asked for on a surface with < 2x2 valid cells."""


class NoOverlap(PercepBenchError):
    """Matching RMSE requested but prediction and ground truth never overlap."""


class DegenerateRange(PercepBenchError):
    """Color-matching RMSE undefined because max == min response."""


class ConfigError(PercepBenchError):
    """Invalid or unknown configuration keys/values."""
