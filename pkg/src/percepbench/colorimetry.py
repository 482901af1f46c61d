"""Display model and color conversions: linear light, LMS, DKL directions,
sRGB encoding with 16-bit quantization.

Conventions used throughout the package:

* Linear stimulus planes hold *luminance-scaled linear RGB*: a neutral gray
  of luminance L cd/m^2 is the triple (L, L, L). The CIE Y of a triple is
  0.2126 R + 0.7152 G + 0.0722 B, so the scale is exact for non-gray values
  too (the sRGB/Rec.709 luminance row sums to 1).
* The display white is D65 (sRGB). `peak_luminance` maps (peak, peak, peak)
  to code value 2^bits - 1.
* DKL directions are built from CIE 2006 2-deg cone fundamentals reached
  through CIE 1931 XYZ. The achromatic direction is scaled so that unit
  contrast equals Michelson luminance contrast; the two isoluminant
  directions are scaled so that unit contrast equals the pooled cone
  contrast sqrt((dL/L)^2 + (dM/M)^2 + (dS/S)^2) of the modulation at the
  background. This normalization is a convention of this package (see
  README); the matrices below are the full definition.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GamutExceeded, NonFiniteInput

# IEC 61966-2-1 sRGB primaries, D65 white, CIE 1931 2-deg observer.
SRGB_TO_XYZ = np.array(
    [
        [0.4123907992659595, 0.3575843393838780, 0.1804807884018343],
        [0.2126390058715104, 0.7151686787677559, 0.0721923153607337],
        [0.0193308187155918, 0.1191947797946259, 0.9505321522496608],
    ]
)
XYZ_TO_SRGB = np.linalg.inv(SRGB_TO_XYZ)

# CIE 1931 XYZ -> CIE 2006 2-deg LMS (energy units).
XYZ_TO_LMS = np.array(
    [
        [0.187596268556126, 0.585168649077728, -0.026384263306304],
        [-0.133397430663221, 0.405505777260049, 0.034502127690364],
        [0.000244379021663, -0.000542995890619, 0.019406849066323],
    ]
)
LMS_TO_XYZ = np.linalg.inv(XYZ_TO_LMS)

RGB_TO_LMS = XYZ_TO_LMS @ SRGB_TO_XYZ
LMS_TO_RGB = np.linalg.inv(RGB_TO_LMS)

# D65 white at unit luminance, in LMS.
LMS_WHITE = RGB_TO_LMS @ np.ones(3)
# Luminance as a linear functional on LMS (Y row of LMS->XYZ).
Y_FROM_LMS = LMS_TO_XYZ[1]


def srgb_oetf(linear):
    """sRGB opto-electronic transfer, linear [0,1] -> encoded [0,1]."""
    l = np.clip(np.asarray(linear, dtype=np.float64), 0.0, 1.0)
    return np.where(l <= 0.0031308, 12.92 * l, 1.055 * np.power(l, 1.0 / 2.4) - 0.055)


def srgb_eotf(encoded):
    """Inverse of srgb_oetf, encoded [0,1] -> linear [0,1]."""
    v = np.clip(np.asarray(encoded, dtype=np.float64), 0.0, 1.0)
    return np.where(v <= 0.04045, v / 12.92, np.power((v + 0.055) / 1.055, 2.4))


@dataclass(frozen=True)
class DisplayModel:
    """Modeled display: sRGB transfer, D65 white, given peak luminance."""

    peak_luminance: float = 100.0
    bit_depth: int = 16
    ppd: float = 60.0
    fps: float = 0.0

    def __post_init__(self):
        if not self.peak_luminance > 0:
            raise ValueError("peak_luminance must be > 0")
        if self.bit_depth not in (8, 16):
            raise ValueError("bit_depth must be 8 or 16")
        if not self.ppd > 0:
            raise ValueError("ppd must be > 0")

    @property
    def max_code(self) -> int:
        return (1 << self.bit_depth) - 1

    @property
    def dtype(self):
        return np.uint16 if self.bit_depth == 16 else np.uint8


def _normalize_pooled(delta_lms: np.ndarray) -> np.ndarray:
    # unit pooled cone contrast at a unit-luminance background
    pooled = np.sqrt(np.sum((delta_lms / LMS_WHITE) ** 2))
    return delta_lms / pooled


def _rg_delta_lms() -> np.ndarray:
    # dS = 0 and dY = 0; positive phase increases L (reddish).
    a, b = Y_FROM_LMS[1], -Y_FROM_LMS[0]
    d = np.array([a, b, 0.0])
    if d[0] < 0:
        d = -d
    return _normalize_pooled(d)


def _yv_delta_lms() -> np.ndarray:
    # S-cone modulation with the (small) luminance leak removed along the
    # achromatic direction; positive phase increases S.
    d = np.array([0.0, 0.0, 1.0])
    d = d - (Y_FROM_LMS @ d) / (Y_FROM_LMS @ LMS_WHITE) * LMS_WHITE
    if d[2] < 0:
        d = -d
    return _normalize_pooled(d)


@dataclass(frozen=True)
class ColorDirection:
    """A DKL cardinal direction with precomputed modulation vectors.

    lms_delta / rgb_delta are per unit contrast and per unit background
    luminance: the modulated image is
    L_b * (white + c * pattern(x, y) * rgb_delta)   with white = (1,1,1).
    """

    id: str
    lms_delta: np.ndarray
    rgb_delta: np.ndarray
    is_achromatic: bool

    @property
    def white_point(self) -> np.ndarray:
        return LMS_WHITE.copy()


def _make_directions():
    ach_lms = LMS_WHITE.copy()  # proportional scaling: Michelson by construction
    rg_lms = _rg_delta_lms()
    yv_lms = _yv_delta_lms()
    dirs = {}
    for name, lms, ach in (("Ach", ach_lms, True), ("RG", rg_lms, False), ("YV", yv_lms, False)):
        rgb = LMS_TO_RGB @ lms
        if ach:
            rgb = np.ones(3)  # exact, avoids inverse round-off
        dirs[name] = ColorDirection(id=name, lms_delta=lms, rgb_delta=rgb, is_achromatic=ach)
    return dirs


COLOR_DIRECTIONS = _make_directions()
ACH = COLOR_DIRECTIONS["Ach"]
RG = COLOR_DIRECTIONS["RG"]
YV = COLOR_DIRECTIONS["YV"]


def dkl_modulation(base_luminance, contrast, direction: ColorDirection, phase_value):
    """One sample of a DKL modulation: linear RGB triple (luminance scale).

    phase_value is the instantaneous pattern value in [-1, 1].
    """
    if contrast < 0:
        raise ValueError("contrast must be >= 0")
    return base_luminance * (np.ones(3) + contrast * phase_value * direction.rgb_delta)


def modulation_extrema(base_luminance, contrast, direction: ColorDirection):
    """Channel-wise (min, max) linear RGB over phase in [-1, 1].

    Used for displayability checks before generating a whole field.
    """
    up = dkl_modulation(base_luminance, contrast, direction, +1.0)
    dn = dkl_modulation(base_luminance, contrast, direction, -1.0)
    return np.minimum(up, dn), np.maximum(up, dn)


def max_ingamut_contrast(base_luminance, direction: ColorDirection, dm: DisplayModel) -> float:
    """Largest contrast whose full +/-1 modulation stays inside [0, peak]."""
    d = direction.rgb_delta * base_luminance
    lo_room = base_luminance  # distance to 0 per channel
    hi_room = dm.peak_luminance - base_luminance
    bounds = []
    for ch in range(3):
        if d[ch] != 0:
            bounds.append(lo_room / abs(d[ch]))
            bounds.append(hi_room / abs(d[ch]))
    return float(min(bounds))


def luminance_of(rgb) -> np.ndarray:
    """CIE Y of luminance-scaled linear RGB (same units as the input)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb @ SRGB_TO_XYZ[1]


def linear_to_encoded(img, dm: DisplayModel, strict_gamut: bool = False):
    """Encode luminance-scaled linear RGB to display code values.

    Returns (codes, clamp_count). codes has dtype uint16/uint8 per
    dm.bit_depth; clamp_count is the number of scalar samples that fell
    outside [0, peak_luminance] and were clamped.
    """
    img = np.asarray(img, dtype=np.float64)
    if not np.all(np.isfinite(img)):
        raise NonFiniteInput("linear image contains NaN/Inf")
    v = img / dm.peak_luminance
    clamp_count = int(np.count_nonzero((v < 0.0) | (v > 1.0)))
    if strict_gamut and clamp_count:
        raise GamutExceeded(f"{clamp_count} samples outside [0, peak]")
    enc = srgb_oetf(v)
    return np.round(enc * dm.max_code).astype(dm.dtype), clamp_count


def encoded_to_linear(codes, dm: DisplayModel):
    """Decode display code values back to luminance-scaled linear RGB."""
    v = np.asarray(codes, dtype=np.float64) / dm.max_code
    return srgb_eotf(v) * dm.peak_luminance
