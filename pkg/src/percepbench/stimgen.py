"""Stimulus synthesis: Gabor patches, masked Gabors, band-limited noise,
flickering disks and full-field matching gratings, plus the registry of the
eleven benchmark tests with their parameter ranges.

All generators are pure functions of a StimulusSpec and return
LinearStimulus values (luminance-scaled linear RGB, see colorimetry).
Coordinate conventions:

* Detection Gabors and matching gratings use centered coordinates,
  x in [-W/2, W/2], y in [-H/2, H/2] (implemented as pixel index minus
  (N-1)/2, so the grid is symmetric under (x,y) -> (-x,-y)).
* The phase-coherent masking stimulus uses corner-origin coordinates
  (x = column index, y = row index) for both the cosine masker and the
  cosine Gabor carrier so their phases lock; the Gabor envelope stays
  centered on the image.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import prng
from .colorimetry import COLOR_DIRECTIONS, ColorDirection
from .errors import AliasingError, SeedRequired

# ---------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class StimulusSpec:
    """Full description of one (test, reference) stimulus pair."""

    test_id: str
    contrast: float
    luminance: float
    ppd: float
    width: int
    height: int
    spatial_freq: float = 0.0
    mask_contrast: float = 0.0
    mask_freq: float = 0.0
    radius: float = 0.0
    temporal_freq: float = 0.0
    direction: str = "Ach"
    fps: float = 0.0
    duration: float = 0.0
    seed: Optional[int] = None

    @property
    def n_frames(self) -> int:
        if self.fps <= 0 or self.duration <= 0:
            return 1
        return max(1, int(round(self.fps * self.duration)))

    @property
    def color_direction(self) -> ColorDirection:
        return COLOR_DIRECTIONS[self.direction]

    def validate(self):
        if self.spatial_freq > self.ppd / 2:
            raise AliasingError(
                f"spatial_freq {self.spatial_freq} above Nyquist {self.ppd / 2}"
            )
        if self.fps > 0 and self.temporal_freq >= self.fps / 2:
            raise AliasingError(
                f"temporal_freq {self.temporal_freq} at/above Nyquist {self.fps / 2}"
            )
        t = TESTS[self.test_id]
        t.check_ranges(self)

    def to_json(self) -> dict:
        d = asdict(self)
        return d

    @staticmethod
    def from_json(d: dict) -> "StimulusSpec":
        return StimulusSpec(**d)


@dataclass(frozen=True)
class LinearStimulus:
    """planes: (frames, H, W, 3) float64, luminance-scaled linear RGB."""

    planes: np.ndarray
    ppd: float
    fps: float
    provenance: StimulusSpec

    @property
    def n_frames(self) -> int:
        return self.planes.shape[0]


# ---------------------------------------------------------------------------
# pattern primitives


def centered_axes(width: int, height: int):
    x = np.arange(width, dtype=np.float64) - (width - 1) / 2.0
    y = np.arange(height, dtype=np.float64) - (height - 1) / 2.0
    return x[None, :], y[:, None]


def gabor_pattern(width, height, ppd, rho, radius, carrier="sin"):
    """Gaussian-windowed grating in [-1, 1], centered coordinates."""
    x, y = centered_axes(width, height)
    env = np.exp(-(x * x + y * y) / (2.0 * ppd * ppd * radius * radius))
    if carrier == "sin":
        car = np.sin(2.0 * np.pi * rho * x / ppd)
    else:
        car = np.cos(2.0 * np.pi * rho * x / ppd)
    return car * env


def grating_pattern(width, height, ppd, rho, orientation="vertical"):
    """Full-field sine grating; vertical = variation along x.

    Normalized so the sampled extrema are exactly +-1: half-integer centering
    makes the samples antisymmetric, so dividing by the sampled peak keeps the
    mean at zero and makes the Michelson contrast of the modulated image equal
    the requested contrast exactly, at any frequency/pitch combination.
    """
    x, y = centered_axes(width, height)
    wave = np.sin(2.0 * np.pi * rho * (x if orientation == "vertical" else y) / ppd)
    peak = np.abs(wave).max()
    if peak > 0:
        wave = wave / peak
    return np.broadcast_to(wave, (height, width)).copy()


def disk_pattern(width, height, ppd, radius):
    """Binary disk membership, centered coordinates."""
    x, y = centered_axes(width, height)
    return ((x * x + y * y) / (ppd * ppd) <= radius * radius).astype(np.float64)


def gen_noise_field(width, height, ppd, cutoff_cpd=12.0, seed=None):
    """Band-limited Gaussian noise, all radial frequencies >= cutoff zeroed,
    standardized to zero mean and unit variance."""
    if seed is None:
        raise SeedRequired("noise field needs an explicit seed")
    white = prng.gaussian_field(width, height, seed)
    fx = np.fft.fftfreq(width) * ppd
    fy = np.fft.fftfreq(height) * ppd
    rad = np.hypot(fx[None, :], fy[:, None])
    spec = np.fft.fft2(white)
    spec[rad >= cutoff_cpd] = 0.0
    noise = np.real(np.fft.ifft2(spec))
    noise -= noise.mean()
    std = noise.std()
    if std == 0:
        raise ValueError("degenerate noise field (zero variance)")
    return noise / std


def _modulated(L_b, contrast, direction: ColorDirection, pattern):
    """L_b * (1 + c * pattern * rgb_delta) as (H, W, 3)."""
    out = np.empty(pattern.shape + (3,), dtype=np.float64)
    for ch in range(3):
        out[..., ch] = L_b * (1.0 + contrast * direction.rgb_delta[ch] * pattern)
    return out


def _uniform_field(L_b, width, height):
    return np.full((height, width, 3), float(L_b), dtype=np.float64)


# ---------------------------------------------------------------------------
# stimulus pair generators


def gen_gabor_pair(spec: StimulusSpec):
    """Detection stimulus: Gabor on a uniform field (still or transient)."""
    spec.validate()
    d = spec.color_direction
    pat = gabor_pattern(spec.width, spec.height, spec.ppd, spec.spatial_freq, spec.radius)
    ref_frame = _uniform_field(spec.luminance, spec.width, spec.height)
    n = spec.n_frames
    if spec.temporal_freq > 0 and n > 1:
        frames = np.empty((n, spec.height, spec.width, 3))
        for k in range(n):
            t = k / spec.fps
            amp = spec.contrast * math.cos(2.0 * np.pi * spec.temporal_freq * t)
            frames[k] = _modulated(spec.luminance, amp, d, pat)
        test_planes = frames
        ref_planes = np.broadcast_to(ref_frame, (n,) + ref_frame.shape).copy()
    else:
        test_planes = _modulated(spec.luminance, spec.contrast, d, pat)[None]
        ref_planes = ref_frame[None]
    mk = lambda p, s: LinearStimulus(p, spec.ppd, spec.fps, s)
    return mk(test_planes, spec), mk(ref_planes, replace(spec, contrast=0.0))


def gen_masking_pair(spec: StimulusSpec):
    """Masking stimulus: Gabor over a grating or noise masker."""
    spec.validate()
    d = spec.color_direction
    if spec.test_id == "mask_incoherent":
        noise = gen_noise_field(spec.width, spec.height, spec.ppd, 12.0, spec.seed)
        masker = spec.mask_contrast * noise
        gab = spec.contrast * gabor_pattern(
            spec.width, spec.height, spec.ppd, spec.spatial_freq, spec.radius, carrier="sin"
        )
    else:
        # corner-origin coordinates lock masker and Gabor carrier phase
        x = np.arange(spec.width, dtype=np.float64)[None, :]
        masker_1d = spec.mask_contrast * np.cos(2.0 * np.pi * spec.mask_freq * x / spec.ppd)
        masker = np.broadcast_to(masker_1d, (spec.height, spec.width))
        xc = x - spec.width / 2.0
        yc = np.arange(spec.height, dtype=np.float64)[:, None] - spec.height / 2.0
        env = np.exp(
            -(xc * xc + yc * yc) / (2.0 * spec.ppd * spec.ppd * spec.radius * spec.radius)
        )
        gab = spec.contrast * np.cos(2.0 * np.pi * spec.spatial_freq * x / spec.ppd) * env
    ref = _modulated(spec.luminance, 1.0, d, masker)
    test = _modulated(spec.luminance, 1.0, d, masker + gab)
    mk = lambda p, s: LinearStimulus(p[None], spec.ppd, spec.fps, s)
    return mk(test, spec), mk(ref, replace(spec, contrast=0.0))


def gen_flicker_pair(spec: StimulusSpec):
    """Flickering disk vs static field; sine phase makes frame 0 == ref."""
    spec.validate()
    if spec.fps <= 0 or spec.duration <= 0:
        raise ValueError("flicker needs fps > 0 and duration > 0")
    d = spec.color_direction
    disk = disk_pattern(spec.width, spec.height, spec.ppd, spec.radius)
    n = spec.n_frames
    ref_frame = _uniform_field(spec.luminance, spec.width, spec.height)
    frames = np.empty((n, spec.height, spec.width, 3))
    for k in range(n):
        t = k / spec.fps
        amp = spec.contrast * math.sin(2.0 * np.pi * spec.temporal_freq * t)
        frames[k] = _modulated(spec.luminance, amp, d, disk)
    ref_planes = np.broadcast_to(ref_frame, (n,) + ref_frame.shape).copy()
    mk = lambda p, s: LinearStimulus(p, spec.ppd, spec.fps, s)
    return mk(frames, spec), mk(ref_planes, replace(spec, contrast=0.0))


def gen_matching_grating(spec: StimulusSpec) -> LinearStimulus:
    """Full-field matching grating (no envelope)."""
    spec.validate()
    d = spec.color_direction
    orientation = "horizontal" if spec.test_id == "match_color" and not d.is_achromatic else "vertical"
    if spec.contrast == 0:
        pat = np.zeros((spec.height, spec.width))
    else:
        pat = grating_pattern(spec.width, spec.height, spec.ppd, spec.spatial_freq, orientation)
    img = _modulated(spec.luminance, spec.contrast, d, pat)
    return LinearStimulus(img[None], spec.ppd, spec.fps, spec)


def gen_pair(spec: StimulusSpec):
    """Dispatch on test kind; returns (test, ref) LinearStimulus pair."""
    kind = TESTS[spec.test_id].kind
    if kind == "masking":
        return gen_masking_pair(spec)
    if kind == "flicker":
        return gen_flicker_pair(spec)
    if kind.startswith("matching"):
        test = gen_matching_grating(spec)
        ref = gen_matching_grating(replace(spec, contrast=0.0))
        return test, ref
    return gen_gabor_pair(spec)


# ---------------------------------------------------------------------------
# the eleven tests


def field_to_pixels(deg: float, ppd: float) -> int:
    """Field size in even pixels (round half to even on the half-count)."""
    return int(round(deg * ppd / 2.0)) * 2


@dataclass(frozen=True)
class TestDef:
    test_id: str
    kind: str  # detection | masking | flicker | matching_freq | matching_color
    axis: str  # name of the swept parameter
    axis_range: tuple
    contrast_range: tuple
    luminance: float
    ppd: float
    field_deg: tuple
    direction: str = "Ach"
    spatial_freq: float = 0.0
    mask_freq: float = 0.0
    radius: float = 0.0
    temporal_freq: float = 0.0
    is_video: bool = False
    resolution_override: Optional[tuple] = None
    default_axis_n: int = 16
    default_contrast_n: int = 20
    noise_seed: Optional[int] = None

    @property
    def chromatic(self) -> bool:
        return self.direction != "Ach"

    def resolution(self) -> tuple:
        if self.resolution_override is not None:
            return self.resolution_override
        return (
            field_to_pixels(self.field_deg[0], self.ppd),
            field_to_pixels(self.field_deg[1], self.ppd),
        )

    def axis_values(self, n: Optional[int] = None) -> np.ndarray:
        n = n or self.default_axis_n
        return np.geomspace(self.axis_range[0], self.axis_range[1], n)

    def contrast_values(self, n: Optional[int] = None) -> np.ndarray:
        n = n or self.default_contrast_n
        return np.geomspace(self.contrast_range[0], self.contrast_range[1], n)

    def spec_for(self, axis_value: float, contrast: float, fps=120.0, duration=1.0) -> StimulusSpec:
        w, h = self.resolution()
        kw = dict(
            test_id=self.test_id,
            contrast=float(contrast),
            luminance=self.luminance,
            ppd=self.ppd,
            width=w,
            height=h,
            spatial_freq=self.spatial_freq,
            mask_freq=self.mask_freq,
            radius=self.radius,
            temporal_freq=self.temporal_freq,
            direction=self.direction,
            seed=self.noise_seed,
        )
        if self.axis == "spatial_freq":
            kw["spatial_freq"] = float(axis_value)
        elif self.axis == "luminance":
            kw["luminance"] = float(axis_value)
        elif self.axis == "radius":
            kw["radius"] = float(axis_value)
        elif self.axis == "mask_contrast":
            kw["mask_contrast"] = float(axis_value)
        elif self.axis == "temporal_freq":
            kw["temporal_freq"] = float(axis_value)
        else:
            raise ValueError(f"unknown axis {self.axis}")
        if self.is_video or kw["temporal_freq"] > 0:
            kw["fps"] = fps
            kw["duration"] = duration
        return StimulusSpec(**kw)

    def check_ranges(self, spec: StimulusSpec):
        lo, hi = self.contrast_range
        if spec.contrast != 0 and not (lo <= spec.contrast <= hi * (1 + 1e-12)):
            raise ValueError(
                f"{self.test_id}: contrast {spec.contrast} outside [{lo}, {hi}]"
            )
        if self.axis == "mask_contrast":
            if spec.mask_contrast and not (
                MASK_CONTRAST_RANGE[0] <= spec.mask_contrast <= MASK_CONTRAST_RANGE[1] * (1 + 1e-12)
            ):
                raise ValueError(f"{self.test_id}: mask contrast {spec.mask_contrast} out of range")
        elif self.axis in ("spatial_freq", "luminance", "radius", "temporal_freq"):
            val = getattr(spec, self.axis)
            lo, hi = self.axis_range
            if not (lo * (1 - 1e-12) <= val <= hi * (1 + 1e-12)):
                raise ValueError(f"{self.test_id}: {self.axis} {val} outside [{lo}, {hi}]")


MASK_CONTRAST_RANGE = (0.005, 0.5)

# Shared fixed seed: the same noise field is used for every cell of the
# incoherent masking test so metric responses see one masker realization.
NOISE_SEED = 20240601

TESTS = {
    t.test_id: t
    for t in [
        TestDef(
            "det_sf_ach", "detection", "spatial_freq", (0.5, 32.0), (0.001, 1.0),
            luminance=21.4, ppd=66.0, field_deg=(29.0, 16.4), radius=2.0,
        ),
        TestDef(
            "det_sf_rg", "detection", "spatial_freq", (0.5, 32.0), (0.001, 0.12),
            luminance=21.4, ppd=66.0, field_deg=(29.0, 16.4), radius=2.0, direction="RG",
        ),
        TestDef(
            "det_sf_yv", "detection", "spatial_freq", (0.5, 32.0), (0.01, 0.8),
            luminance=21.4, ppd=66.0, field_deg=(29.0, 16.4), radius=2.0, direction="YV",
        ),
        TestDef(
            "det_sf_transient", "detection", "spatial_freq", (0.5, 32.0), (0.001, 1.0),
            luminance=21.4, ppd=66.0, field_deg=(3.9, 3.9), radius=2.0,
            temporal_freq=8.0, is_video=True,
        ),
        TestDef(
            "det_luminance", "detection", "luminance", (0.1, 90.0), (0.001, 1.0),
            luminance=21.4, ppd=60.0, field_deg=(32.0, 18.0), spatial_freq=2.0, radius=2.0,
        ),
        TestDef(
            "det_area", "detection", "radius", (0.25, 8.0), (0.001, 1.0),
            luminance=21.4, ppd=60.0, field_deg=(32.0, 18.0), spatial_freq=2.0,
        ),
        TestDef(
            "mask_coherent", "masking", "mask_contrast", MASK_CONTRAST_RANGE, (0.005, 0.5),
            luminance=32.0, ppd=60.0, field_deg=(7.0, 5.0), spatial_freq=2.0,
            mask_freq=2.0, radius=0.5, default_axis_n=15, default_contrast_n=15,
        ),
        TestDef(
            "mask_incoherent", "masking", "mask_contrast", MASK_CONTRAST_RANGE, (0.005, 0.5),
            luminance=37.0, ppd=60.0, field_deg=(5.0, 5.0), spatial_freq=1.2,
            radius=0.8, default_axis_n=15, default_contrast_n=15, noise_seed=NOISE_SEED,
        ),
        TestDef(
            "flicker", "flicker", "temporal_freq", (0.5, 55.0), (0.001, 1.0),
            luminance=21.4, ppd=60.0, field_deg=(4.3, 4.3), radius=2.0,
            is_video=True, resolution_override=(256, 256),
        ),
        TestDef(
            "match_sf", "matching_freq", "spatial_freq", (0.25, 25.0), (0.001, 1.0),
            luminance=10.0, ppd=50.0, field_deg=(5.1, 5.1),
        ),
        TestDef(
            # contrast bound is loose: base achromatic contrasts span 0.01-0.2,
            # matched chromatic contrasts come from the reference pack
            "match_color", "matching_color", "spatial_freq", (1.0, 1.0), (0.001, 0.8),
            luminance=21.4, ppd=60.0, field_deg=(4.3, 4.3), spatial_freq=1.0,
        ),
    ]
}

DETECTION_TESTS = [t for t, d in TESTS.items() if d.kind in ("detection", "flicker")]
MATCH_SF_REF_FREQ = 5.0
MATCH_SF_REF_CONTRASTS = (0.005, 0.629)  # log-spaced endpoints, 10 values
MATCH_COLOR_ACH_CONTRASTS = (0.01, 0.2)  # Table range for the base contrasts


def match_sf_ref_contrasts(n: int = 10) -> np.ndarray:
    return np.geomspace(MATCH_SF_REF_CONTRASTS[0], MATCH_SF_REF_CONTRASTS[1], n)


def displayable_excursion(spec: StimulusSpec) -> tuple:
    """Worst-case (min, max) linear channel value of the generated pair.

    Analytic for deterministic patterns; for the noise masker the bound uses
    the actual extrema of the seeded field, so it is exact for that field.
    """
    d = spec.color_direction
    amp = abs(spec.contrast)
    if TESTS[spec.test_id].kind == "masking":
        if spec.test_id == "mask_incoherent":
            noise = gen_noise_field(spec.width, spec.height, spec.ppd, 12.0, spec.seed)
            m_hi = spec.mask_contrast * float(noise.max())
            m_lo = spec.mask_contrast * float(noise.min())
            hi, lo = m_hi + amp, m_lo - amp
        else:
            hi = spec.mask_contrast + amp
            lo = -(spec.mask_contrast + amp)
    else:
        hi, lo = amp, -amp
    deltas = spec.luminance * np.abs(d.rgb_delta)
    vmax = float(spec.luminance + max(hi, 0) * deltas.max())
    vmin = float(spec.luminance + lo * deltas.max())
    if not d.is_achromatic:
        # channels move in different directions; use signed extremes per channel
        chans_hi = spec.luminance * (1.0 + max(hi, -lo) * np.abs(d.rgb_delta))
        chans_lo = spec.luminance * (1.0 - max(hi, -lo) * np.abs(d.rgb_delta))
        vmax, vmin = float(chans_hi.max()), float(chans_lo.min())
    return vmin, vmax


def spec_is_displayable(spec: StimulusSpec, peak_luminance: float = 100.0) -> bool:
    vmin, vmax = displayable_excursion(spec)
    return vmin >= -1e-9 and vmax <= peak_luminance * (1 + 1e-12)
