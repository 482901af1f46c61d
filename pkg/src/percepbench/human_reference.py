"""Human-vision reference data: threshold curves, contrast-matching data,
and a synthetic CSF used as a self-test oracle.

Reference packs are directories of CSV files, one per test, named
`<test_id>.csv` with header `<axis>,threshold_contrast`, plus
`matching_sf.csv` (long format `freq_cpd,ref_contrast,match_contrast`)
and `matching_color.csv` (`ach_contrast,rg_contrast,yv_contrast`).
Loading is total over the test registry: a missing file marks the test
unscorable instead of failing.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .errors import OutOfDomain, ParseError
from .stimgen import TESTS

AXIS_COLUMNS = {
    "spatial_freq_cpd",
    "luminance_cdm2",
    "area_deg",
    "temporal_freq_hz",
    "mask_contrast",
}

# axis label used in curve CSVs, per test
TEST_AXIS_COLUMN = {
    "det_sf_ach": "spatial_freq_cpd",
    "det_sf_rg": "spatial_freq_cpd",
    "det_sf_yv": "spatial_freq_cpd",
    "det_sf_transient": "spatial_freq_cpd",
    "det_luminance": "luminance_cdm2",
    "det_area": "area_deg",
    "mask_coherent": "mask_contrast",
    "mask_incoherent": "mask_contrast",
    "flicker": "temporal_freq_hz",
}

MATCHING_SF_FILE = "matching_sf.csv"
MATCHING_COLOR_FILE = "matching_color.csv"


@dataclass(frozen=True)
class ThresholdCurve:
    axis: str
    points: np.ndarray  # (N, 2): axis value, threshold contrast
    source: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError("need at least two (axis, threshold) points")
        if not np.all(np.diff(pts[:, 0]) > 0):
            raise ValueError("axis values must be strictly increasing")
        if not np.all(pts[:, 1] > 0) or not np.all(pts[:, 0] > 0):
            raise ValueError("axis values and thresholds must be positive")
        if self.axis not in AXIS_COLUMNS:
            raise ValueError(f"unknown axis {self.axis!r}")
        object.__setattr__(self, "points", pts)

    @property
    def domain(self):
        return float(self.points[0, 0]), float(self.points[-1, 0])

    def threshold_at(self, axis_value):
        """Log-log linear interpolation; exact at tabulated points."""
        q = np.asarray(axis_value, dtype=np.float64)
        lo, hi = self.domain
        if np.any(q < lo) or np.any(q > hi):
            raise OutOfDomain(f"query outside [{lo:g}, {hi:g}] on axis {self.axis}")
        lq = np.log10(q)
        lt = np.interp(lq, np.log10(self.points[:, 0]), np.log10(self.points[:, 1]))
        out = 10.0 ** lt
        return float(out) if np.isscalar(axis_value) or out.ndim == 0 else out


@dataclass(frozen=True)
class MatchingCurve:
    """Contrast-matching ground truth: for each reference contrast, the test
    contrast judged equal across test frequencies (reference at ref_freq)."""

    ref_freq: float
    ref_contrasts: np.ndarray  # (K,)
    freqs: np.ndarray  # (M,) strictly increasing
    matched: np.ndarray  # (K, M) matched test contrast, NaN where unavailable
    source: str = ""

    def __post_init__(self):
        rc = np.asarray(self.ref_contrasts, dtype=np.float64)
        fq = np.asarray(self.freqs, dtype=np.float64)
        mt = np.asarray(self.matched, dtype=np.float64)
        if mt.shape != (rc.size, fq.size):
            raise ValueError("matched grid shape mismatch")
        if not np.all(np.diff(fq) > 0):
            raise ValueError("frequencies must be strictly increasing")
        finite = mt[np.isfinite(mt)]
        if finite.size and (np.any(finite <= 0) or np.any(finite > 1)):
            raise ValueError("matched contrasts must lie in (0, 1]")
        object.__setattr__(self, "ref_contrasts", rc)
        object.__setattr__(self, "freqs", fq)
        object.__setattr__(self, "matched", mt)

    def matched_contrast(self, ref_contrast: float, test_freq: float) -> float:
        """Ground-truth matched contrast, log-log interpolated in frequency.
        Returns NaN when the row has no data covering test_freq."""
        idx = np.nonzero(
            np.isclose(self.ref_contrasts, ref_contrast, rtol=1e-9, atol=0.0)
        )[0]
        if idx.size != 1:
            raise OutOfDomain(f"no matching row for ref contrast {ref_contrast!r}")
        row = self.matched[idx[0]]
        ok = np.isfinite(row)
        if ok.sum() < 1:
            return float("nan")
        fq = self.freqs[ok]
        cv = row[ok]
        if test_freq < fq[0] or test_freq > fq[-1]:
            return float("nan")
        if fq.size == 1:
            return float(cv[0]) if np.isclose(test_freq, fq[0]) else float("nan")
        return float(
            10.0 ** np.interp(np.log10(test_freq), np.log10(fq), np.log10(cv))
        )


@dataclass(frozen=True)
class ColorTriplets:
    """Contrasts judged perceptually equal across color directions:
    rows of (achromatic, red-green, yellow-violet) Michelson/cone contrast."""

    ach: np.ndarray
    rg: np.ndarray
    yv: np.ndarray
    source: str = ""

    def __post_init__(self):
        a = np.asarray(self.ach, dtype=np.float64)
        r = np.asarray(self.rg, dtype=np.float64)
        y = np.asarray(self.yv, dtype=np.float64)
        if not (a.shape == r.shape == y.shape) or a.ndim != 1 or a.size < 1:
            raise ValueError("triplet columns must be equal-length 1D arrays")
        for col in (a, r, y):
            if np.any(~np.isfinite(col)) or np.any(col <= 0) or np.any(col > 1):
                raise ValueError("contrasts must lie in (0, 1]")
        object.__setattr__(self, "ach", a)
        object.__setattr__(self, "rg", r)
        object.__setattr__(self, "yv", y)

    def __len__(self):
        return int(self.ach.size)


@dataclass(frozen=True)
class SyntheticCSF:
    """Asymmetric log-parabola sensitivity model used as a self-test oracle
    in place of externally fitted CSF data."""

    peak_sensitivity: float = 400.0
    peak_freq: float = 3.0
    bw_low: float = 0.80  # log10-frequency half-width below the peak
    bw_high: float = 0.50  # and above it

    def sensitivity(self, freq):
        f = np.asarray(freq, dtype=np.float64)
        d = np.log10(f) - np.log10(self.peak_freq)
        w = np.where(d < 0, self.bw_low, self.bw_high)
        s = self.peak_sensitivity * 10.0 ** (-(d ** 2) / (2.0 * w ** 2))
        return float(s) if s.ndim == 0 else s

    def threshold(self, freq):
        return 1.0 / self.sensitivity(freq)

    def to_curve(self, freqs, axis="spatial_freq_cpd", source="synthetic") -> ThresholdCurve:
        freqs = np.asarray(freqs, dtype=np.float64)
        return ThresholdCurve(
            axis=axis,
            points=np.column_stack([freqs, self.threshold(freqs)]),
            source=source,
        )


@dataclass
class ReferencePack:
    curves: Dict[str, Optional[ThresholdCurve]]
    matching_sf: Optional[MatchingCurve] = None
    matching_color: Optional[ColorTriplets] = None
    warnings: List[str] = field(default_factory=list)

    def curve_for(self, test_id: str) -> Optional[ThresholdCurve]:
        return self.curves[test_id]

    def scorable(self, test_id: str) -> bool:
        if test_id == "match_sf":
            return self.matching_sf is not None
        if test_id == "match_color":
            return self.matching_color is not None
        return self.curves.get(test_id) is not None


def _read_rows(path: str, expected_header: List[str]):
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty CSV", path=path, line=1)
        header = [h.strip() for h in header]
        if header != expected_header:
            raise ParseError(
                f"expected header {','.join(expected_header)!r}, got {','.join(header)!r}",
                path=path,
                line=1,
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(expected_header):
                raise ParseError(
                    f"expected {len(expected_header)} columns, got {len(row)}",
                    path=path,
                    line=lineno,
                )
            try:
                rows.append(([float(c) for c in row], lineno))
            except ValueError:
                raise ParseError(f"non-numeric value in {row!r}", path=path, line=lineno)
    return rows


def _load_curve(path: str, axis: str, source: str) -> ThresholdCurve:
    rows = _read_rows(path, [axis, "threshold_contrast"])
    if len(rows) < 2:
        raise ParseError("need at least two data rows", path=path, line=1)
    prev = None
    for (vals, lineno) in rows:
        if vals[0] <= 0 or vals[1] <= 0:
            raise ParseError("axis and threshold values must be positive", path=path, line=lineno)
        if prev is not None and vals[0] <= prev:
            raise ParseError("axis values must be strictly increasing", path=path, line=lineno)
        prev = vals[0]
    pts = np.array([v for v, _ in rows])
    return ThresholdCurve(axis=axis, points=pts, source=source)


def _load_matching_sf(path: str, source: str) -> MatchingCurve:
    rows = _read_rows(path, ["freq_cpd", "ref_contrast", "match_contrast"])
    if not rows:
        raise ParseError("no data rows", path=path, line=1)
    ref_levels: List[float] = []
    freqs: List[float] = []
    for (f, rc, _), _ln in rows:
        if not any(np.isclose(rc, x, rtol=1e-12) for x in ref_levels):
            ref_levels.append(rc)
        if not any(np.isclose(f, x, rtol=1e-12) for x in freqs):
            freqs.append(f)
    freqs = sorted(freqs)
    grid = np.full((len(ref_levels), len(freqs)), np.nan)
    for (f, rc, mc), lineno in rows:
        i = next(k for k, x in enumerate(ref_levels) if np.isclose(rc, x, rtol=1e-12))
        j = next(k for k, x in enumerate(freqs) if np.isclose(f, x, rtol=1e-12))
        if not np.isnan(grid[i, j]):
            raise ParseError("duplicate (freq, ref_contrast) cell", path=path, line=lineno)
        grid[i, j] = mc
    order = np.argsort(ref_levels)
    return MatchingCurve(
        ref_freq=5.0,
        ref_contrasts=np.asarray(ref_levels)[order],
        freqs=np.asarray(freqs),
        matched=grid[order],
        source=source,
    )


def _load_matching_color(path: str, source: str) -> ColorTriplets:
    rows = _read_rows(path, ["ach_contrast", "rg_contrast", "yv_contrast"])
    if not rows:
        raise ParseError("no data rows", path=path, line=1)
    arr = np.array([v for v, _ in rows])
    return ColorTriplets(ach=arr[:, 0], rg=arr[:, 1], yv=arr[:, 2], source=source)


def load_reference_pack(directory: str) -> ReferencePack:
    """Load every curve the directory provides; every test id in the registry
    gets an entry, None marking it unscorable."""
    curves: Dict[str, Optional[ThresholdCurve]] = {}
    warnings: List[str] = []
    source = os.path.basename(os.path.normpath(directory)) or directory
    for test_id, axis in TEST_AXIS_COLUMN.items():
        path = os.path.join(directory, f"{test_id}.csv")
        if os.path.isfile(path):
            curves[test_id] = _load_curve(path, axis, source)
        else:
            curves[test_id] = None
            warnings.append(f"{test_id}: no curve file, test unscorable")
    matching_sf = None
    sf_path = os.path.join(directory, MATCHING_SF_FILE)
    if os.path.isfile(sf_path):
        matching_sf = _load_matching_sf(sf_path, source)
    else:
        warnings.append("match_sf: no matching data, test unscorable")
    matching_color = None
    color_path = os.path.join(directory, MATCHING_COLOR_FILE)
    if os.path.isfile(color_path):
        matching_color = _load_matching_color(color_path, source)
    else:
        warnings.append("match_color: no triplet data, test unscorable")
    for test_id in TESTS:
        if test_id not in curves and test_id not in ("match_sf", "match_color"):
            curves[test_id] = None
    return ReferencePack(
        curves=curves,
        matching_sf=matching_sf,
        matching_color=matching_color,
        warnings=warnings,
    )


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def save_reference_pack(directory: str, pack: ReferencePack) -> None:
    """Write a pack back out as CSVs (inverse of load_reference_pack)."""
    os.makedirs(directory, exist_ok=True)
    for test_id, curve in pack.curves.items():
        if curve is None:
            continue
        path = os.path.join(directory, f"{test_id}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([curve.axis, "threshold_contrast"])
            for av, th in curve.points:
                w.writerow([_fmt(av), _fmt(th)])
    if pack.matching_sf is not None:
        mc = pack.matching_sf
        with open(os.path.join(directory, MATCHING_SF_FILE), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["freq_cpd", "ref_contrast", "match_contrast"])
            for i, rc in enumerate(mc.ref_contrasts):
                for j, f in enumerate(mc.freqs):
                    if np.isfinite(mc.matched[i, j]):
                        w.writerow([_fmt(f), _fmt(rc), _fmt(mc.matched[i, j])])
    if pack.matching_color is not None:
        ct = pack.matching_color
        with open(os.path.join(directory, MATCHING_COLOR_FILE), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["ach_contrast", "rg_contrast", "yv_contrast"])
            for a, r, y in zip(ct.ach, ct.rg, ct.yv):
                w.writerow([_fmt(a), _fmt(r), _fmt(y)])


def default_pack_dir() -> str:
    """Directory of the reference pack shipped with the package."""
    return os.path.join(os.path.dirname(__file__), "reference_packs", "default")
