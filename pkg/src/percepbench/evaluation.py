"""Scoring: alignment of metric responses with human threshold data,
contrast-matching solvers, and the matching error statistics.

A ResponseSurface holds one metric's scores over a (axis value, contrast)
grid, optionally augmented with exact "strip" evaluations at multiplied
thresholds (for alignment) or at the matching reference contrasts. NaN
cells mean "not evaluated / not evaluable" and are excluded everywhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import DegenerateRange, NoOverlap, NoValidSamples, OutOfDomain, OutOfHull
from .human_reference import MatchingCurve, ThresholdCurve

N_MULTIPLIERS = 10


def default_multipliers() -> np.ndarray:
    """Threshold multipliers, log-spaced so they sit symmetrically around
    1x threshold in log contrast."""
    return np.geomspace(0.5, 2.0, N_MULTIPLIERS)


def round_sig(x, digits: int = 9):
    """Round to a fixed number of significant decimal digits.

    Rank statistics treat equal values as ties; stimuli constructed to sit at
    identical threshold multiples can come back from a metric differing in the
    last ulp after c = m*thr, q = c/thr round trips. Oracle metrics quantize
    their output with this so designed ties stay ties.
    """
    a = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(a)
    nz = (a != 0) & np.isfinite(a)
    mag = np.floor(np.log10(np.abs(a, where=nz, out=np.ones_like(a))))
    scale = 10.0 ** (digits - 1 - mag)
    out[nz] = np.round(a[nz] * scale[nz]) / scale[nz]
    out[~np.isfinite(a)] = a[~np.isfinite(a)]
    return float(out) if out.ndim == 0 else out


@dataclass
class ResponseSurface:
    test_id: str
    metric: str
    higher_is_better: bool
    axis_values: np.ndarray  # (A,) strictly increasing, > 0
    contrast_values: np.ndarray  # (C,) strictly increasing, > 0
    scores: np.ndarray  # (A, C), NaN = masked
    strip_multipliers: Optional[np.ndarray] = None  # (M,)
    strip_contrasts: Optional[np.ndarray] = None  # (A, M)
    strip_scores: Optional[np.ndarray] = None  # (A, M)
    ref_contrasts: Optional[np.ndarray] = None  # (K,)
    ref_scores: Optional[np.ndarray] = None  # (K,)

    def __post_init__(self):
        self.axis_values = np.asarray(self.axis_values, dtype=np.float64)
        self.contrast_values = np.asarray(self.contrast_values, dtype=np.float64)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.shape != (self.axis_values.size, self.contrast_values.size):
            raise ValueError("scores grid shape mismatch")
        for name in ("axis_values", "contrast_values"):
            v = getattr(self, name)
            if np.any(v <= 0) or np.any(np.diff(v) <= 0):
                raise ValueError(f"{name} must be positive and strictly increasing")
        for name in ("strip_multipliers", "strip_contrasts", "strip_scores",
                     "ref_contrasts", "ref_scores"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.asarray(v, dtype=np.float64))
        if (self.strip_scores is None) != (self.strip_contrasts is None) or (
            self.strip_scores is None
        ) != (self.strip_multipliers is None):
            raise ValueError("strip fields must be given together")
        if self.strip_scores is not None:
            m = self.strip_multipliers.size
            want = (self.axis_values.size, m)
            if self.strip_contrasts.shape != want or self.strip_scores.shape != want:
                raise ValueError("strip grid shape mismatch")
        if (self.ref_scores is None) != (self.ref_contrasts is None):
            raise ValueError("ref strip fields must be given together")
        if self.ref_scores is not None and self.ref_scores.shape != self.ref_contrasts.shape:
            raise ValueError("ref strip shape mismatch")

    def to_json(self) -> dict:
        def arr(a):
            return None if a is None else np.where(np.isfinite(a), a, None).tolist()

        return {
            "test_id": self.test_id,
            "metric": self.metric,
            "higher_is_better": self.higher_is_better,
            "axis_values": self.axis_values.tolist(),
            "contrast_values": self.contrast_values.tolist(),
            "scores": arr(self.scores),
            "strip_multipliers": arr(self.strip_multipliers),
            "strip_contrasts": arr(self.strip_contrasts),
            "strip_scores": arr(self.strip_scores),
            "ref_contrasts": arr(self.ref_contrasts),
            "ref_scores": arr(self.ref_scores),
        }

    @classmethod
    def from_json(cls, d: dict) -> "ResponseSurface":
        def arr(v):
            if v is None:
                return None
            a = np.asarray(
                [[np.nan if x is None else x for x in row] for row in v]
                if v and isinstance(v[0], list)
                else [np.nan if x is None else x for x in v],
                dtype=np.float64,
            )
            return a

        return cls(
            test_id=d["test_id"],
            metric=d["metric"],
            higher_is_better=bool(d["higher_is_better"]),
            axis_values=arr(d["axis_values"]),
            contrast_values=arr(d["contrast_values"]),
            scores=arr(d["scores"]),
            strip_multipliers=arr(d.get("strip_multipliers")),
            strip_contrasts=arr(d.get("strip_contrasts")),
            strip_scores=arr(d.get("strip_scores")),
            ref_contrasts=arr(d.get("ref_contrasts")),
            ref_scores=arr(d.get("ref_scores")),
        )


@dataclass
class ColorResponseSet:
    """Metric responses for the color-matching triplets: q[c, d] with
    directions ordered (Ach, RG, YV)."""

    test_id: str
    metric: str
    higher_is_better: bool
    q: np.ndarray  # (N, 3)

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64)
        if self.q.ndim != 2 or self.q.shape[1] != 3:
            raise ValueError("q must be (N, 3)")

    def to_json(self) -> dict:
        return {
            "test_id": self.test_id,
            "metric": self.metric,
            "higher_is_better": self.higher_is_better,
            "q": np.where(np.isfinite(self.q), self.q, None).tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "ColorResponseSet":
        q = np.asarray(
            [[np.nan if x is None else x for x in row] for row in d["q"]],
            dtype=np.float64,
        )
        return cls(d["test_id"], d["metric"], bool(d["higher_is_better"]), q)


# ---------------------------------------------------------------------------
# rank statistics


def _tie_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    ranks = np.empty(x.size, dtype=np.float64)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Spearman rank correlation with tie-averaged ranks. NaN when either
    input is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("need two equal-length 1D arrays with >= 2 samples")
    rx = _tie_ranks(x)
    ry = _tie_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if denom == 0.0:
        return float("nan")
    return float((rx @ ry) / denom)


# ---------------------------------------------------------------------------
# interpolation over the grid


def response_at_contrast(surface: ResponseSurface, axis_value: float, contrast: float) -> float:
    """Bilinear interpolation in (log axis, log contrast); exact at nodes.
    Raises OutOfHull outside the grid or next to masked cells."""
    av = surface.axis_values
    cv = surface.contrast_values
    if not (av[0] <= axis_value <= av[-1]) or not (cv[0] <= contrast <= cv[-1]):
        raise OutOfHull(f"({axis_value:g}, {contrast:g}) outside sampled grid")
    la = math.log10(axis_value)
    lc = math.log10(contrast)
    lav = np.log10(av)
    lcv = np.log10(cv)
    ia = min(int(np.searchsorted(lav, la, side="right")) - 1, av.size - 2)
    ic = min(int(np.searchsorted(lcv, lc, side="right")) - 1, cv.size - 2)
    ia = max(ia, 0)
    ic = max(ic, 0)
    ta = (la - lav[ia]) / (lav[ia + 1] - lav[ia])
    tc = (lc - lcv[ic]) / (lcv[ic + 1] - lcv[ic])
    ta = min(max(ta, 0.0), 1.0)
    tc = min(max(tc, 0.0), 1.0)
    corners = surface.scores[ia : ia + 2, ic : ic + 2]

    # exact-node queries tolerate masked neighbors
    a_exact = 0 if ta == 0.0 else (1 if ta == 1.0 else None)
    c_exact = 0 if tc == 0.0 else (1 if tc == 1.0 else None)
    if a_exact is not None and c_exact is not None:
        v = corners[a_exact, c_exact]
        if not np.isfinite(v):
            raise OutOfHull("grid node is masked")
        return float(v)
    if a_exact is not None:
        v0, v1 = corners[a_exact, 0], corners[a_exact, 1]
        if not (np.isfinite(v0) and np.isfinite(v1)):
            raise OutOfHull("bracketing node is masked")
        return float(v0 + tc * (v1 - v0))
    if c_exact is not None:
        v0, v1 = corners[0, c_exact], corners[1, c_exact]
        if not (np.isfinite(v0) and np.isfinite(v1)):
            raise OutOfHull("bracketing node is masked")
        return float(v0 + ta * (v1 - v0))
    if not np.all(np.isfinite(corners)):
        raise OutOfHull("bracketing node is masked")
    top = corners[0, 0] + tc * (corners[0, 1] - corners[0, 0])
    bot = corners[1, 0] + tc * (corners[1, 1] - corners[1, 0])
    return float(top + ta * (bot - top))


# ---------------------------------------------------------------------------
# alignment score


@dataclass
class AlignmentResult:
    score: float
    n_pairs: int
    degenerate: bool
    per_axis: Dict[float, Optional[float]] = field(default_factory=dict)
    n_excluded: int = 0

    def to_json(self, metric: str, test_id: str) -> dict:
        return {
            "metric": metric,
            "test_id": test_id,
            "score_type": "alignment",
            "value": self.score,
            "degenerate": self.degenerate,
            "n_samples": self.n_pairs,
            "excluded": self.n_excluded,
            "per_axis": {f"{k:.6g}": v for k, v in self.per_axis.items()},
        }


def _strip_lookup(surface: ResponseSurface, ai: int, mi: int, contrast: float):
    if surface.strip_scores is None:
        return None
    c_stored = surface.strip_contrasts[ai, mi]
    if not np.isfinite(c_stored) or abs(c_stored - contrast) > 1e-6 * contrast:
        return None
    v = surface.strip_scores[ai, mi]
    return float(v) if np.isfinite(v) else None


def alignment_score(
    surface: ResponseSurface,
    curve: ThresholdCurve,
    multipliers: Optional[np.ndarray] = None,
    pooling: str = "pooled",
) -> AlignmentResult:
    """Rank correlation between threshold multipliers and metric responses
    sampled at m_i * c_thr(axis), pooled over axis values. Lower-is-better
    metrics are negated before ranking; constant responses come back as
    degenerate with score 0."""
    if multipliers is None:
        multipliers = default_multipliers()
    if pooling not in ("pooled", "per_axis_mean"):
        raise ValueError(f"unknown pooling {pooling!r}")
    ms: List[float] = []
    resp: List[float] = []
    axis_of: List[int] = []
    n_excluded = 0
    # quality scores fall as distortion rises; negate them so a metric that
    # tracks visibility correlates positively with the multiplier
    sign = -1.0 if surface.higher_is_better else 1.0
    for ai, a in enumerate(surface.axis_values):
        try:
            c_thr = curve.threshold_at(float(a))
        except OutOfDomain:
            n_excluded += multipliers.size
            continue
        for mi, m in enumerate(multipliers):
            c = float(m) * c_thr
            if c > 1.0:
                n_excluded += 1
                continue
            v = _strip_lookup(surface, ai, mi, c)
            if v is None:
                try:
                    v = response_at_contrast(surface, float(a), c)
                except OutOfHull:
                    n_excluded += 1
                    continue
            ms.append(float(m))
            resp.append(sign * v)
            axis_of.append(ai)
    if not ms:
        raise NoValidSamples("no (axis, multiplier) samples inside the response surface")
    ms_arr = np.asarray(ms)
    resp_arr = np.asarray(resp)
    axis_arr = np.asarray(axis_of)

    per_axis: Dict[float, Optional[float]] = {}
    for ai, a in enumerate(surface.axis_values):
        sel = axis_arr == ai
        if sel.sum() >= 2 and np.ptp(resp_arr[sel]) > 0:
            per_axis[float(a)] = spearman(ms_arr[sel], resp_arr[sel])
        elif sel.any():
            per_axis[float(a)] = None

    if np.ptp(resp_arr) == 0.0:
        return AlignmentResult(0.0, int(ms_arr.size), True, per_axis, n_excluded)
    if pooling == "pooled":
        rho = spearman(ms_arr, resp_arr)
        if math.isnan(rho):
            return AlignmentResult(0.0, int(ms_arr.size), True, per_axis, n_excluded)
    else:
        vals = [v for v in per_axis.values() if v is not None and not math.isnan(v)]
        if not vals:
            return AlignmentResult(0.0, int(ms_arr.size), True, per_axis, n_excluded)
        rho = float(np.mean(vals))
    return AlignmentResult(float(rho), int(ms_arr.size), False, per_axis, n_excluded)


# ---------------------------------------------------------------------------
# contrast matching


@dataclass
class MatchResult:
    ref_contrasts: np.ndarray  # (K,)
    axis_values: np.ndarray  # (A,)
    matched: np.ndarray  # (K, A), NaN = NoMatch
    n_multi_crossings: int = 0

    def to_json(self) -> dict:
        return {
            "ref_contrasts": self.ref_contrasts.tolist(),
            "axis_values": self.axis_values.tolist(),
            "matched": np.where(np.isfinite(self.matched), self.matched, None).tolist(),
            "n_multi_crossings": self.n_multi_crossings,
        }


def match_contrast_curve(
    contrasts: np.ndarray,
    responses: np.ndarray,
    ref_response: float,
    ref_contrast: Optional[float] = None,
    tol_frac: float = 1e-4,
) -> Tuple[float, int]:
    """Solve response(c) = ref_response on a sampled contrast curve.

    Linear interpolation in log contrast; sign-change brackets are refined
    by bisection until |dQ| <= tol_frac * response range. Returns
    (matched contrast or NaN, number of crossings found); with several
    crossings the one closest to ref_contrast in log contrast wins.
    """
    c = np.asarray(contrasts, dtype=np.float64)
    r = np.asarray(responses, dtype=np.float64)
    ok = np.isfinite(r)
    if ok.sum() < 1:
        return float("nan"), 0
    lc = np.log10(c[ok])
    rr = r[ok]
    rng = float(np.ptp(rr))
    if rng == 0.0:
        # constant response: nothing to bracket
        return float("nan"), 0
    tol = tol_frac * rng
    f = rr - ref_response
    candidates: List[float] = []
    for i in range(f.size):
        if f[i] == 0.0:
            candidates.append(float(lc[i]))
    for i in range(f.size - 1):
        if f[i] * f[i + 1] < 0.0:
            lo, hi = float(lc[i]), float(lc[i + 1])
            flo = float(f[i])
            # bisect the bracket itself: a |dQ| <= tol stop alone stalls where
            # the curve is nearly flat in log contrast
            mid = 0.5 * (lo + hi)
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if hi - lo <= 1e-7:
                    break
                t = (mid - lc[i]) / (lc[i + 1] - lc[i])
                fm = float(f[i] + t * (f[i + 1] - f[i]))
                if abs(fm) <= tol and hi - lo <= 1e-6:
                    break
                if (fm < 0) == (flo < 0):
                    lo, flo = mid, fm
                else:
                    hi = mid
            candidates.append(mid)
    if not candidates:
        return float("nan"), 0
    if len(candidates) == 1 or ref_contrast is None:
        pick = candidates[0]
    else:
        ref_lc = math.log10(ref_contrast)
        pick = min(candidates, key=lambda x: abs(x - ref_lc))
    return float(10.0 ** pick), len(candidates)


def solve_matches(surface: ResponseSurface, tol_frac: float = 1e-4) -> MatchResult:
    """Contrast-match every (reference contrast, axis value) cell of a
    matching surface against its reference-strip responses."""
    if surface.ref_scores is None:
        raise ValueError("surface has no reference strip")
    K = surface.ref_contrasts.size
    A = surface.axis_values.size
    matched = np.full((K, A), np.nan)
    n_multi = 0
    for k in range(K):
        ref_q = surface.ref_scores[k]
        if not np.isfinite(ref_q):
            continue
        for j in range(A):
            val, n_cross = match_contrast_curve(
                surface.contrast_values,
                surface.scores[j],
                float(ref_q),
                ref_contrast=float(surface.ref_contrasts[k]),
                tol_frac=tol_frac,
            )
            matched[k, j] = val
            if n_cross > 1:
                n_multi += 1
    return MatchResult(
        ref_contrasts=surface.ref_contrasts.copy(),
        axis_values=surface.axis_values.copy(),
        matched=matched,
        n_multi_crossings=n_multi,
    )


@dataclass
class FreqMatchScore:
    rmse: float  # log10-contrast units
    n_used: int
    n_excluded: int

    def to_json(self, metric: str, test_id: str) -> dict:
        return {
            "metric": metric,
            "test_id": test_id,
            "score_type": "matching_rmse_log10",
            "value": self.rmse,
            "degenerate": False,
            "n_samples": self.n_used,
            "excluded": self.n_excluded,
        }


def matching_rmse_freq(result: MatchResult, human: MatchingCurve) -> FreqMatchScore:
    """Root mean squared log10-contrast error over cells where both the
    solver and the human data produced a match."""
    sq: List[float] = []
    n_excluded = 0
    for k, rc in enumerate(result.ref_contrasts):
        for j, f in enumerate(result.axis_values):
            pred = result.matched[k, j]
            try:
                true = human.matched_contrast(float(rc), float(f))
            except OutOfDomain:
                true = float("nan")
            if np.isfinite(pred) and np.isfinite(true):
                sq.append((math.log10(pred) - math.log10(true)) ** 2)
            else:
                n_excluded += 1
    if not sq:
        raise NoOverlap("no cell has both a predicted and a human match")
    return FreqMatchScore(float(np.sqrt(np.mean(sq))), len(sq), n_excluded)


@dataclass
class ColorMatchScore:
    rmse: float
    degenerate: bool
    n_triplets: int

    def to_json(self, metric: str, test_id: str) -> dict:
        return {
            "metric": metric,
            "test_id": test_id,
            "score_type": "matching_rmse_color",
            "value": None if self.degenerate else self.rmse,
            "degenerate": self.degenerate,
            "n_samples": self.n_triplets,
            "excluded": 0,
        }


def matching_rmse_color(q) -> ColorMatchScore:
    """Adjacent-direction disagreement of responses to matched color
    triplets, normalized by the global response range:

        sqrt( (1/N) * sum_c [ (q_c,1 - q_c,2)^2 + (q_c,2 - q_c,3)^2 ] / range^2 )
    """
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != 3:
        raise ValueError("expected an (N, 3) response array")
    if not np.all(np.isfinite(q)):
        raise ValueError("responses must be finite")
    n = q.shape[0]
    rng = float(q.max() - q.min())
    if rng == 0.0:
        raise DegenerateRange("metric response identical for every stimulus")
    num = float(np.sum((q[:, 0] - q[:, 1]) ** 2 + (q[:, 1] - q[:, 2]) ** 2))
    return ColorMatchScore(math.sqrt(num / (n * rng * rng)), False, n)


def color_score_or_degenerate(resp: ColorResponseSet) -> ColorMatchScore:
    try:
        return matching_rmse_color(resp.q)
    except DegenerateRange:
        return ColorMatchScore(float("nan"), True, int(resp.q.shape[0]))
