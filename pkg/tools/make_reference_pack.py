"""Build the default human reference pack shipped with the package.

Every curve is a smooth parametric model of classical psychophysical data,
evaluated on a dense log-spaced grid and written as CSV via
``save_reference_pack``. Regenerating is deterministic: re-running produces
byte-identical files.

Models and their lineage:

* achromatic spatial CSF: asymmetric log-parabola (castleCSF-family shape),
  peak sensitivity 400 at 3 cpd, log10-frequency half-widths 0.80 below /
  0.50 above the peak;
* chromatic CSFs (red-green, yellow-violet): low-pass in frequency, the
  classical chromatic acuity rolloff;
* transient (8 Hz counterphase) CSF: the same log-parabola family with the
  band shifted toward low frequencies;
* luminance dependence: DeVries-Rose to Weber transition,
  thr(L) = t0 * sqrt(1 + L_knee / L);
* area summation: thr(R) = t0 * sqrt(1 + (R_knee / R)^2), Piper-law rolloff
  flattening for large patches;
* coherent (grating-on-grating) masking: Foley-style dipper, facilitation
  near the masker's own threshold then a power-law masking handle
  (Foley 1994);
* incoherent (noise) masking: linear-amplification pedestal curve
  (Gegenfurtner & Kiper 1992);
* temporal CSF: band-pass, peak near 8 Hz (elaTCSF-family shape);
* contrast matching across spatial frequency: contrast constancy, matches
  deviating from veridical only near threshold (Georgeson & Sullivan 1975);
* contrast matching across color directions: fixed equal-salience ratios
  (Switkes & Crognale 1999).

Usage: python3 tools/make_reference_pack.py [out_dir]
"""
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from percepbench.human_reference import (
    TEST_AXIS_COLUMN,
    ColorTriplets,
    MatchingCurve,
    ReferencePack,
    ThresholdCurve,
    default_pack_dir,
    save_reference_pack,
)
from percepbench.stimgen import MATCH_SF_REF_FREQ, match_sf_ref_contrasts

N_NODES = 25  # per-curve tabulation density; interpolation error is negligible


def log_parabola(freq, peak_sens, peak_freq, bw_low, bw_high):
    f = np.asarray(freq, dtype=np.float64)
    d = np.log10(f) - np.log10(peak_freq)
    w = np.where(d < 0, bw_low, bw_high)
    return peak_sens * 10.0 ** (-(d ** 2) / (2.0 * w ** 2))


# --- spatial contrast sensitivity -----------------------------------------

ACH_CSF = dict(peak_sens=400.0, peak_freq=3.0, bw_low=0.80, bw_high=0.50)


def thr_sf_ach(freq):
    return 1.0 / log_parabola(freq, **ACH_CSF)


def thr_sf_rg(freq):
    # low-pass: sensitivity 300 at DC, acuity rolloff beyond ~1 cpd
    f = np.asarray(freq, dtype=np.float64)
    return (1.0 + (f / 1.0) ** 2) ** 1.1 / 300.0


def thr_sf_yv(freq):
    f = np.asarray(freq, dtype=np.float64)
    return (1.0 + (f / 0.8) ** 2) ** 1.2 / 90.0


def thr_sf_transient(freq):
    return 1.0 / log_parabola(freq, peak_sens=150.0, peak_freq=1.2, bw_low=1.0, bw_high=0.55)


# --- luminance and area ----------------------------------------------------

LUM_KNEE = 6.5  # cd/m^2, DeVries-Rose -> Weber transition
LUM_T0 = 0.003 / np.sqrt(1.0 + LUM_KNEE / 21.4)  # anchored at the 21.4 cd/m^2 condition

AREA_KNEE = 2.45  # deg
AREA_T0 = 0.003 / np.sqrt(1.0 + (AREA_KNEE / 2.0) ** 2)  # anchored at radius 2 deg


def thr_luminance(L):
    return LUM_T0 * np.sqrt(1.0 + LUM_KNEE / np.asarray(L, dtype=np.float64))


def thr_area(radius):
    r = np.asarray(radius, dtype=np.float64)
    return AREA_T0 * np.sqrt(1.0 + (AREA_KNEE / r) ** 2)


# --- masking ---------------------------------------------------------------

DIPPER = dict(t0=0.0065, dip=0.15, dip_center=0.0065, dip_width=0.35, handle=0.02, slope=0.62)


def thr_mask_coherent(cm):
    """Dipper: log-Gaussian facilitation around the masker's own threshold,
    power-law handle above it."""
    c = np.asarray(cm, dtype=np.float64)
    p = DIPPER
    fac = 10.0 ** (
        -p["dip"] * np.exp(-((np.log10(c / p["dip_center"])) ** 2) / (2.0 * p["dip_width"] ** 2))
    )
    handle = (1.0 + (c / p["handle"]) ** 2) ** (p["slope"] / 2.0)
    return p["t0"] * fac * handle


def thr_mask_incoherent(cm):
    c = np.asarray(cm, dtype=np.float64)
    return 0.006 * np.sqrt(1.0 + (c / 0.03) ** 2)


# --- temporal --------------------------------------------------------------


def thr_flicker(tf):
    return 1.0 / log_parabola(tf, peak_sens=180.0, peak_freq=8.0, bw_low=0.65, bw_high=0.35)


# --- contrast matching -----------------------------------------------------

MATCH_D = 2.05  # log10-contrast span over which matches relax to veridical
MATCH_FREQS = np.geomspace(0.25, 25.0, 17)


def matched_contrast_sf(ref_contrast, freq):
    """Contrast constancy: near threshold the match follows the threshold
    curve; k decades above it the match is veridical (k = MATCH_D)."""
    lrc = np.log10(ref_contrast)
    lthr5 = np.log10(thr_sf_ach(MATCH_SF_REF_FREQ))
    k = np.clip(1.0 - (lrc - lthr5) / MATCH_D, 0.0, 1.0)
    delta = np.log10(thr_sf_ach(freq)) - lthr5
    return 10.0 ** (lrc + k * delta)


COLOR_RATIO_RG = 6.0  # achromatic contrast judged equal to rg contrast/this
COLOR_RATIO_YV = 2.2


def build_pack() -> ReferencePack:
    curve_models = {
        "det_sf_ach": ((0.5, 32.0), thr_sf_ach),
        "det_sf_rg": ((0.5, 32.0), thr_sf_rg),
        "det_sf_yv": ((0.5, 32.0), thr_sf_yv),
        "det_sf_transient": ((0.5, 32.0), thr_sf_transient),
        "det_luminance": ((0.1, 90.0), thr_luminance),
        "det_area": ((0.25, 8.0), thr_area),
        "mask_coherent": ((0.005, 0.5), thr_mask_coherent),
        "mask_incoherent": ((0.005, 0.5), thr_mask_incoherent),
        "flicker": ((0.5, 55.0), thr_flicker),
    }
    curves = {}
    for tid, ((lo, hi), model) in curve_models.items():
        xs = np.geomspace(lo, hi, N_NODES)
        curves[tid] = ThresholdCurve(
            axis=TEST_AXIS_COLUMN[tid],
            points=np.column_stack([xs, model(xs)]),
            source="default",
        )

    rc = match_sf_ref_contrasts()
    matched = np.empty((rc.size, MATCH_FREQS.size))
    for i, c in enumerate(rc):
        matched[i] = matched_contrast_sf(float(c), MATCH_FREQS)
    matched[matched > 1.0] = np.nan  # beyond displayable contrast: no datum
    matching_sf = MatchingCurve(
        ref_freq=MATCH_SF_REF_FREQ,
        ref_contrasts=rc,
        freqs=MATCH_FREQS,
        matched=matched,
        source="default",
    )

    ach = np.geomspace(0.01, 0.2, 8)
    matching_color = ColorTriplets(
        ach=ach, rg=ach / COLOR_RATIO_RG, yv=ach / COLOR_RATIO_YV, source="default"
    )

    return ReferencePack(
        curves=curves, matching_sf=matching_sf, matching_color=matching_color
    )


def main(argv=None):
    args = list(sys.argv[1:] if argv is None else argv)
    out = args[0] if args else default_pack_dir()
    pack = build_pack()
    save_reference_pack(out, pack)
    n = sum(1 for c in pack.curves.values() if c is not None)
    print(f"wrote {n} threshold curves + matching data to {out}")


if __name__ == "__main__":
    main()
