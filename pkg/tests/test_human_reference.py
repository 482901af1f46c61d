import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from percepbench.errors import OutOfDomain, ParseError
from percepbench.human_reference import (
    ColorTriplets,
    MatchingCurve,
    ReferencePack,
    SyntheticCSF,
    TEST_AXIS_COLUMN,
    ThresholdCurve,
    load_reference_pack,
    save_reference_pack,
)
from percepbench.stimgen import TESTS


def simple_curve():
    return ThresholdCurve(
        axis="spatial_freq_cpd",
        points=np.array([[1.0, 0.01], [100.0, 0.04]]),
    )


def test_tabulated_points_are_exact():
    pts = np.array([[0.5, 0.02], [2.0, 0.005], [8.0, 0.01], [32.0, 0.2]])
    curve = ThresholdCurve(axis="spatial_freq_cpd", points=pts)
    for av, th in pts:
        assert curve.threshold_at(av) == pytest.approx(th, rel=1e-12)


def test_log_midpoint_is_geometric_mean():
    curve = simple_curve()
    assert curve.threshold_at(10.0) == pytest.approx(math.sqrt(0.01 * 0.04), rel=1e-12)


def test_out_of_domain_raises():
    curve = simple_curve()
    with pytest.raises(OutOfDomain):
        curve.threshold_at(0.5)
    with pytest.raises(OutOfDomain):
        curve.threshold_at(np.array([2.0, 101.0]))


def test_vectorized_queries():
    curve = simple_curve()
    got = curve.threshold_at(np.array([1.0, 10.0, 100.0]))
    assert np.allclose(got, [0.01, 0.02, 0.04], rtol=1e-12)


@given(
    st.lists(
        st.tuples(
            st.floats(min_value=0.1, max_value=100.0),
            st.floats(min_value=1e-4, max_value=1.0),
        ),
        min_size=3,
        max_size=8,
        unique_by=lambda t: round(math.log10(t[0]), 3),
    ),
    st.floats(min_value=0.0, max_value=1.0),
)
def test_interpolation_never_overshoots(raw_points, frac):
    pts = np.array(sorted(raw_points))
    if np.any(np.diff(pts[:, 0]) <= 0):
        return
    curve = ThresholdCurve(axis="spatial_freq_cpd", points=pts)
    for i in range(len(pts) - 1):
        (x0, y0), (x1, y1) = pts[i], pts[i + 1]
        xq = 10 ** (math.log10(x0) + frac * (math.log10(x1) - math.log10(x0)))
        xq = min(max(xq, x0), x1)
        yq = curve.threshold_at(xq)
        lo, hi = min(y0, y1), max(y0, y1)
        assert lo * (1 - 1e-9) <= yq <= hi * (1 + 1e-9)


def test_curve_validation():
    with pytest.raises(ValueError):
        ThresholdCurve(axis="spatial_freq_cpd", points=np.array([[2.0, 0.1], [1.0, 0.2]]))
    with pytest.raises(ValueError):
        ThresholdCurve(axis="spatial_freq_cpd", points=np.array([[1.0, 0.0], [2.0, 0.2]]))
    with pytest.raises(ValueError):
        ThresholdCurve(axis="bogus", points=np.array([[1.0, 0.1], [2.0, 0.2]]))


def test_synthetic_csf_peak_and_symmetry():
    csf = SyntheticCSF(peak_sensitivity=250.0, peak_freq=4.0, bw_low=0.8, bw_high=0.5)
    assert csf.threshold(4.0) == pytest.approx(1.0 / 250.0, rel=1e-12)
    # one half-width away the sensitivity falls by 10^(1/2) on either side
    up = csf.sensitivity(4.0 * 10 ** 0.5)
    dn = csf.sensitivity(4.0 / 10 ** 0.8)
    assert up == pytest.approx(250.0 * 10 ** -0.5, rel=1e-9)
    assert dn == pytest.approx(250.0 * 10 ** -0.5, rel=1e-9)


def test_synthetic_csf_to_curve_round_trip():
    csf = SyntheticCSF()
    freqs = np.geomspace(0.5, 32.0, 16)
    curve = csf.to_curve(freqs)
    assert np.allclose(curve.threshold_at(freqs), csf.threshold(freqs), rtol=1e-9)


# ---------------------------------------------------------------------------
# matching data


def demo_matching_curve():
    freqs = np.array([0.5, 1.0, 5.0, 10.0])
    rc = np.array([0.01, 0.1])
    matched = np.array([[0.02, 0.015, 0.01, 0.02], [np.nan, 0.12, 0.1, 0.15]])
    return MatchingCurve(ref_freq=5.0, ref_contrasts=rc, freqs=freqs, matched=matched)


def test_matching_curve_exact_and_interpolated():
    mc = demo_matching_curve()
    assert mc.matched_contrast(0.01, 5.0) == pytest.approx(0.01, rel=1e-12)
    mid = mc.matched_contrast(0.01, math.sqrt(0.5 * 1.0))
    assert mid == pytest.approx(math.sqrt(0.02 * 0.015), rel=1e-12)


def test_matching_curve_missing_data_is_nan():
    mc = demo_matching_curve()
    assert math.isnan(mc.matched_contrast(0.1, 0.5))  # row starts at 1.0
    assert math.isnan(mc.matched_contrast(0.1, 0.7))
    assert not math.isnan(mc.matched_contrast(0.1, 1.0))


def test_matching_curve_unknown_ref_contrast():
    with pytest.raises(OutOfDomain):
        demo_matching_curve().matched_contrast(0.05, 5.0)


def test_color_triplets_validation():
    with pytest.raises(ValueError):
        ColorTriplets(ach=np.array([0.1]), rg=np.array([0.1, 0.2]), yv=np.array([0.1]))
    with pytest.raises(ValueError):
        ColorTriplets(ach=np.array([0.1]), rg=np.array([1.5]), yv=np.array([0.1]))
    t = ColorTriplets(ach=np.array([0.1, 0.2]), rg=np.array([0.3, 0.4]), yv=np.array([0.5, 0.6]))
    assert len(t) == 2


# ---------------------------------------------------------------------------
# pack load/save


def build_demo_pack():
    curves = {tid: None for tid in TEST_AXIS_COLUMN}
    curves["det_sf_ach"] = SyntheticCSF().to_curve(np.geomspace(0.5, 32, 12))
    curves["det_luminance"] = ThresholdCurve(
        axis="luminance_cdm2",
        points=np.array([[0.1, 0.08], [1.0, 0.03], [10.0, 0.012], [90.0, 0.008]]),
    )
    return ReferencePack(
        curves=curves,
        matching_sf=demo_matching_curve(),
        matching_color=ColorTriplets(
            ach=np.geomspace(0.01, 0.2, 10),
            rg=np.geomspace(0.005, 0.1, 10),
            yv=np.geomspace(0.02, 0.4, 10),
        ),
    )


def test_round_trip_save_load(tmp_path):
    pack = build_demo_pack()
    save_reference_pack(str(tmp_path), pack)
    loaded = load_reference_pack(str(tmp_path))
    for tid, curve in pack.curves.items():
        if curve is None:
            assert loaded.curves[tid] is None
        else:
            assert np.allclose(loaded.curves[tid].points, curve.points, rtol=1e-9)
            assert loaded.curves[tid].axis == curve.axis
    assert np.allclose(loaded.matching_sf.ref_contrasts, pack.matching_sf.ref_contrasts, rtol=1e-9)
    assert np.allclose(
        loaded.matching_sf.matched, pack.matching_sf.matched, rtol=1e-9, equal_nan=True
    )
    assert np.allclose(loaded.matching_color.ach, pack.matching_color.ach, rtol=1e-9)
    assert np.allclose(loaded.matching_color.yv, pack.matching_color.yv, rtol=1e-9)


def test_empty_dir_is_total_and_unscorable(tmp_path):
    pack = load_reference_pack(str(tmp_path))
    for tid in TESTS:
        assert not pack.scorable(tid)
    for tid in TEST_AXIS_COLUMN:
        assert pack.curves[tid] is None
    assert pack.matching_sf is None and pack.matching_color is None
    assert len(pack.warnings) == len(TEST_AXIS_COLUMN) + 2


def test_single_file_pack(tmp_path):
    save_reference_pack(
        str(tmp_path),
        ReferencePack(curves={"det_sf_ach": SyntheticCSF().to_curve([1.0, 2.0, 4.0])}),
    )
    pack = load_reference_pack(str(tmp_path))
    assert pack.scorable("det_sf_ach")
    assert sum(pack.scorable(t) for t in TESTS) == 1


def write(path, text):
    path.write_text(text)
    return str(path.parent)


def test_parse_error_wrong_header(tmp_path):
    d = write(tmp_path / "det_sf_ach.csv", "freq,thr\n1,0.1\n2,0.2\n")
    with pytest.raises(ParseError) as ei:
        load_reference_pack(d)
    assert ei.value.line == 1 and "det_sf_ach.csv" in str(ei.value.path)


def test_parse_error_non_numeric(tmp_path):
    d = write(
        tmp_path / "det_sf_ach.csv",
        "spatial_freq_cpd,threshold_contrast\n1,0.1\ntwo,0.2\n",
    )
    with pytest.raises(ParseError) as ei:
        load_reference_pack(d)
    assert ei.value.line == 3


def test_parse_error_non_increasing(tmp_path):
    d = write(
        tmp_path / "det_sf_ach.csv",
        "spatial_freq_cpd,threshold_contrast\n2,0.1\n1,0.2\n",
    )
    with pytest.raises(ParseError) as ei:
        load_reference_pack(d)
    assert ei.value.line == 3


def test_parse_error_duplicate_matching_cell(tmp_path):
    d = write(
        tmp_path / "matching_sf.csv",
        "freq_cpd,ref_contrast,match_contrast\n1,0.1,0.2\n1,0.1,0.3\n",
    )
    with pytest.raises(ParseError) as ei:
        load_reference_pack(d)
    assert ei.value.line == 3


def test_shipped_default_pack_loads():
    from percepbench.human_reference import default_pack_dir
    import os

    if not os.path.isdir(default_pack_dir()):
        pytest.skip("default pack not built yet")
    pack = load_reference_pack(default_pack_dir())
    for tid in TESTS:
        assert pack.scorable(tid), f"{tid} should be scorable in the shipped pack"
