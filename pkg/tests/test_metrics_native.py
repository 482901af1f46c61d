"""Native metric checks against independent direct-formula oracles.

Every oracle here is written from the metric's published definition using
plain numpy / math routines (sliding windows, scalar loops), sharing no
filtering code with the package implementation.
"""
import math

import numpy as np
import pytest

from percepbench.errors import ImageTooSmall, ShapeMismatch
from percepbench.metrics_native import (
    MS_SSIM_WEIGHTS,
    NATIVE_METRICS,
    ciede2000,
    ciede2000_lab,
    compute,
    descriptor,
    gmsd,
    hyab,
    ictcp_de,
    ms_ssim,
    psnr_y,
    srgb_to_lab,
    ssim,
)

LUMA_W = (0.2126, 0.7152, 0.0722)


def random_pair(seed, h=64, w=64):
    rng = np.random.default_rng(seed)
    ref = rng.uniform(0.05, 0.95, size=(h, w, 3))
    test = np.clip(ref + rng.normal(0.0, 0.03, size=(h, w, 3)), 0.0, 1.0)
    return test, ref


def oracle_luma(img):
    return img[..., 0] * LUMA_W[0] + img[..., 1] * LUMA_W[1] + img[..., 2] * LUMA_W[2]


# ---------------------------------------------------------------------------
# SSIM / MS-SSIM oracles: explicit Gaussian window + sliding-window sums


def gaussian_window(n=11, sigma=1.5):
    ax = np.arange(n) - (n - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def windowed(img, win):
    n = win.shape[0]
    v = np.lib.stride_tricks.sliding_window_view(img, (n, n))
    return np.einsum("ijkl,kl->ij", v, win)


def oracle_ssim_maps(a, b):
    win = gaussian_window()
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    mu1, mu2 = windowed(a, win), windowed(b, win)
    s11 = windowed(a * a, win) - mu1 ** 2
    s22 = windowed(b * b, win) - mu2 ** 2
    s12 = windowed(a * b, win) - mu1 * mu2
    l_map = (2 * mu1 * mu2 + c1) / (mu1 ** 2 + mu2 ** 2 + c1)
    cs_map = (2 * s12 + c2) / (s11 + s22 + c2)
    return l_map, cs_map


def oracle_ssim(test, ref):
    l_map, cs_map = oracle_ssim_maps(oracle_luma(test), oracle_luma(ref))
    return float(np.mean(l_map * cs_map))


def block_mean_2x2(img):
    h, w = img.shape
    img = img[: h // 2 * 2, : w // 2 * 2]
    return img.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def oracle_ms_ssim(test, ref):
    a, b = oracle_luma(test), oracle_luma(ref)
    score = 1.0
    for j, wgt in enumerate(MS_SSIM_WEIGHTS):
        l_map, cs_map = oracle_ssim_maps(a, b)
        cs = max(float(np.mean(cs_map)), 0.0)
        if j == len(MS_SSIM_WEIGHTS) - 1:
            score *= max(float(np.mean(l_map)), 0.0) ** wgt
        score *= cs ** wgt
        a, b = block_mean_2x2(a), block_mean_2x2(b)
    return score


# ---------------------------------------------------------------------------
# GMSD oracle: scipy convolution with independently typed kernels


def oracle_gmsd(test, ref):
    from scipy.ndimage import convolve

    hx = np.array([[1, 0, -1], [1, 0, -1], [1, 0, -1]]) / 3.0
    t_const = 170.0 / 255.0 ** 2
    maps = []
    for img in (test, ref):
        y = block_mean_2x2(oracle_luma(img))
        gx = convolve(y, hx, mode="constant", cval=0.0)
        gy = convolve(y, hx.T, mode="constant", cval=0.0)
        maps.append(np.hypot(gx, gy))
    g1, g2 = maps
    gms = (2 * g1 * g2 + t_const) / (g1 ** 2 + g2 ** 2 + t_const)
    return float(np.std(gms))


# ---------------------------------------------------------------------------
# color-difference oracles: scalar per-pixel math


def oracle_srgb_to_lab_px(rgb):
    def inv_oetf(u):
        return u / 12.92 if u <= 0.04045 else ((u + 0.055) / 1.055) ** 2.4

    # sRGB primaries with D65 at chromaticity (0.3127, 0.3290)
    m = (
        (0.4123907992659595, 0.3575843393838780, 0.1804807884018343),
        (0.2126390058715104, 0.7151686787677559, 0.0721923153607337),
        (0.0193308187155918, 0.1191947797946259, 0.9505321522496608),
    )
    lin = [inv_oetf(float(v)) for v in rgb]
    xyz = [sum(m[i][j] * lin[j] for j in range(3)) for i in range(3)]
    white = [sum(row) for row in m]
    f = []
    for i in range(3):
        t = xyz[i] / white[i]
        f.append(t ** (1.0 / 3.0) if t > 216.0 / 24389.0 else (24389.0 / 27.0 * t + 16.0) / 116.0)
    return (116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2]))


def oracle_ciede2000_px(lab1, lab2):
    L1, a1, b1 = lab1
    L2, a2, b2 = lab2
    C1 = math.hypot(a1, b1)
    C2 = math.hypot(a2, b2)
    Cb = 0.5 * (C1 + C2)
    G = 0.5 * (1 - math.sqrt(Cb ** 7 / (Cb ** 7 + 25.0 ** 7)))
    a1p, a2p = (1 + G) * a1, (1 + G) * a2
    C1p, C2p = math.hypot(a1p, b1), math.hypot(a2p, b2)
    h1p = math.degrees(math.atan2(b1, a1p)) % 360 if (b1, a1p) != (0, 0) else 0.0
    h2p = math.degrees(math.atan2(b2, a2p)) % 360 if (b2, a2p) != (0, 0) else 0.0
    dLp = L2 - L1
    dCp = C2p - C1p
    if C1p * C2p == 0:
        dhp = 0.0
    else:
        dhp = h2p - h1p
        if dhp > 180:
            dhp -= 360
        elif dhp < -180:
            dhp += 360
    dHp = 2 * math.sqrt(C1p * C2p) * math.sin(math.radians(dhp) / 2)
    Lbp = 0.5 * (L1 + L2)
    Cbp = 0.5 * (C1p + C2p)
    if C1p * C2p == 0:
        hbp = h1p + h2p
    elif abs(h1p - h2p) <= 180:
        hbp = 0.5 * (h1p + h2p)
    elif h1p + h2p < 360:
        hbp = 0.5 * (h1p + h2p + 360)
    else:
        hbp = 0.5 * (h1p + h2p - 360)
    T = (
        1
        - 0.17 * math.cos(math.radians(hbp - 30))
        + 0.24 * math.cos(math.radians(2 * hbp))
        + 0.32 * math.cos(math.radians(3 * hbp + 6))
        - 0.20 * math.cos(math.radians(4 * hbp - 63))
    )
    dtheta = 30 * math.exp(-(((hbp - 275) / 25) ** 2))
    RC = 2 * math.sqrt(Cbp ** 7 / (Cbp ** 7 + 25.0 ** 7))
    SL = 1 + 0.015 * (Lbp - 50) ** 2 / math.sqrt(20 + (Lbp - 50) ** 2)
    SC = 1 + 0.045 * Cbp
    SH = 1 + 0.015 * Cbp * T
    RT = -math.sin(math.radians(2 * dtheta)) * RC
    return math.sqrt(
        (dLp / SL) ** 2
        + (dCp / SC) ** 2
        + (dHp / SH) ** 2
        + RT * (dCp / SC) * (dHp / SH)
    )


def oracle_color_means(test, ref):
    de00 = []
    dhyab = []
    for i in range(test.shape[0]):
        for j in range(test.shape[1]):
            lab_t = oracle_srgb_to_lab_px(test[i, j])
            lab_r = oracle_srgb_to_lab_px(ref[i, j])
            de00.append(oracle_ciede2000_px(lab_t, lab_r))
            dhyab.append(
                abs(lab_t[0] - lab_r[0]) + math.hypot(lab_t[1] - lab_r[1], lab_t[2] - lab_r[2])
            )
    return float(np.mean(de00)), float(np.mean(dhyab))


def oracle_ictcp_px(rgb, peak):
    def inv_oetf(u):
        return u / 12.92 if u <= 0.04045 else ((u + 0.055) / 1.055) ** 2.4

    srgb2xyz = (
        (0.4123907992659595, 0.3575843393838780, 0.1804807884018343),
        (0.2126390058715104, 0.7151686787677559, 0.0721923153607337),
        (0.0193308187155918, 0.1191947797946259, 0.9505321522496608),
    )
    xyz2020 = (
        (1.7166511879712674, -0.3556707837763924, -0.2533662813736599),
        (-0.6666843518324892, 1.6164812366349395, 0.0157685458139111),
        (0.0176398574453108, -0.0427706132578085, 0.9421031212354738),
    )
    lin = [inv_oetf(float(v)) for v in rgb]
    xyz = [sum(srgb2xyz[i][j] * lin[j] for j in range(3)) for i in range(3)]
    r2020 = [sum(xyz2020[i][j] * xyz[j] for j in range(3)) for i in range(3)]
    lms = (
        (1688 * r2020[0] + 2146 * r2020[1] + 262 * r2020[2]) / 4096,
        (683 * r2020[0] + 2951 * r2020[1] + 462 * r2020[2]) / 4096,
        (99 * r2020[0] + 309 * r2020[1] + 3688 * r2020[2]) / 4096,
    )
    m1, m2 = 2610 / 16384, 2523 / 4096 * 128
    c1, c2, c3 = 3424 / 4096, 2413 / 4096 * 32, 2392 / 4096 * 32
    pq = []
    for v in lms:
        y = min(max(v * peak / 10000.0, 0.0), 1.0) ** m1
        pq.append(((c1 + c2 * y) / (1 + c3 * y)) ** m2)
    i_ = 0.5 * pq[0] + 0.5 * pq[1]
    ct = (6610 * pq[0] - 13613 * pq[1] + 7003 * pq[2]) / 4096
    cp = (17933 * pq[0] - 17390 * pq[1] - 543 * pq[2]) / 4096
    return i_, ct, cp


def oracle_ictcp_de(test, ref, peak=100.0):
    vals = []
    for i in range(test.shape[0]):
        for j in range(test.shape[1]):
            i1, t1, p1 = oracle_ictcp_px(test[i, j], peak)
            i2, t2, p2 = oracle_ictcp_px(ref[i, j], peak)
            vals.append(720 * math.sqrt((i1 - i2) ** 2 + (0.5 * (t1 - t2)) ** 2 + (p1 - p2) ** 2))
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# oracle comparison tests


@pytest.mark.parametrize("seed", range(20))
def test_ssim_matches_oracle(seed):
    test, ref = random_pair(seed)
    assert ssim(test, ref) == pytest.approx(oracle_ssim(test, ref), abs=1e-7)


@pytest.mark.parametrize("seed", range(20))
def test_gmsd_matches_oracle(seed):
    test, ref = random_pair(1000 + seed)
    assert gmsd(test, ref) == pytest.approx(oracle_gmsd(test, ref), abs=1e-7)


@pytest.mark.parametrize("seed", range(20))
def test_color_metrics_match_oracle(seed):
    # scalar-loop oracles are slow, keep the frames small
    test, ref = random_pair(2000 + seed, h=12, w=12)
    de_exp, hyab_exp = oracle_color_means(test, ref)
    assert ciede2000(test, ref) == pytest.approx(de_exp, abs=1e-7)
    assert hyab(test, ref) == pytest.approx(hyab_exp, abs=1e-7)
    assert ictcp_de(test, ref, peak_luminance=100.0) == pytest.approx(
        oracle_ictcp_de(test, ref), abs=1e-7
    )


@pytest.mark.parametrize("seed", range(5))
def test_ms_ssim_matches_oracle(seed):
    test, ref = random_pair(3000 + seed, h=192, w=176)
    assert ms_ssim(test, ref) == pytest.approx(oracle_ms_ssim(test, ref), abs=1e-7)


@pytest.mark.parametrize("seed", range(5))
def test_psnr_matches_direct_formula(seed):
    test, ref = random_pair(4000 + seed)
    mse = np.mean((oracle_luma(test) - oracle_luma(ref)) ** 2)
    assert psnr_y(test, ref) == pytest.approx(-10 * math.log10(mse), abs=1e-9)


# ---------------------------------------------------------------------------
# CIEDE2000 published verification pairs (Sharma, Wu & Dalal 2005 test data)

SHARMA_PAIRS = [
    ((50.0000, 2.6772, -79.7751), (50.0000, 0.0000, -82.7485), 2.0425),
    ((50.0000, 3.1571, -77.2803), (50.0000, 0.0000, -82.7485), 2.8615),
    ((50.0000, 2.8361, -74.0200), (50.0000, 0.0000, -82.7485), 3.4412),
    ((50.0000, -1.3802, -84.2814), (50.0000, 0.0000, -82.7485), 1.0000),
    ((50.0000, -1.1848, -84.8006), (50.0000, 0.0000, -82.7485), 1.0000),
    ((50.0000, -0.9009, -85.5211), (50.0000, 0.0000, -82.7485), 1.0000),
    ((50.0000, 0.0000, 0.0000), (50.0000, -1.0000, 2.0000), 2.3669),
    ((50.0000, -1.0000, 2.0000), (50.0000, 0.0000, 0.0000), 2.3669),
    ((50.0000, 2.4900, -0.0010), (50.0000, -2.4900, 0.0009), 7.1792),
    ((50.0000, 2.4900, -0.0010), (50.0000, -2.4900, 0.0010), 7.1792),
    ((50.0000, 2.4900, -0.0010), (50.0000, -2.4900, 0.0011), 7.2195),
    ((50.0000, 2.4900, -0.0010), (50.0000, -2.4900, 0.0012), 7.2195),
    ((50.0000, -0.0010, 2.4900), (50.0000, 0.0010, -2.4900), 4.8045),
    ((50.0000, -0.0010, 2.4900), (50.0000, 0.0012, -2.4900), 4.7461),
    ((50.0000, 2.5000, 0.0000), (50.0000, 0.0000, -2.5000), 4.3065),
    ((50.0000, 2.5000, 0.0000), (73.0000, 25.0000, -18.0000), 27.1492),
    ((50.0000, 2.5000, 0.0000), (61.0000, -5.0000, 29.0000), 22.8977),
    ((50.0000, 2.5000, 0.0000), (56.0000, -27.0000, -3.0000), 31.9030),
    ((50.0000, 2.5000, 0.0000), (58.0000, 24.0000, 15.0000), 19.4535),
    ((50.0000, 2.5000, 0.0000), (50.0000, 3.1736, 0.5854), 1.0000),
    ((50.0000, 2.5000, 0.0000), (50.0000, 3.2972, 0.0000), 1.0000),
    ((50.0000, 2.5000, 0.0000), (50.0000, 1.8634, 0.5757), 1.0000),
    ((50.0000, 2.5000, 0.0000), (50.0000, 3.2592, 0.3350), 1.0000),
    ((60.2574, -34.0099, 36.2677), (60.4626, -34.1751, 39.4387), 1.2644),
    ((36.4612, 47.8580, 18.3852), (36.2715, 50.5065, 21.2231), 1.4146),
    ((90.8027, -2.0831, 1.4410), (91.1528, -1.6435, 0.0447), 1.4441),
    ((90.9257, -0.5406, -0.9208), (88.6381, -0.8985, -0.7239), 1.5381),
    ((6.7747, -0.2908, -2.4247), (5.8714, -0.0985, -2.2286), 0.6377),
    ((2.0776, 0.0795, -1.1350), (0.9033, -0.0636, -0.5514), 0.9082),
]


@pytest.mark.parametrize("lab1,lab2,expected", SHARMA_PAIRS)
def test_ciede2000_published_pairs(lab1, lab2, expected):
    a = np.asarray(lab1, dtype=np.float64).reshape(1, 1, 3)
    b = np.asarray(lab2, dtype=np.float64).reshape(1, 1, 3)
    assert float(ciede2000_lab(a, b)[0, 0]) == pytest.approx(expected, abs=1e-4)


def test_ciede2000_symmetry():
    rng = np.random.default_rng(7)
    a = rng.uniform(0, 100, size=(8, 8, 3))
    a[..., 1:] -= 50
    b = a + rng.normal(0, 5, size=a.shape)
    assert np.allclose(ciede2000_lab(a, b), ciede2000_lab(b, a), atol=1e-12)


def test_lab_conversion_matches_scalar_oracle():
    rng = np.random.default_rng(11)
    img = rng.uniform(0, 1, size=(6, 6, 3))
    got = srgb_to_lab(img)
    for i in range(6):
        for j in range(6):
            exp = oracle_srgb_to_lab_px(img[i, j])
            assert got[i, j] == pytest.approx(exp, abs=1e-9)


# ---------------------------------------------------------------------------
# identities, ordering probes, error paths


def test_identity_scores():
    img = random_pair(5)[1]
    assert psnr_y(img, img) == 120.0
    assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)
    assert ms_ssim(np.tile(img, (3, 3, 1)), np.tile(img, (3, 3, 1))) == pytest.approx(
        1.0, abs=1e-12
    )
    assert gmsd(img, img) == 0.0
    assert ciede2000(img, img) == 0.0
    assert hyab(img, img) == 0.0
    assert ictcp_de(img, img) == 0.0


def test_degradation_moves_scores_the_right_way():
    rng = np.random.default_rng(99)
    ref = rng.uniform(0.2, 0.8, size=(96, 96, 3))
    noise = rng.normal(0, 1, size=ref.shape)
    prev = None
    for amp in (0.005, 0.02, 0.08):
        test = np.clip(ref + amp * noise, 0, 1)
        cur = {
            "psnr_y": psnr_y(test, ref),
            "ssim": ssim(test, ref),
            "gmsd": gmsd(test, ref),
            "ciede2000": ciede2000(test, ref),
            "hyab": hyab(test, ref),
            "ictcp_de": ictcp_de(test, ref),
        }
        if prev is not None:
            for name, val in cur.items():
                if descriptor(name).higher_is_better:
                    assert val < prev[name], name
                else:
                    assert val > prev[name], name
        prev = cur


def test_shape_mismatch_raises():
    a = np.zeros((32, 32, 3))
    b = np.zeros((32, 48, 3))
    for name in NATIVE_METRICS:
        with pytest.raises(ShapeMismatch):
            compute(name, a, b)


def test_small_images_rejected_by_windowed_metrics():
    a = np.random.default_rng(0).uniform(size=(10, 10, 3))
    with pytest.raises(ImageTooSmall):
        ssim(a, a)
    b = np.random.default_rng(1).uniform(size=(64, 64, 3))
    with pytest.raises(ImageTooSmall):
        ms_ssim(b, b)  # 64 px collapses below the window before scale 5


def test_registry_descriptors():
    assert set(NATIVE_METRICS) == {
        "psnr_y",
        "ssim",
        "ms_ssim",
        "gmsd",
        "ciede2000",
        "hyab",
        "ictcp_de",
    }
    for name, (desc, _) in NATIVE_METRICS.items():
        assert desc.name == name
        assert not desc.supports_video
        assert desc.input_space in {"encoded_srgb", "linear_luminance", "lab"}
    assert descriptor("psnr_y").higher_is_better
    assert not descriptor("gmsd").higher_is_better
    assert descriptor("ciede2000").is_color and not descriptor("ssim").is_color


def test_ciede2000_agrees_with_skimage_when_available():
    skcolor = pytest.importorskip("skimage.color")
    rng = np.random.default_rng(123)
    lab1 = rng.uniform(0, 100, size=(16, 16, 3))
    lab1[..., 1:] = rng.uniform(-60, 60, size=(16, 16, 2))
    lab2 = lab1 + rng.normal(0, 8, size=lab1.shape)
    ours = ciede2000_lab(lab1, lab2)
    theirs = skcolor.deltaE_ciede2000(lab1, lab2)
    assert np.allclose(ours, theirs, atol=1e-9)
