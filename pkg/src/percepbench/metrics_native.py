"""Built-in full-reference metrics: PSNR-Y, SSIM, MS-SSIM, GMSD, CIEDE2000,
HyAB and an ICtCp color difference.

All metric functions take display-encoded sRGB images as float arrays in
[0, 1], shape (H, W, 3), and return a scalar. Video is handled by the
runner (per-frame scores, arithmetic mean). Windowed metrics use
valid-region convolution (no padding) unless noted; GMSD keeps the
zero-padded same-size convolution of the original formulation.
"""
from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .colorimetry import SRGB_TO_XYZ, srgb_eotf
from .errors import ImageTooSmall, ShapeMismatch

REC709_LUMA = np.array([0.2126, 0.7152, 0.0722])
PSNR_CEILING_DB = 120.0


def _check_pair(test, ref):
    test = np.asarray(test, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if test.shape != ref.shape:
        raise ShapeMismatch(f"{test.shape} vs {ref.shape}")
    return test, ref


def luma(img) -> np.ndarray:
    """Rec.709 luma of encoded sRGB in [0,1] -> (H, W)."""
    return np.asarray(img, dtype=np.float64) @ REC709_LUMA


# ---------------------------------------------------------------------------
# PSNR


def psnr_y(test, ref, peak_luminance=None) -> float:
    test, ref = _check_pair(test, ref)
    mse = float(np.mean((luma(test) - luma(ref)) ** 2))
    if mse <= 0.0:
        return PSNR_CEILING_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CEILING_DB)


# ---------------------------------------------------------------------------
# SSIM / MS-SSIM

_SSIM_K1, _SSIM_K2 = 0.01, 0.03
_SSIM_WIN = 11
_SSIM_SIGMA = 1.5
_GK = cv2.getGaussianKernel(_SSIM_WIN, _SSIM_SIGMA)
_HALF = _SSIM_WIN // 2


def _win_mean(img):
    # separable Gaussian, cropped to the valid region
    out = cv2.sepFilter2D(img, cv2.CV_64F, _GK, _GK, borderType=cv2.BORDER_CONSTANT)
    return out[_HALF:-_HALF, _HALF:-_HALF]


def _ssim_stats(a, b):
    if a.shape[0] < _SSIM_WIN or a.shape[1] < _SSIM_WIN:
        raise ImageTooSmall(f"{a.shape} smaller than {_SSIM_WIN}x{_SSIM_WIN} window")
    c1 = _SSIM_K1 ** 2
    c2 = _SSIM_K2 ** 2
    mu1, mu2 = _win_mean(a), _win_mean(b)
    s11 = _win_mean(a * a) - mu1 * mu1
    s22 = _win_mean(b * b) - mu2 * mu2
    s12 = _win_mean(a * b) - mu1 * mu2
    l_map = (2 * mu1 * mu2 + c1) / (mu1 * mu1 + mu2 * mu2 + c1)
    cs_map = (2 * s12 + c2) / (s11 + s22 + c2)
    return l_map, cs_map


def ssim(test, ref, peak_luminance=None) -> float:
    test, ref = _check_pair(test, ref)
    l_map, cs_map = _ssim_stats(luma(test), luma(ref))
    return float(np.mean(l_map * cs_map))


MS_SSIM_WEIGHTS = np.array([0.0448, 0.2856, 0.3001, 0.2363, 0.1333])


def _downsample2(img):
    h, w = img.shape
    img = img[: h - h % 2, : w - w % 2]
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def ms_ssim(test, ref, peak_luminance=None) -> float:
    """Five-scale MS-SSIM; contrast-structure terms at every scale, the
    luminance term only at the coarsest; negative terms clamped at 0."""
    test, ref = _check_pair(test, ref)
    a, b = luma(test), luma(ref)
    n_scales = len(MS_SSIM_WEIGHTS)
    cs_vals = []
    l_final = 1.0
    for j in range(n_scales):
        l_map, cs_map = _ssim_stats(a, b)  # raises ImageTooSmall if undersized
        cs_vals.append(max(float(np.mean(cs_map)), 0.0))
        if j == n_scales - 1:
            l_final = max(float(np.mean(l_map)), 0.0)
        else:
            a, b = _downsample2(a), _downsample2(b)
    score = l_final ** MS_SSIM_WEIGHTS[-1]
    for w, v in zip(MS_SSIM_WEIGHTS, cs_vals):
        score *= v ** w
    return float(score)


# ---------------------------------------------------------------------------
# GMSD

# Prewitt kernels scaled by 1/3; T = 170 on a 0..255 intensity scale, which
# equals 170/255^2 on [0,1] (the similarity map is invariant to this pairing).
_PREWITT_X = np.array([[1.0, 0.0, -1.0]] * 3) / 3.0
_PREWITT_Y = _PREWITT_X.T
_GMSD_T = 170.0 / (255.0 ** 2)


def _avg_pool2(img):
    h, w = img.shape
    img = img[: h - h % 2, : w - w % 2]
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def _grad_mag(img):
    gx = cv2.filter2D(img, cv2.CV_64F, cv2.flip(_PREWITT_X, -1), borderType=cv2.BORDER_CONSTANT)
    gy = cv2.filter2D(img, cv2.CV_64F, cv2.flip(_PREWITT_Y, -1), borderType=cv2.BORDER_CONSTANT)
    return np.sqrt(gx * gx + gy * gy)


def gmsd(test, ref, peak_luminance=None) -> float:
    test, ref = _check_pair(test, ref)
    a = _avg_pool2(luma(test))
    b = _avg_pool2(luma(ref))
    ga, gb = _grad_mag(a), _grad_mag(b)
    gms = (2.0 * ga * gb + _GMSD_T) / (ga * ga + gb * gb + _GMSD_T)
    return float(np.std(gms))


# ---------------------------------------------------------------------------
# color difference metrics

D65_WHITE_XYZ = SRGB_TO_XYZ @ np.ones(3)


def srgb_to_lab(img) -> np.ndarray:
    """Encoded sRGB [0,1] -> CIELAB (D65 white), (H, W, 3)."""
    xyz = srgb_eotf(img) @ SRGB_TO_XYZ.T
    xyz_n = xyz / D65_WHITE_XYZ
    eps = 216.0 / 24389.0
    kappa = 24389.0 / 27.0
    f = np.where(xyz_n > eps, np.cbrt(xyz_n), (kappa * xyz_n + 16.0) / 116.0)
    L = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


def ciede2000_lab(lab1, lab2) -> np.ndarray:
    """Pixelwise CIEDE2000 between Lab arrays (unit weights)."""
    L1, a1, b1 = lab1[..., 0], lab1[..., 1], lab1[..., 2]
    L2, a2, b2 = lab2[..., 0], lab2[..., 1], lab2[..., 2]
    C1 = np.hypot(a1, b1)
    C2 = np.hypot(a2, b2)
    C_bar = 0.5 * (C1 + C2)
    c7 = C_bar ** 7
    G = 0.5 * (1.0 - np.sqrt(c7 / (c7 + 25.0 ** 7)))
    a1p = (1.0 + G) * a1
    a2p = (1.0 + G) * a2
    C1p = np.hypot(a1p, b1)
    C2p = np.hypot(a2p, b2)
    h1p = np.degrees(np.arctan2(b1, a1p)) % 360.0
    h2p = np.degrees(np.arctan2(b2, a2p)) % 360.0
    h1p = np.where((b1 == 0) & (a1p == 0), 0.0, h1p)
    h2p = np.where((b2 == 0) & (a2p == 0), 0.0, h2p)

    dLp = L2 - L1
    dCp = C2p - C1p
    zero_c = (C1p * C2p) == 0
    dh = h2p - h1p
    dh = np.where(dh > 180.0, dh - 360.0, dh)
    dh = np.where(dh < -180.0, dh + 360.0, dh)
    dh = np.where(zero_c, 0.0, dh)
    dHp = 2.0 * np.sqrt(C1p * C2p) * np.sin(np.radians(dh) / 2.0)

    Lbp = 0.5 * (L1 + L2)
    Cbp = 0.5 * (C1p + C2p)
    hsum = h1p + h2p
    hdiff = np.abs(h1p - h2p)
    hbp = np.where(
        zero_c,
        hsum,
        np.where(
            hdiff <= 180.0,
            0.5 * hsum,
            np.where(hsum < 360.0, 0.5 * (hsum + 360.0), 0.5 * (hsum - 360.0)),
        ),
    )
    T = (
        1.0
        - 0.17 * np.cos(np.radians(hbp - 30.0))
        + 0.24 * np.cos(np.radians(2.0 * hbp))
        + 0.32 * np.cos(np.radians(3.0 * hbp + 6.0))
        - 0.20 * np.cos(np.radians(4.0 * hbp - 63.0))
    )
    d_theta = 30.0 * np.exp(-(((hbp - 275.0) / 25.0) ** 2))
    cbp7 = Cbp ** 7
    RC = 2.0 * np.sqrt(cbp7 / (cbp7 + 25.0 ** 7))
    lb2 = (Lbp - 50.0) ** 2
    SL = 1.0 + 0.015 * lb2 / np.sqrt(20.0 + lb2)
    SC = 1.0 + 0.045 * Cbp
    SH = 1.0 + 0.015 * Cbp * T
    RT = -np.sin(np.radians(2.0 * d_theta)) * RC
    return np.sqrt(
        (dLp / SL) ** 2
        + (dCp / SC) ** 2
        + (dHp / SH) ** 2
        + RT * (dCp / SC) * (dHp / SH)
    )


def ciede2000(test, ref, peak_luminance=None) -> float:
    test, ref = _check_pair(test, ref)
    return float(np.mean(ciede2000_lab(srgb_to_lab(test), srgb_to_lab(ref))))


def hyab(test, ref, peak_luminance=None) -> float:
    """Mean hybrid Lab distance: |dL*| + euclidean chroma-plane distance."""
    test, ref = _check_pair(test, ref)
    d = srgb_to_lab(test) - srgb_to_lab(ref)
    return float(np.mean(np.abs(d[..., 0]) + np.hypot(d[..., 1], d[..., 2])))


# ICtCp per ITU-R BT.2124: linear Rec.709 -> Rec.2020 -> LMS -> PQ -> ICtCp.
_XYZ_TO_2020 = np.array(
    [
        [1.7166511879712674, -0.3556707837763924, -0.2533662813736599],
        [-0.6666843518324892, 1.6164812366349395, 0.0157685458139111],
        [0.0176398574453108, -0.0427706132578085, 0.9421031212354738],
    ]
)
_RGB2020_TO_LMS = np.array(
    [[1688.0, 2146.0, 262.0], [683.0, 2951.0, 462.0], [99.0, 309.0, 3688.0]]
) / 4096.0
_LMS_TO_ICTCP = np.array(
    [
        [2048.0, 2048.0, 0.0],
        [6610.0, -13613.0, 7003.0],
        [17933.0, -17390.0, -543.0],
    ]
) / 4096.0
_PQ_M1 = 2610.0 / 16384.0
_PQ_M2 = 2523.0 / 4096.0 * 128.0
_PQ_C1 = 3424.0 / 4096.0
_PQ_C2 = 2413.0 / 4096.0 * 32.0
_PQ_C3 = 2392.0 / 4096.0 * 32.0


def _pq_encode(lum_abs):
    y = np.clip(lum_abs / 10000.0, 0.0, 1.0) ** _PQ_M1
    return ((_PQ_C1 + _PQ_C2 * y) / (1.0 + _PQ_C3 * y)) ** _PQ_M2


def _ictcp(img, peak_luminance):
    rgb_lin = srgb_eotf(img)  # display-relative linear Rec.709
    xyz = rgb_lin @ SRGB_TO_XYZ.T
    rgb2020 = xyz @ _XYZ_TO_2020.T
    lms = np.clip(rgb2020 @ _RGB2020_TO_LMS.T, 0.0, None)
    lms_pq = _pq_encode(lms * peak_luminance)
    return lms_pq @ _LMS_TO_ICTCP.T


def ictcp_de(test, ref, peak_luminance=100.0) -> float:
    """Mean ITP color difference: 720 * sqrt(dI^2 + (0.5 dCt)^2 + dCp^2)."""
    test, ref = _check_pair(test, ref)
    d = _ictcp(test, peak_luminance) - _ictcp(ref, peak_luminance)
    de = 720.0 * np.sqrt(d[..., 0] ** 2 + (0.5 * d[..., 1]) ** 2 + d[..., 2] ** 2)
    return float(np.mean(de))


# ---------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class MetricDescriptor:
    name: str
    input_space: str  # encoded_srgb | linear_luminance | lab
    supports_video: bool
    higher_is_better: bool
    is_color: bool


NATIVE_METRICS = {
    "psnr_y": (MetricDescriptor("psnr_y", "encoded_srgb", False, True, False), psnr_y),
    "ssim": (MetricDescriptor("ssim", "encoded_srgb", False, True, False), ssim),
    "ms_ssim": (MetricDescriptor("ms_ssim", "encoded_srgb", False, True, False), ms_ssim),
    "gmsd": (MetricDescriptor("gmsd", "encoded_srgb", False, False, False), gmsd),
    "ciede2000": (MetricDescriptor("ciede2000", "lab", False, False, True), ciede2000),
    "hyab": (MetricDescriptor("hyab", "lab", False, False, True), hyab),
    "ictcp_de": (
        MetricDescriptor("ictcp_de", "linear_luminance", False, False, True),
        ictcp_de,
    ),
}


def descriptor(name: str) -> MetricDescriptor:
    return NATIVE_METRICS[name][0]


def compute(name: str, test, ref, peak_luminance=100.0) -> float:
    return NATIVE_METRICS[name][1](test, ref, peak_luminance=peak_luminance)
