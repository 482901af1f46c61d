"""PNG decoding for the adapter side of the wire protocol.

Stimuli arrive as file paths: a still is one PNG, a video is a directory of
frame_*.png files. 8- and 16-bit files map linearly onto [0, 1] with full
precision (float64 before any metric sees them); no resampling ever happens,
geometry is the harness' business.
"""
from __future__ import annotations

import os
from typing import List

import cv2
import numpy as np


def _read_png(path: str) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise IOError(f"cannot read PNG: {path}")
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    elif img.shape[2] == 4:
        img = cv2.cvtColor(img, cv2.COLOR_BGRA2BGR)
    img = img[:, :, ::-1]  # BGR -> RGB
    max_code = 65535.0 if img.dtype == np.uint16 else 255.0
    return img.astype(np.float64) / max_code


def read_stimulus(path: str) -> List[np.ndarray]:
    """Frames of a stimulus in [0, 1]: [still] or the sorted video frames."""
    if os.path.isdir(path):
        names = sorted(n for n in os.listdir(path) if n.endswith(".png"))
        if not names:
            raise IOError(f"no frames in {path}")
        return [_read_png(os.path.join(path, n)) for n in names]
    return [_read_png(path)]
