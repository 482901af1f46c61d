"""16-bit PNG I/O for stimuli: stills as single files, video as frame
directories (frame_000000.png, ...), each stimulus accompanied by a JSON
manifest carrying the StimulusSpec and encoding provenance.

OpenCV is used for the PNG codec (byte-deterministic for fixed input;
imageio/Pillow cannot write 16-bit RGB). Channel order is swapped to/from
BGR at the boundary. Achromatic frames (R=G=B exactly) are stored as
single-channel PNGs to cut disk use; readers always return (H, W, 3).
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import cv2
import numpy as np

from .colorimetry import DisplayModel, linear_to_encoded
from .errors import ParseError
from .stimgen import LinearStimulus, StimulusSpec

_PNG_FLAGS = [cv2.IMWRITE_PNG_COMPRESSION, 6]


def write_png(path, codes: np.ndarray):
    """codes: (H, W, 3) or (H, W) uint8/uint16."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if codes.ndim == 3:
        if np.array_equal(codes[..., 0], codes[..., 1]) and np.array_equal(
            codes[..., 0], codes[..., 2]
        ):
            data = codes[..., 0]
        else:
            data = cv2.cvtColor(codes, cv2.COLOR_RGB2BGR)
    else:
        data = codes
    ok = cv2.imwrite(str(path), data, _PNG_FLAGS)
    if not ok:
        raise IOError(f"PNG write failed: {path}")


def read_png(path) -> np.ndarray:
    """Returns (H, W, 3) with the file's dtype (uint8 or uint16)."""
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise IOError(f"PNG read failed: {path}")
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    elif img.shape[2] == 4:
        img = cv2.cvtColor(img, cv2.COLOR_BGRA2RGB)
    else:
        img = cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
    return img


def frame_paths(dir_path, n_frames: int):
    d = Path(dir_path)
    return [d / f"frame_{k:06d}.png" for k in range(n_frames)]


def write_stimulus(stim: LinearStimulus, path, dm: DisplayModel) -> dict:
    """Encode and write a stimulus; returns its manifest dict.

    Stills go to <path>.png; videos to directory <path>/ with one PNG per
    frame. The manifest (written as <path>.json) records spec, geometry,
    display model and total clamp count.
    """
    path = Path(path)
    clamps = 0
    if stim.n_frames == 1:
        codes, c = linear_to_encoded(stim.planes[0], dm)
        clamps += c
        file_path = path.with_suffix(".png")
        write_png(file_path, codes)
        rel = file_path.name
        is_video = False
    else:
        for k, fp in enumerate(frame_paths(path, stim.n_frames)):
            codes, c = linear_to_encoded(stim.planes[k], dm)
            clamps += c
            write_png(fp, codes)
        rel = path.name
        is_video = True
        file_path = path
    manifest = {
        "spec": stim.provenance.to_json(),
        "ppd": stim.ppd,
        "fps": stim.fps,
        "n_frames": stim.n_frames,
        "peak_luminance": dm.peak_luminance,
        "bit_depth": dm.bit_depth,
        "clamp_count": clamps,
        "seed": stim.provenance.seed,
        "is_video": is_video,
        "path": rel,
    }
    with open(str(path) + ".json", "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return manifest


def read_stimulus_codes(path) -> np.ndarray:
    """Read a stimulus written by write_stimulus: (frames, H, W, 3) codes."""
    p = Path(path)
    if p.is_dir():
        frames = sorted(p.glob("frame_*.png"))
        if not frames:
            raise IOError(f"no frames in {p}")
        return np.stack([read_png(f) for f in frames])
    if p.suffix != ".png":
        p = p.with_suffix(".png")
    return read_png(p)[None]


def read_manifest(path) -> dict:
    p = Path(path)
    if p.suffix != ".json":
        p = Path(str(p) + ".json")
    try:
        with open(p) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(str(e), path=str(p))


def spec_from_manifest(man: dict) -> StimulusSpec:
    return StimulusSpec.from_json(man["spec"])


def hash_png_tree(root) -> str:
    """SHA-256 over every PNG's bytes under root, in sorted path order."""
    import hashlib

    h = hashlib.sha256()
    root = Path(root)
    for p in sorted(root.rglob("*.png")):
        h.update(str(p.relative_to(root)).encode())
        h.update(p.read_bytes())
    return h.hexdigest()
