"""Suite generation: lay out every stimulus a test needs on disk, with a
manifest the runner consumes.

A suite directory holds:
  suite_manifest.json      cell index for the whole test
  stimuli/                 one PNG (or frame directory) per stimulus + JSON

Cell kinds: "grid" (axis x contrast), "strip" (exact threshold-multiple
contrasts for the alignment score), "match_ref" (reference-contrast stimuli
for frequency matching), "triplet" (color-matching stimuli per direction).
References are deduplicated: cells point at a shared reference wherever the
reference does not depend on the swept value.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np

from .colorimetry import DisplayModel
from .errors import OutOfDomain
from .evaluation import default_multipliers
from .human_reference import ReferencePack
from .pngio import write_stimulus
from .stimgen import (
    MATCH_SF_REF_FREQ,
    TESTS,
    gen_pair,
    match_sf_ref_contrasts,
)

FORMAT_VERSION = 1
STIM_DIR = "stimuli"


@dataclass(frozen=True)
class SuiteConfig:
    axis_n: Optional[int] = None  # None = test default
    contrast_n: Optional[int] = None
    fps: float = 120.0
    duration: float = 1.0  # seconds, video tests only
    include_strips: bool = True
    seed: Optional[int] = None  # overrides the built-in noise seed when set

    def __post_init__(self):
        if self.axis_n is not None and self.axis_n < 2:
            raise ValueError("axis_n must be >= 2")
        if self.contrast_n is not None and self.contrast_n < 2:
            raise ValueError("contrast_n must be >= 2")
        if self.fps <= 0 or self.duration <= 0:
            raise ValueError("fps and duration must be positive")

    def to_json(self) -> dict:
        return {
            "axis_n": self.axis_n,
            "contrast_n": self.contrast_n,
            "fps": self.fps,
            "duration": self.duration,
            "include_strips": self.include_strips,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, d: dict) -> "SuiteConfig":
        return cls(
            axis_n=d.get("axis_n"),
            contrast_n=d.get("contrast_n"),
            fps=d.get("fps", 120.0),
            duration=d.get("duration", 1.0),
            include_strips=d.get("include_strips", True),
            seed=d.get("seed"),
        )


def _apply_seed(spec, config: SuiteConfig):
    if config.seed is not None and spec.seed is not None:
        return replace(spec, seed=config.seed)
    return spec


def _ref_key(test, ai: int) -> str:
    """References depend on the axis only when the axis changes the
    background (luminance sweep) or the masker (masking tests)."""
    if test.kind == "masking" or test.axis == "luminance":
        return f"a{ai:02d}"
    return "shared"


class _RefStore:
    def __init__(self, stim_dir: str, dm: DisplayModel):
        self.stim_dir = stim_dir
        self.dm = dm
        self.written = {}

    def ensure(self, key: str, ref_stim) -> dict:
        """Write the reference once per key; returns {path, clamp_count}."""
        if key not in self.written:
            base = os.path.join(self.stim_dir, f"ref_{key}")
            man = write_stimulus(ref_stim, base, self.dm)
            self.written[key] = {
                "base": f"{STIM_DIR}/ref_{key}",
                "clamp_count": man["clamp_count"],
            }
        return self.written[key]


def _write_test(stim, stim_dir: str, name: str, dm: DisplayModel) -> dict:
    man = write_stimulus(stim, os.path.join(stim_dir, name), dm)
    return {"base": f"{STIM_DIR}/{name}", "clamp_count": man["clamp_count"]}


def build_suite(
    test_id: str,
    out_dir: str,
    pack: Optional[ReferencePack] = None,
    dm: Optional[DisplayModel] = None,
    config: Optional[SuiteConfig] = None,
) -> dict:
    """Generate all stimuli for one test into out_dir and return (and write)
    the suite manifest."""
    if test_id not in TESTS:
        raise KeyError(f"unknown test id {test_id!r}")
    test = TESTS[test_id]
    dm = dm or DisplayModel()
    config = config or SuiteConfig()
    stim_dir = os.path.join(out_dir, STIM_DIR)
    os.makedirs(stim_dir, exist_ok=True)
    refs = _RefStore(stim_dir, dm)
    cells: List[dict] = []

    def make_pair(axis_value: float, contrast: float):
        spec = test.spec_for(axis_value, contrast, fps=config.fps, duration=config.duration)
        spec = _apply_seed(spec, config)
        spec.validate()
        return gen_pair(spec)

    if test.kind == "matching_color":
        _build_color_cells(test, pack, refs, stim_dir, dm, config, cells)
        axis_values = np.asarray([test.spatial_freq])
        contrast_values = None
    else:
        axis_values = test.axis_values(config.axis_n)
        contrast_values = test.contrast_values(config.contrast_n)
        for ai, a in enumerate(axis_values):
            for ci, c in enumerate(contrast_values):
                t_stim, r_stim = make_pair(float(a), float(c))
                key = _ref_key(test, ai)
                ref_info = refs.ensure(key, r_stim)
                t_info = _write_test(t_stim, stim_dir, f"grid_a{ai:02d}_c{ci:02d}", dm)
                cells.append(
                    {
                        "kind": "grid",
                        "ai": ai,
                        "ci": ci,
                        "axis_value": float(a),
                        "contrast": float(c),
                        "test": t_info["base"],
                        "ref": ref_info["base"],
                        "clamp_count_test": t_info["clamp_count"],
                        "clamp_count_ref": ref_info["clamp_count"],
                        "skipped": None,
                    }
                )

        if config.include_strips and test.kind in ("detection", "masking", "flicker"):
            _build_strip_cells(test, pack, refs, stim_dir, dm, config, axis_values, cells)

        if test.kind == "matching_freq":
            _build_match_ref_cells(test, pack, refs, stim_dir, dm, config, cells)

    manifest = {
        "format_version": FORMAT_VERSION,
        "test_id": test_id,
        "kind": test.kind,
        "axis": test.axis,
        "direction": test.direction,
        "is_video": test.is_video,
        "display": {
            "peak_luminance": dm.peak_luminance,
            "bit_depth": dm.bit_depth,
        },
        "config": config.to_json(),
        "axis_values": axis_values.tolist(),
        "contrast_values": None if contrast_values is None else contrast_values.tolist(),
        "multipliers": default_multipliers().tolist(),
        "pack_source": _pack_source(pack),
        "cells": cells,
    }
    with open(os.path.join(out_dir, "suite_manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return manifest


def _pack_source(pack: Optional[ReferencePack]) -> Optional[str]:
    if pack is None:
        return None
    for curve in pack.curves.values():
        if curve is not None:
            return curve.source
    if pack.matching_sf is not None:
        return pack.matching_sf.source
    if pack.matching_color is not None:
        return pack.matching_color.source
    return "empty"


def _build_strip_cells(test, pack, refs, stim_dir, dm, config, axis_values, cells):
    curve = pack.curve_for(test.test_id) if pack is not None else None
    multipliers = default_multipliers()
    lo, hi = test.contrast_range
    for ai, a in enumerate(axis_values):
        if curve is None:
            cells.append(
                {"kind": "strip", "ai": ai, "axis_value": float(a), "skipped": "no reference curve"}
            )
            continue
        try:
            thr = curve.threshold_at(float(a))
        except OutOfDomain:
            cells.append(
                {
                    "kind": "strip",
                    "ai": ai,
                    "axis_value": float(a),
                    "skipped": "axis value outside curve domain",
                }
            )
            continue
        for mi, m in enumerate(multipliers):
            c = float(m) * thr
            record = {
                "kind": "strip",
                "ai": ai,
                "mi": mi,
                "axis_value": float(a),
                "multiplier": float(m),
                "contrast": c,
                "skipped": None,
            }
            if not (lo <= c <= hi):
                record["skipped"] = "contrast outside test range"
                cells.append(record)
                continue
            spec = test.spec_for(float(a), c, fps=config.fps, duration=config.duration)
            spec = _apply_seed(spec, config)
            spec.validate()
            t_stim, r_stim = gen_pair(spec)
            ref_info = refs.ensure(_ref_key(test, ai), r_stim)
            t_info = _write_test(t_stim, stim_dir, f"strip_a{ai:02d}_m{mi:02d}", dm)
            record.update(
                test=t_info["base"],
                ref=ref_info["base"],
                clamp_count_test=t_info["clamp_count"],
                clamp_count_ref=ref_info["clamp_count"],
            )
            cells.append(record)


def _build_match_ref_cells(test, pack, refs, stim_dir, dm, config, cells):
    if pack is not None and pack.matching_sf is not None:
        ref_contrasts = np.asarray(pack.matching_sf.ref_contrasts, dtype=np.float64)
    else:
        ref_contrasts = match_sf_ref_contrasts()
    for k, rc in enumerate(ref_contrasts):
        spec = test.spec_for(MATCH_SF_REF_FREQ, float(rc), fps=config.fps, duration=config.duration)
        spec.validate()
        t_stim, r_stim = gen_pair(spec)
        ref_info = refs.ensure("shared", r_stim)
        t_info = _write_test(t_stim, stim_dir, f"mref_r{k:02d}", dm)
        cells.append(
            {
                "kind": "match_ref",
                "k": k,
                "axis_value": MATCH_SF_REF_FREQ,
                "contrast": float(rc),
                "test": t_info["base"],
                "ref": ref_info["base"],
                "clamp_count_test": t_info["clamp_count"],
                "clamp_count_ref": ref_info["clamp_count"],
                "skipped": None,
            }
        )


_TRIPLET_DIRECTIONS = (("ach", "Ach"), ("rg", "RG"), ("yv", "YV"))


def _build_color_cells(test, pack, refs, stim_dir, dm, config, cells):
    if pack is None or pack.matching_color is None:
        cells.append({"kind": "triplet", "skipped": "no color matching data"})
        return
    trip = pack.matching_color
    columns = {"ach": trip.ach, "rg": trip.rg, "yv": trip.yv}
    for k in range(len(trip)):
        for di, (tag, direction) in enumerate(_TRIPLET_DIRECTIONS):
            contrast = float(columns[tag][k])
            spec = test.spec_for(test.spatial_freq, contrast, fps=config.fps, duration=config.duration)
            spec = replace(spec, direction=direction)
            spec.validate()
            t_stim, r_stim = gen_pair(spec)
            ref_info = refs.ensure("shared", r_stim)
            t_info = _write_test(t_stim, stim_dir, f"trip_t{k:02d}_{tag}", dm)
            cells.append(
                {
                    "kind": "triplet",
                    "k": k,
                    "di": di,
                    "direction": direction,
                    "axis_value": float(test.spatial_freq),
                    "contrast": contrast,
                    "test": t_info["base"],
                    "ref": ref_info["base"],
                    "clamp_count_test": t_info["clamp_count"],
                    "clamp_count_ref": ref_info["clamp_count"],
                    "skipped": None,
                }
            )


def load_suite_manifest(suite_dir: str) -> dict:
    path = os.path.join(suite_dir, "suite_manifest.json")
    with open(path) as f:
        man = json.load(f)
    if man.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported suite format in {path}")
    return man
