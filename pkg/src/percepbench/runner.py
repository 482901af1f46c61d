"""Evaluate a metric over a generated suite and assemble response surfaces.

Three scorer families implement `.descriptor` and `.score_items(items)`:

* NativeScorer: built-in metrics on decoded pixel data (video = frame mean).
* OracleScorer: analytic probe q = contrast / threshold from the cell record
  and a reference curve; never touches pixels. Output is quantized to 9
  significant digits so stimuli designed at equal threshold multiples tie
  exactly in rank statistics.
* Adapter scorers (metric_adapter module) satisfy the same protocol.

Every cell failure turns into a NaN plus an error entry, never an abort.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import OutOfDomain, PercepBenchError
from .evaluation import ColorResponseSet, ResponseSurface, round_sig
from .human_reference import ReferencePack
from .metrics_native import NATIVE_METRICS, MetricDescriptor
from .pngio import read_manifest, read_stimulus_codes
from .suites import load_suite_manifest

ORACLE_METRIC_NAME = "oracle_q"


@dataclass
class WorkItem:
    cell: dict
    test_base: str  # absolute path without extension
    ref_base: str
    peak_luminance: float
    bit_depth: int


def _pixel_path(base: str) -> str:
    man = read_manifest(base + ".json")
    return os.path.join(os.path.dirname(base), man["path"])


def _decode(base: str, bit_depth: int) -> np.ndarray:
    codes = read_stimulus_codes(_pixel_path(base))
    return codes.astype(np.float64) / float((1 << bit_depth) - 1)


class NativeScorer:
    kind = "native"

    def __init__(self, name: str, threads: int = 1):
        self.descriptor, self._fn = NATIVE_METRICS[name]
        self.threads = max(1, int(threads))

    def _score_pair(self, test: np.ndarray, ref: np.ndarray, peak: float) -> float:
        vals = [
            self._fn(test[k], ref[k], peak_luminance=peak) for k in range(test.shape[0])
        ]
        return float(np.mean(vals))

    def score_items(self, items: List[WorkItem]) -> Tuple[np.ndarray, List[str]]:
        scores = np.full(len(items), np.nan)
        errors: List[str] = []
        # group by reference so each shared reference is decoded once
        groups: Dict[str, List[int]] = {}
        for i, item in enumerate(items):
            groups.setdefault(item.ref_base, []).append(i)

        def run_one(i: int, ref_arr: np.ndarray):
            item = items[i]
            try:
                test_arr = _decode(item.test_base, item.bit_depth)
                if test_arr.shape != ref_arr.shape:
                    raise PercepBenchError(
                        f"test/ref frame shape mismatch: {test_arr.shape} vs {ref_arr.shape}"
                    )
                scores[i] = self._score_pair(test_arr, ref_arr, item.peak_luminance)
            except Exception as exc:  # recorded, not fatal
                errors.append(f"{os.path.basename(item.test_base)}: {exc}")

        for ref_base, idxs in groups.items():
            try:
                ref_arr = _decode(ref_base, items[idxs[0]].bit_depth)
            except Exception as exc:
                errors.append(f"{os.path.basename(ref_base)}: {exc}")
                continue
            if self.threads > 1:
                with ThreadPoolExecutor(max_workers=self.threads) as ex:
                    list(ex.map(lambda i: run_one(i, ref_arr), idxs))
            else:
                for i in idxs:
                    run_one(i, ref_arr)
        return scores, errors


class OracleScorer:
    kind = "oracle"

    def __init__(self, pack: ReferencePack, test_id: str):
        curve = pack.curve_for(test_id) if test_id in pack.curves else None
        if curve is None:
            raise ValueError(
                f"oracle metric needs a threshold curve for {test_id!r}"
            )
        self.curve = curve
        self.descriptor = MetricDescriptor(
            ORACLE_METRIC_NAME,
            input_space="linear_luminance",
            supports_video=True,
            higher_is_better=False,
            is_color=True,
        )

    def score_items(self, items: List[WorkItem]) -> Tuple[np.ndarray, List[str]]:
        scores = np.full(len(items), np.nan)
        errors: List[str] = []
        for i, item in enumerate(items):
            cell = item.cell
            try:
                thr = self.curve.threshold_at(float(cell["axis_value"]))
                scores[i] = round_sig(float(cell["contrast"]) / thr, 9)
            except (OutOfDomain, KeyError) as exc:
                errors.append(f"cell {i}: {exc}")
        return scores, errors


def native_scorer(name: str, threads: int = 1) -> NativeScorer:
    return NativeScorer(name, threads=threads)


def _items_for(manifest: dict, suite_dir: str, kinds) -> List[Tuple[int, dict]]:
    out = []
    for idx, cell in enumerate(manifest["cells"]):
        if cell["kind"] in kinds and not cell.get("skipped"):
            out.append((idx, cell))
    return out


def _to_work(cells, suite_dir: str, manifest: dict) -> List[WorkItem]:
    disp = manifest["display"]
    return [
        WorkItem(
            cell=cell,
            test_base=os.path.join(suite_dir, cell["test"]),
            ref_base=os.path.join(suite_dir, cell["ref"]),
            peak_luminance=float(disp["peak_luminance"]),
            bit_depth=int(disp["bit_depth"]),
        )
        for _, cell in cells
    ]


def suite_requirements(manifest: dict):
    """(needs_video, needs_color) a metric must satisfy for this suite."""
    needs_video = bool(manifest["is_video"])
    needs_color = manifest["direction"] != "Ach" or manifest["kind"] == "matching_color"
    return needs_video, needs_color


def evaluate_suite(suite_dir: str, scorer) -> object:
    """Run a scorer over every live cell; returns a ResponseSurface (grid
    tests) or a ColorResponseSet (color matching). Attaches the error list
    as `.errors` on the returned object."""
    manifest = load_suite_manifest(suite_dir)
    desc = scorer.descriptor
    needs_video, needs_color = suite_requirements(manifest)
    if needs_video and not desc.supports_video:
        raise ValueError(f"{desc.name} does not support video suites")
    if needs_color and not desc.is_color:
        raise ValueError(f"{desc.name} cannot score chromatic stimuli")

    if manifest["kind"] == "matching_color":
        return _evaluate_color(manifest, suite_dir, scorer)
    return _evaluate_grid(manifest, suite_dir, scorer)


def _evaluate_grid(manifest: dict, suite_dir: str, scorer) -> ResponseSurface:
    axis_values = np.asarray(manifest["axis_values"], dtype=np.float64)
    contrast_values = np.asarray(manifest["contrast_values"], dtype=np.float64)
    grid_cells = _items_for(manifest, suite_dir, ("grid",))
    strip_cells = _items_for(manifest, suite_dir, ("strip",))
    mref_cells = _items_for(manifest, suite_dir, ("match_ref",))

    all_cells = grid_cells + strip_cells + mref_cells
    work = _to_work(all_cells, suite_dir, manifest)
    scores, errors = scorer.score_items(work)

    grid = np.full((axis_values.size, contrast_values.size), np.nan)
    n_grid = len(grid_cells)
    for (idx, cell), s in zip(grid_cells, scores[:n_grid]):
        grid[cell["ai"], cell["ci"]] = s

    strip_mult = None
    strip_contrasts = None
    strip_scores = None
    if any(c["kind"] == "strip" for c in manifest["cells"]):
        mult = np.asarray(manifest["multipliers"], dtype=np.float64)
        strip_mult = mult
        strip_contrasts = np.full((axis_values.size, mult.size), np.nan)
        strip_scores = np.full((axis_values.size, mult.size), np.nan)
        for (idx, cell), s in zip(
            strip_cells, scores[n_grid : n_grid + len(strip_cells)]
        ):
            strip_contrasts[cell["ai"], cell["mi"]] = cell["contrast"]
            strip_scores[cell["ai"], cell["mi"]] = s

    ref_contrasts = None
    ref_scores = None
    if mref_cells:
        ks = [cell["k"] for _, cell in mref_cells]
        ref_contrasts = np.full(max(ks) + 1, np.nan)
        ref_scores = np.full(max(ks) + 1, np.nan)
        for (idx, cell), s in zip(mref_cells, scores[n_grid + len(strip_cells) :]):
            ref_contrasts[cell["k"]] = cell["contrast"]
            ref_scores[cell["k"]] = s

    surface = ResponseSurface(
        test_id=manifest["test_id"],
        metric=scorer.descriptor.name,
        higher_is_better=scorer.descriptor.higher_is_better,
        axis_values=axis_values,
        contrast_values=contrast_values,
        scores=grid,
        strip_multipliers=strip_mult,
        strip_contrasts=strip_contrasts,
        strip_scores=strip_scores,
        ref_contrasts=ref_contrasts,
        ref_scores=ref_scores,
    )
    surface.errors = errors
    return surface


def _evaluate_color(manifest: dict, suite_dir: str, scorer) -> ColorResponseSet:
    cells = _items_for(manifest, suite_dir, ("triplet",))
    if not cells:
        raise ValueError("color matching suite has no triplet cells")
    work = _to_work(cells, suite_dir, manifest)
    scores, errors = scorer.score_items(work)
    n = max(cell["k"] for _, cell in cells) + 1
    q = np.full((n, 3), np.nan)
    for (idx, cell), s in zip(cells, scores):
        q[cell["k"], cell["di"]] = s
    resp = ColorResponseSet(
        test_id=manifest["test_id"],
        metric=scorer.descriptor.name,
        higher_is_better=scorer.descriptor.higher_is_better,
        q=q,
    )
    resp.errors = errors
    return resp
