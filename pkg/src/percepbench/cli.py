"""Pipeline orchestration: gen -> run -> score -> report subcommands.

One config file (TOML or JSON, same keys) drives every stage. Outputs land
under `output_root` as

    suites/<test_id>/            stimuli + suite manifest
    surfaces/<test_id>/<metric>/ surface.json or skipped.json
    scores/<test_id>/<metric>/   score.json (+ matches.json for matching)
    report/                      HTML/SVG/CSV bundle

Stages are idempotent (re-running with unchanged inputs rewrites identical
bytes); `--resume` skips outputs whose recorded input hash still matches.
Exit codes: 0 success, 2 config or manifest error, 3 failures under
`--strict`. Worker count comes from the config or PERCEPBENCH_THREADS.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

try:
    import tomllib as _toml
except ModuleNotFoundError:  # python < 3.11
    import tomli as _toml

from .colorimetry import DisplayModel
from .errors import (
    ConfigError,
    HandshakeFailed,
    ManifestMismatch,
    NoOverlap,
    NoValidSamples,
    ParseError,
)
from .contour_report import render_report
from .evaluation import (
    alignment_score,
    color_score_or_degenerate,
    matching_rmse_freq,
    solve_matches,
)
from .human_reference import ReferencePack, default_pack_dir, load_reference_pack
from .metric_adapter import AdapterClient, AdapterScorer
from .metrics_native import NATIVE_METRICS
from .runner import (
    ORACLE_METRIC_NAME,
    NativeScorer,
    OracleScorer,
    evaluate_suite,
    suite_requirements,
)
from .stimgen import TESTS
from .suites import SuiteConfig, build_suite, load_suite_manifest

CONFIG_SCHEMA_VERSION = 1

_TOP_KEYS = {
    "schema_version", "output_root", "tests", "axis_n", "contrast_n",
    "fps", "duration", "include_strips", "seed", "metrics", "adapters",
    "reference_pack", "threads", "display",
}
_DISPLAY_KEYS = {"peak_luminance", "bit_depth"}


@dataclass(frozen=True)
class RunConfig:
    schema_version: int = CONFIG_SCHEMA_VERSION
    output_root: str = "out"
    tests: Tuple[str, ...] = ("all",)
    axis_n: Optional[int] = None
    contrast_n: Optional[int] = None
    fps: float = 120.0
    duration: float = 1.0
    include_strips: bool = True
    seed: Optional[int] = None
    metrics: Tuple[str, ...] = ("psnr_y",)
    adapters: Tuple[str, ...] = ()
    reference_pack: str = "default"
    threads: int = 0
    peak_luminance: float = 100.0
    bit_depth: int = 16

    def __post_init__(self):
        if self.schema_version != CONFIG_SCHEMA_VERSION:
            raise ConfigError(
                f"unsupported schema_version {self.schema_version}; "
                f"this build reads version {CONFIG_SCHEMA_VERSION}"
            )
        unknown_tests = [
            t for t in self.tests if t != "all" and t not in TESTS
        ]
        if unknown_tests:
            raise ConfigError(
                f"unknown tests {unknown_tests}; known: {sorted(TESTS)} or 'all'"
            )
        bad_metrics = [
            m for m in self.metrics
            if m not in NATIVE_METRICS and m != ORACLE_METRIC_NAME
        ]
        if bad_metrics:
            raise ConfigError(
                f"unknown metrics {bad_metrics}; known: "
                f"{sorted(NATIVE_METRICS)} + ['{ORACLE_METRIC_NAME}']"
            )
        if self.threads < 0:
            raise ConfigError("threads must be >= 0")

    @property
    def test_ids(self) -> List[str]:
        if "all" in self.tests:
            return list(TESTS)
        return list(self.tests)

    def suite_config(self) -> SuiteConfig:
        return SuiteConfig(
            axis_n=self.axis_n,
            contrast_n=self.contrast_n,
            fps=self.fps,
            duration=self.duration,
            include_strips=self.include_strips,
            seed=self.seed,
        )

    def display_model(self) -> DisplayModel:
        return DisplayModel(
            peak_luminance=self.peak_luminance, bit_depth=self.bit_depth
        )

    def n_threads(self) -> int:
        if self.threads > 0:
            return self.threads
        env = os.environ.get("PERCEPBENCH_THREADS", "")
        try:
            n = int(env) if env else 1
        except ValueError:
            raise ConfigError(f"PERCEPBENCH_THREADS must be an integer, got {env!r}")
        return max(1, n)

    def root(self) -> Path:
        return Path(self.output_root)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".json":
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config parse error in {path}: {exc}")
    else:
        try:
            with open(path, "rb") as f:
                data = _toml.load(f)
        except _toml.TOMLDecodeError as exc:
            raise ConfigError(f"config parse error in {path}: {exc}")
    return config_from_dict(data)


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a table/object at the top level")
    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}; allowed: {sorted(_TOP_KEYS)}")
    display = data.get("display", {})
    if not isinstance(display, dict):
        raise ConfigError("display must be a table")
    unknown = sorted(set(display) - _DISPLAY_KEYS)
    if unknown:
        raise ConfigError(
            f"unknown display keys {unknown}; allowed: {sorted(_DISPLAY_KEYS)}"
        )
    kwargs = {k: v for k, v in data.items() if k != "display"}
    for key in ("tests", "metrics", "adapters"):
        if key in kwargs:
            v = kwargs[key]
            if isinstance(v, str) or not isinstance(v, (list, tuple)):
                raise ConfigError(f"{key} must be an array of strings")
            kwargs[key] = tuple(str(x) for x in v)
    if "peak_luminance" in display:
        kwargs["peak_luminance"] = float(display["peak_luminance"])
    if "bit_depth" in display:
        kwargs["bit_depth"] = int(display["bit_depth"])
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc))


def load_pack(cfg: RunConfig) -> Optional[ReferencePack]:
    name = cfg.reference_pack
    if name in ("", "none"):
        return None
    if name == "default":
        d = default_pack_dir()
        if not os.path.isdir(d):
            return None
        return load_reference_pack(d)
    if not os.path.isdir(name):
        raise ConfigError(f"reference pack directory not found: {name}")
    return load_reference_pack(name)


def _json_dump(obj, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _manifest_hash(suite_dir: Path) -> str:
    return hashlib.sha256(
        (suite_dir / "suite_manifest.json").read_bytes()
    ).hexdigest()


# ---------------------------------------------------------------------------
# stages


def cmd_gen(cfg: RunConfig, resume: bool = False) -> dict:
    pack = load_pack(cfg)
    sc = cfg.suite_config()
    dm = cfg.display_model()
    built, skipped = [], []
    for tid in cfg.test_ids:
        sdir = cfg.root() / "suites" / tid
        if (sdir / "suite_manifest.json").exists():
            if resume:
                man = load_suite_manifest(sdir)
                if man["config"] == sc.to_json() and man["display"] == {
                    "peak_luminance": dm.peak_luminance,
                    "bit_depth": dm.bit_depth,
                }:
                    skipped.append(tid)
                    continue
            shutil.rmtree(sdir)
        sdir.mkdir(parents=True, exist_ok=True)
        build_suite(tid, sdir, pack=pack, dm=dm, config=sc)
        built.append(tid)
    return {"built": built, "skipped": skipped}


def _check_suite_fresh(cfg: RunConfig, tid: str) -> Path:
    sdir = cfg.root() / "suites" / tid
    if not (sdir / "suite_manifest.json").exists():
        raise ManifestMismatch(f"no suite for {tid} under {sdir}; run `gen` first")
    man = load_suite_manifest(sdir)
    if man["config"] != cfg.suite_config().to_json():
        raise ManifestMismatch(
            f"suite {tid} was generated with a different config; re-run `gen`"
        )
    return sdir


def cmd_run(
    cfg: RunConfig,
    resume: bool = False,
    extra_adapters: Sequence[str] = (),
    only_metrics: Optional[Sequence[str]] = None,
) -> dict:
    pack = load_pack(cfg)
    root = cfg.root()
    n_errors = 0
    pairs_run, pairs_skipped, pairs_resumed = [], [], []

    adapter_cmds = list(cfg.adapters) + list(extra_adapters)
    adapter_clients: List[AdapterClient] = []
    try:
        scorer_makers = {}
        for name in cfg.metrics:
            if only_metrics and name not in only_metrics:
                continue
            scorer_makers[name] = name  # resolved per test below
        for cmd in adapter_cmds:
            client = AdapterClient(cmd)
            if only_metrics and client.descriptor.name not in only_metrics:
                client.close()
                continue
            if client.descriptor.name in scorer_makers:
                client.close()
                raise ConfigError(
                    f"duplicate metric name {client.descriptor.name!r} from adapter {cmd!r}"
                )
            adapter_clients.append(client)
            scorer_makers[client.descriptor.name] = client

        threads = cfg.n_threads()
        for tid in cfg.test_ids:
            sdir = _check_suite_fresh(cfg, tid)
            manifest = load_suite_manifest(sdir)
            in_hash = _manifest_hash(sdir)
            needs_video, needs_color = suite_requirements(manifest)
            for mname in sorted(scorer_makers):
                mdir = root / "surfaces" / tid / mname
                out_path = mdir / "surface.json"
                if resume and out_path.exists():
                    data = json.loads(out_path.read_text())
                    if data.get("input_hash") == in_hash:
                        pairs_resumed.append((tid, mname))
                        continue
                maker = scorer_makers[mname]
                if isinstance(maker, AdapterClient):
                    scorer = AdapterScorer(maker)
                elif mname == ORACLE_METRIC_NAME:
                    if pack is None or pack.curve_for(tid) is None:
                        _json_dump(
                            {"reason": "no reference curve for oracle"},
                            mdir / "skipped.json",
                        )
                        pairs_skipped.append((tid, mname))
                        continue
                    scorer = OracleScorer(pack, tid)
                else:
                    scorer = NativeScorer(mname, threads=threads)
                desc = scorer.descriptor
                reason = None
                if needs_video and not desc.supports_video:
                    reason = "metric does not support video"
                elif needs_color and not desc.is_color:
                    reason = "metric does not score chromatic stimuli"
                if reason is not None:
                    _json_dump({"reason": reason}, mdir / "skipped.json")
                    pairs_skipped.append((tid, mname))
                    continue
                result = evaluate_suite(sdir, scorer)
                data = result.to_json()
                data["errors"] = list(result.errors)
                data["input_hash"] = in_hash
                n_errors += len(result.errors)
                stale = mdir / "skipped.json"
                if stale.exists():
                    stale.unlink()
                _json_dump(data, out_path)
                pairs_run.append((tid, mname))
    finally:
        for client in adapter_clients:
            client.close()
    return {
        "run": pairs_run,
        "skipped": pairs_skipped,
        "resumed": pairs_resumed,
        "errors": n_errors,
    }


def cmd_score(cfg: RunConfig) -> dict:
    pack = load_pack(cfg)
    root = cfg.root()
    scored, skipped = [], []
    surf_root = root / "surfaces"
    for path in sorted(surf_root.glob("*/*/surface.json")):
        tid = path.parent.parent.name
        mname = path.parent.name
        out_dir = root / "scores" / tid / mname
        data = json.loads(path.read_text())
        suite_dir = root / "suites" / tid
        if (suite_dir / "suite_manifest.json").exists():
            if data.get("input_hash") not in (None, _manifest_hash(suite_dir)):
                raise ManifestMismatch(
                    f"surface {tid}/{mname} is stale; re-run `run`"
                )
        if tid not in TESTS:
            _json_dump({"reason": f"unknown test {tid}"}, out_dir / "skipped.json")
            skipped.append((tid, mname))
            continue
        kind = TESTS[tid].kind
        try:
            record = _score_one(tid, mname, kind, data, pack, out_dir)
        except (NoValidSamples, NoOverlap) as exc:
            record = {
                "metric": mname,
                "test_id": tid,
                "score_type": "alignment" if kind in ("detection", "masking", "flicker") else "matching_rmse",
                "value": None,
                "note": str(exc),
            }
        if record is None:
            skipped.append((tid, mname))
            continue
        _json_dump(record, out_dir / "score.json")
        scored.append((tid, mname))
    return {"scored": scored, "skipped": skipped}


def _score_one(tid, mname, kind, data, pack, out_dir) -> Optional[dict]:
    from .evaluation import ColorResponseSet, ResponseSurface

    if kind == "matching_color":
        resp = ColorResponseSet.from_json(data)
        return color_score_or_degenerate(resp).to_json(mname, tid)
    surface = ResponseSurface.from_json(data)
    if kind == "matching_freq":
        if pack is None or pack.matching_sf is None:
            _json_dump(
                {"reason": "no frequency matching reference data"},
                out_dir / "skipped.json",
            )
            return None
        match = solve_matches(surface)
        _json_dump(match.to_json(), out_dir / "matches.json")
        score = matching_rmse_freq(match, pack.matching_sf)
        return score.to_json(mname, tid)
    curve = pack.curve_for(tid) if pack is not None else None
    if curve is None:
        _json_dump({"reason": "no reference curve"}, out_dir / "skipped.json")
        return None
    result = alignment_score(surface, curve)
    return result.to_json(mname, tid)


def cmd_report(
    cfg: Optional[RunConfig] = None,
    results: Optional[str] = None,
    out: Optional[str] = None,
    reproducible: bool = False,
) -> dict:
    pack = load_pack(cfg) if cfg is not None else None
    results_root = Path(results) if results else cfg.root()
    out_dir = Path(out) if out else results_root / "report"
    return render_report(
        results_root,
        out_dir,
        pack=pack,
        reproducible=reproducible,
        test_order=list(TESTS),
    )


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="percepbench",
        description="low-level vision benchmark for image/video quality metrics",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate stimulus suites")
    gen.add_argument("--config", required=True)
    gen.add_argument("--resume", action="store_true")

    run = sub.add_parser("run", help="score suites into response surfaces")
    run.add_argument("--config", required=True)
    run.add_argument("--resume", action="store_true")
    run.add_argument("--strict", action="store_true",
                     help="exit 3 if any cell failed to score")
    run.add_argument("--adapter", action="append", default=[],
                     help="adapter command to run in addition to config metrics")
    run.add_argument("--metric", action="append", default=[],
                     help="restrict to these metric names")

    score = sub.add_parser("score", help="reduce surfaces to scores")
    score.add_argument("--config", required=True)

    rep = sub.add_parser("report", help="render the HTML/SVG/CSV bundle")
    rep.add_argument("--config")
    rep.add_argument("--results", help="results root (defaults to config output_root)")
    rep.add_argument("--out", help="report directory (defaults to <results>/report)")
    rep.add_argument("--reproducible", action="store_true",
                     help="omit timestamps for byte-identical output")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "gen":
            out = cmd_gen(load_config(args.config), resume=args.resume)
            print(f"built {len(out['built'])} suites, skipped {len(out['skipped'])}")
            return 0
        if args.command == "run":
            out = cmd_run(
                load_config(args.config),
                resume=args.resume,
                extra_adapters=args.adapter,
                only_metrics=args.metric or None,
            )
            print(
                f"scored {len(out['run'])} pairs, skipped {len(out['skipped'])}, "
                f"resumed {len(out['resumed'])}, cell errors {out['errors']}"
            )
            if args.strict and out["errors"] > 0:
                return 3
            return 0
        if args.command == "score":
            out = cmd_score(load_config(args.config))
            print(f"scored {len(out['scored'])}, skipped {len(out['skipped'])}")
            return 0
        if args.command == "report":
            if not (args.config or args.results):
                raise ConfigError("report needs --config or --results")
            cfg = load_config(args.config) if args.config else None
            out = cmd_report(
                cfg,
                results=args.results,
                out=args.out,
                reproducible=args.reproducible,
            )
            print(
                f"report: {out['metrics']} metrics x {out['tests']} tests, "
                f"{out['figures']} figures -> {out['out_dir']}"
            )
            return 0
    except (ConfigError, ParseError, ManifestMismatch, HandshakeFailed) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
