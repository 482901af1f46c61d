"""Pipeline CLI: config validation, stage composition, resume, strict mode."""
import json
import shlex
import sys

import numpy as np
import pytest

from percepbench.cli import (
    RunConfig,
    cmd_gen,
    cmd_run,
    cmd_score,
    config_from_dict,
    load_config,
    main,
)
from percepbench.errors import ConfigError
from percepbench.human_reference import (
    TEST_AXIS_COLUMN,
    SyntheticCSF,
    ReferencePack,
    ThresholdCurve,
    save_reference_pack,
)
from percepbench.stimgen import TESTS


def synthetic_pack_dir(tmp_path, test_ids=("mask_coherent",)):
    """A reference pack directory with synthetic curves for the given tests."""
    curves = {}
    for tid in test_ids:
        test = TESTS[tid]
        axis = TEST_AXIS_COLUMN[tid]
        if test.axis == "mask_contrast":
            cm = np.geomspace(*test.contrast_range, 12)
            thr = 0.01 * np.sqrt(1.0 + (cm / 0.03) ** 1.4)
            curves[tid] = ThresholdCurve(
                axis=axis, points=np.column_stack([cm, thr]), source="synthetic"
            )
        else:
            lo, hi = test.axis_range
            values = np.geomspace(lo, hi, 14)
            curves[tid] = SyntheticCSF().to_curve(values, axis=axis)
    pack = ReferencePack(curves=curves, matching_sf=None, matching_color=None)
    d = tmp_path / "pack"
    save_reference_pack(d, pack)
    return d


def write_config(tmp_path, pack_dir, **overrides):
    cfg = {
        "output_root": str(tmp_path / "out"),
        "tests": ["mask_coherent"],
        "axis_n": 3,
        "contrast_n": 3,
        "metrics": ["psnr_y", "oracle_q"],
        "reference_pack": str(pack_dir),
    }
    cfg.update(overrides)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return p


# -- config ---------------------------------------------------------------


def test_unknown_top_level_key_rejected():
    with pytest.raises(ConfigError, match="unknown config keys"):
        config_from_dict({"output_root": "x", "grid_density": 4})


def test_unknown_display_key_rejected():
    with pytest.raises(ConfigError, match="unknown display keys"):
        config_from_dict({"display": {"gamma": 2.2}})


def test_unknown_test_rejected():
    with pytest.raises(ConfigError, match="unknown tests"):
        config_from_dict({"tests": ["det_sf_ach", "det_bogus"]})


def test_unknown_metric_rejected():
    with pytest.raises(ConfigError, match="unknown metrics"):
        config_from_dict({"metrics": ["psnr_y", "vmaf"]})


def test_schema_version_checked():
    with pytest.raises(ConfigError, match="schema_version"):
        config_from_dict({"schema_version": 99})


def test_tests_must_be_array():
    with pytest.raises(ConfigError, match="array"):
        config_from_dict({"tests": "det_sf_ach"})


def test_all_expands_to_registry():
    cfg = config_from_dict({"tests": ["all"]})
    assert cfg.test_ids == list(TESTS)


def test_toml_and_json_configs_equivalent(tmp_path):
    toml_p = tmp_path / "c.toml"
    toml_p.write_text(
        'output_root = "out"\ntests = ["det_sf_ach"]\naxis_n = 4\n'
        'metrics = ["ssim"]\n[display]\npeak_luminance = 80.0\n'
    )
    json_p = tmp_path / "c.json"
    json_p.write_text(
        json.dumps(
            {
                "output_root": "out",
                "tests": ["det_sf_ach"],
                "axis_n": 4,
                "metrics": ["ssim"],
                "display": {"peak_luminance": 80.0},
            }
        )
    )
    assert load_config(toml_p) == load_config(json_p)


def test_malformed_toml_is_config_error(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("tests = [unclosed\n")
    with pytest.raises(ConfigError, match="parse error"):
        load_config(p)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.toml")


def test_threads_env_fallback(monkeypatch):
    cfg = RunConfig()
    monkeypatch.setenv("PERCEPBENCH_THREADS", "7")
    assert cfg.n_threads() == 7
    monkeypatch.setenv("PERCEPBENCH_THREADS", "soup")
    with pytest.raises(ConfigError):
        cfg.n_threads()
    monkeypatch.delenv("PERCEPBENCH_THREADS")
    assert cfg.n_threads() == 1
    assert RunConfig(threads=3).n_threads() == 3


# -- stages -----------------------------------------------------------------


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """gen+run+score once; individual tests inspect the tree."""
    tmp_path = tmp_path_factory.mktemp("pipeline")
    pack_dir = synthetic_pack_dir(tmp_path)
    cfg_path = write_config(tmp_path, pack_dir)
    cfg = load_config(cfg_path)
    gen_out = cmd_gen(cfg)
    run_out = cmd_run(cfg)
    score_out = cmd_score(cfg)
    return tmp_path, cfg_path, cfg, gen_out, run_out, score_out


def test_end_to_end_oracle_alignment_is_one(pipeline):
    _, _, cfg, gen_out, run_out, score_out = pipeline
    assert gen_out["built"] == ["mask_coherent"]
    assert ("mask_coherent", "oracle_q") in run_out["run"]
    assert ("mask_coherent", "psnr_y") in run_out["run"]
    rec = json.loads(
        (cfg.root() / "scores" / "mask_coherent" / "oracle_q" / "score.json").read_text()
    )
    assert rec["score_type"] == "alignment"
    assert abs(rec["value"] - 1.0) <= 1e-9
    assert not rec["degenerate"]


def test_psnr_scored_and_plausible(pipeline):
    _, _, cfg, _, _, _ = pipeline
    rec = json.loads(
        (cfg.root() / "scores" / "mask_coherent" / "psnr_y" / "score.json").read_text()
    )
    assert rec["score_type"] == "alignment"
    assert -1.0 <= rec["value"] <= 1.0


def test_run_requires_gen(tmp_path):
    pack_dir = synthetic_pack_dir(tmp_path)
    cfg = load_config(write_config(tmp_path, pack_dir))
    rc = main(["run", "--config", str(write_config(tmp_path, pack_dir))])
    assert rc == 2  # ManifestMismatch: no suite yet


def test_run_detects_config_drift(pipeline, tmp_path):
    base, cfg_path, cfg, _, _, _ = pipeline
    drifted = write_config(
        tmp_path,
        base / "pack",
        output_root=str(cfg.root()),
        axis_n=4,  # differs from the generated suites
    )
    rc = main(["run", "--config", str(drifted)])
    assert rc == 2


def test_resume_skips_fresh_outputs(pipeline):
    _, cfg_path, cfg, _, _, _ = pipeline
    again = cmd_gen(cfg, resume=True)
    assert again["built"] == [] and again["skipped"] == ["mask_coherent"]
    rerun = cmd_run(cfg, resume=True)
    assert rerun["run"] == []
    assert set(rerun["resumed"]) == {("mask_coherent", "oracle_q"), ("mask_coherent", "psnr_y")}


def test_rerun_is_byte_identical(pipeline):
    _, _, cfg, _, _, _ = pipeline
    surf = cfg.root() / "surfaces" / "mask_coherent" / "psnr_y" / "surface.json"
    before = surf.read_bytes()
    cmd_run(cfg)  # full recompute, no resume
    assert surf.read_bytes() == before


def test_eligibility_skips_video_for_image_metrics(tmp_path):
    pack_dir = synthetic_pack_dir(tmp_path, test_ids=("flicker",))
    cfg_path = write_config(
        tmp_path,
        pack_dir,
        tests=["flicker"],
        metrics=["psnr_y", "oracle_q"],
        axis_n=2,
        contrast_n=2,
        duration=0.05,
    )
    cfg = load_config(cfg_path)
    cmd_gen(cfg)
    out = cmd_run(cfg)
    assert ("flicker", "psnr_y") in out["skipped"]
    assert ("flicker", "oracle_q") in out["run"]
    reason = json.loads(
        (cfg.root() / "surfaces" / "flicker" / "psnr_y" / "skipped.json").read_text()
    )
    assert "video" in reason["reason"]


def test_crashing_adapter_exit_codes(tmp_path):
    pack_dir = synthetic_pack_dir(tmp_path)
    cfg_path = write_config(tmp_path, pack_dir, metrics=["psnr_y"])
    cfg = load_config(cfg_path)
    cmd_gen(cfg)
    crasher = tmp_path / "crasher.py"
    crasher.write_text(
        "import json, sys\n"
        "for line in sys.stdin:\n"
        "    msg = json.loads(line)\n"
        "    if 'hello' in msg:\n"
        "        print(json.dumps({'hello': {'name': 'crashy', 'supports_video': False,\n"
        "              'higher_is_better': True, 'input_space': 'encoded_srgb'}}), flush=True)\n"
        "    else:\n"
        "        sys.exit(1)\n"
    )
    adapter_arg = f"{shlex.quote(sys.executable)} {shlex.quote(str(crasher))}"
    rc = main(["run", "--config", str(cfg_path), "--adapter", adapter_arg])
    assert rc == 0  # crash isolation: errors recorded, run completes
    surf = json.loads(
        (cfg.root() / "surfaces" / "mask_coherent" / "crashy" / "surface.json").read_text()
    )
    assert len(surf["errors"]) > 0
    assert all(v is None for row in surf["scores"] for v in row)
    rc = main(["run", "--config", str(cfg_path), "--adapter", adapter_arg, "--strict"])
    assert rc == 3


def test_metric_filter(tmp_path):
    pack_dir = synthetic_pack_dir(tmp_path)
    cfg_path = write_config(tmp_path, pack_dir)
    cfg = load_config(cfg_path)
    cmd_gen(cfg)
    out = cmd_run(cfg, only_metrics=["oracle_q"])
    assert [m for _, m in out["run"]] == ["oracle_q"]
    assert not (cfg.root() / "surfaces" / "mask_coherent" / "psnr_y").exists()


def test_duplicate_adapter_name_rejected(tmp_path):
    pack_dir = synthetic_pack_dir(tmp_path)
    cfg_path = write_config(tmp_path, pack_dir, metrics=["psnr_y"])
    cfg = load_config(cfg_path)
    cmd_gen(cfg)
    clone = tmp_path / "clone.py"
    clone.write_text(
        "import json, sys\n"
        "for line in sys.stdin:\n"
        "    msg = json.loads(line)\n"
        "    if 'hello' in msg:\n"
        "        print(json.dumps({'hello': {'name': 'psnr_y', 'supports_video': False,\n"
        "              'higher_is_better': True, 'input_space': 'encoded_srgb'}}), flush=True)\n"
    )
    with pytest.raises(ConfigError, match="duplicate metric name"):
        cmd_run(cfg, extra_adapters=[f"{shlex.quote(sys.executable)} {shlex.quote(str(clone))}"])


def test_report_command_from_pipeline(pipeline):
    _, cfg_path, cfg, _, _, _ = pipeline
    rc = main(["report", "--config", str(cfg_path), "--reproducible"])
    assert rc == 0
    index = (cfg.root() / "report" / "index.html").read_text()
    assert "oracle_q" in index and "psnr_y" in index
    assert (cfg.root() / "report" / "psnr_y" / "mask_coherent.svg").exists()


def test_report_requires_config_or_results():
    assert main(["report"]) == 2


def test_main_bad_config_exit_2(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"metrics": ["vmaf"]}))
    assert main(["gen", "--config", str(p)]) == 2
