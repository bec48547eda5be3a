import json

import numpy as np
import pytest

from roughlab import harness
from roughlab.harness import Check, ConfigError, ExperimentConfig, SuiteResult, run_experiment

SMALL_COV = dict(paths=300, chunk=100)


def test_ini_config_roundtrip(tmp_path):
    f = tmp_path / "c.ini"
    f.write_text("[experiment]\nid = sde-coupling-contraction\nseed = 11\n\n[params]\npairs = 40\nlambdas = 8, 16, 32\n")
    cfg = ExperimentConfig.from_file(f)
    assert cfg.seed == 11
    assert cfg.params["pairs"] == 40 and cfg.params["lambdas"] == [8.0, 16.0, 32.0]
    assert cfg.raw == {"experiment": {"id": "sde-coupling-contraction", "seed": "11"}, "params": {"pairs": "40", "lambdas": "8, 16, 32"}}


def test_json_config(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"experiment": {"id": "fbm-covariance", "seed": 3}, "params": {"hursts": [0.3]}}))
    cfg = ExperimentConfig.from_file(f)
    assert cfg.params["hursts"] == [0.3] and cfg.seed == 3


@pytest.mark.parametrize(
    "data",
    [
        {"experiment": {"id": "fbm-covariance"}, "params": {"pathz": 3}},
        {"experiment": {"id": "fbm-covariance", "colour": 1}},
        {"experiment": {"id": "no-such-suite"}},
        {"experiment": {"id": "fbm-covariance"}, "extra": {}},
        {"experiment": {"id": "fbm-covariance"}, "params": {"paths": "1.5"}},
    ],
)
def test_bad_configs_rejected(data):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping(data)


def test_ini_unknown_section_rejected(tmp_path):
    f = tmp_path / "c.ini"
    f.write_text("[experiment]\nid = fbm-covariance\n[other]\nx = 1\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(f)


def test_every_suite_has_a_criterion():
    crits = sorted(s.criterion for s in harness.SUITES.values())
    assert crits == list(range(1, 14))


def test_report_bytes_identical_on_rerun(tmp_path):
    cfg = ExperimentConfig.default("fbm-covariance", 7, **SMALL_COV)
    run_experiment(cfg, out_dir=tmp_path / "a")
    run_experiment(cfg, out_dir=tmp_path / "b")
    for name in ("fbm-covariance.json", "fbm-covariance.covariance.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_worker_count_does_not_change_results():
    cfg = ExperimentConfig.default("sde-coupling-contraction", 7, pairs=40, chunk=10, n_steps=512)
    one = run_experiment(cfg, workers=1)
    two = run_experiment(cfg, workers=2)
    for r in (one, two):
        r.pop("_elapsed")
        r.pop("workers")
    assert harness.dumps_report(one) == harness.dumps_report(two)


def test_seed_changes_results():
    a = run_experiment(ExperimentConfig.default("fbm-covariance", 1, **SMALL_COV))
    b = run_experiment(ExperimentConfig.default("fbm-covariance", 2, **SMALL_COV))
    assert a["results"] != b["results"]


def test_report_schema(tmp_path):
    cfg = ExperimentConfig.default("sde-coupling-contraction", 7, pairs=40, chunk=20, n_steps=512)
    rep = run_experiment(cfg, out_dir=tmp_path)
    saved = json.loads((tmp_path / "sde-coupling-contraction.json").read_text())
    assert saved["schema_version"] == harness.SCHEMA_VERSION
    assert len(saved["results"]["sup_gap_l2"]) == 4
    assert "slope" in saved["results"]["fit"]
    assert "wall_clock_seconds" not in json.dumps(saved)
    assert "0.25" in saved["constants"]["c_H"]
    assert saved["config"]["source"] == cfg.raw
    timing = json.loads((tmp_path / "sde-coupling-contraction.timing.json").read_text())
    assert timing["wall_clock_seconds"] >= 0
    assert rep["passed"] == saved["passed"]


def test_she_weak_cauchy_small():
    cfg = ExperimentConfig.default("she-weak-cauchy", 7, fields=40, chunk=20, n_steps=256, modes=32)
    rep = run_experiment(cfg)
    gaps = rep["results"]["weighted_gap"]
    assert len(gaps) == 2
    assert all(np.isfinite(g["value"]) for g in gaps)
    assert gaps[1]["value"] <= gaps[0]["value"] + 2 * gaps[0]["stderr"]


def test_attrition_above_one_percent_fails(monkeypatch):
    def runner(p, seed, workers):
        return SuiteResult({}, [Check("ok", True)], members=100, failed_members=p["failed"])

    monkeypatch.setitem(harness.SUITES, "fake", harness.Suite("fake", None, "fake", {"failed": 0}, runner))
    assert run_experiment(ExperimentConfig.default("fake", failed=1))["passed"]
    rep = run_experiment(ExperimentConfig.default("fake", failed=2))
    assert not rep["passed"] and rep["attrition"]["fraction"] == 0.02


def test_map_chunks_preserves_order():
    out = harness.map_chunks(_span, 10, 3, 2)
    assert out == [(0, 3), (3, 6), (6, 9), (9, 10)]


def _span(a, b):
    return (a, b)
