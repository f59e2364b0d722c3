import json

import numpy as np
import pytest

from elmv import config as C
from elmv.cli import main
from elmv.data import write_table
from elmv.simulation import expand, mask_random

FAST = ["--num-rounds", "3", "--cv-folds", "3", "--max-depth", "2"]


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory, iris):
    d = tmp_path_factory.mktemp("data")
    rows = np.r_[0:20, 50:70, 100:120]
    t = mask_random(expand(iris.take(rows), (0.1, 1.0), 0), 0.2, 0)
    write_table(t, d / "sim.csv")
    write_table(iris, d / "iris.csv")
    write_table(mask_random(expand(iris, (0.1, 1.0), 0), 0.6, 0), d / "sim60.csv")
    return d


def run(*argv):
    return main([str(a) for a in argv])


# config

def test_config_layers(tmp_path, monkeypatch):
    (tmp_path / "c.toml").write_text('seed = 4\n[data]\ninput = "x.csv"\n[ensemble]\nk1 = 7\n')
    cfg = C.load_config(tmp_path / "c.toml", {"ensemble.k1": 8, "ensemble.k2": None})
    assert cfg["seed"] == 4 and cfg["ensemble"]["k1"] == 8 and cfg["ensemble"]["k2"] == 5
    assert cfg["data"]["input"] == str(tmp_path / "x.csv")


def test_config_rejects_unknown_and_bad_values(tmp_path):
    (tmp_path / "c.toml").write_text("[ensemble]\nk9 = 1\n")
    with pytest.raises(C.ConfigError, match="k9"):
        C.load_config(tmp_path / "c.toml")
    with pytest.raises(C.ConfigError):
        C.load_config(None, {"ensemble.k2": 20})
    with pytest.raises(C.ConfigError):
        C.load_config(None, {"assess.threshold": 1.5})
    with pytest.raises(C.ConfigError, match="not found"):
        C.load_config(tmp_path / "nope.toml")


def test_workers_precedence(monkeypatch):
    monkeypatch.setenv(C.WORKERS_ENV, "3")
    assert C.resolve_workers(C.load_config()) == 3
    assert C.resolve_workers(C.load_config(None, {"workers": 2})) == 2
    monkeypatch.delenv(C.WORKERS_ENV)
    assert C.resolve_workers(C.load_config()) == 1
    monkeypatch.setenv(C.WORKERS_ENV, "many")
    with pytest.raises(C.ConfigError, match=C.WORKERS_ENV):
        C.load_config()


def test_hashes_ignore_paths_and_chain():
    a = C.load_config(None, {"output_dir": "/tmp/a", "workers": 1})
    b = C.load_config(None, {"output_dir": "/tmp/b", "workers": 4})
    assert C.config_hash(a) == C.config_hash(b)
    c = C.load_config(None, {"ensemble.k1": 9})
    assert C.subsets_hash(a) == C.subsets_hash(c)
    h = C.train_hash(C.subsets_hash(a), a)
    assert C.predict_hash(h, a) != C.predict_hash(h, c)
    d = C.load_config(None, {"subsets.cap": 0.3})
    assert C.train_hash(C.subsets_hash(d), d) != h
    assert len(C.config_hash(a)) == 16


# commands

def test_assess_complete_and_masked(tmp_path, data_csv):
    assert run("assess", "--input", data_csv / "iris.csv", "--output-dir", tmp_path) == 0
    rep = json.loads((tmp_path / "assessment.json").read_text())
    assert rep["overall_rate"] == 0 and rep["recommendation"] == "imputation_ok"
    assert run("assess", "--input", data_csv / "sim60.csv", "--output-dir", tmp_path,
               "--out", "a60.json", "--mask-out", "mask.tsv") == 0
    rep = json.loads((tmp_path / "a60.json").read_text())
    assert rep["recommendation"] == "elmv_recommended" and "config_hash" in rep
    assert (tmp_path / "mask.tsv").exists()


def test_missing_file_exit_2(tmp_path, capsys):
    assert run("assess", "--input", tmp_path / "absent.csv", "--output-dir", tmp_path) == 2
    assert "absent.csv" in capsys.readouterr().err


def test_parse_error_exit_2(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n3,x\n")
    assert run("assess", "--input", tmp_path / "bad.csv", "--output-dir", tmp_path) == 2
    assert "line 3" in capsys.readouterr().err


def test_usage_errors_exit_1(tmp_path, data_csv):
    assert run("assess", "--bogus") == 1
    assert run("predict", "--output-dir", tmp_path) == 1
    assert run("assess", "--input", data_csv / "iris.csv", "--output-dir", tmp_path,
               "--threshold", "2") == 1


def test_env_workers_validated(tmp_path, data_csv, monkeypatch):
    monkeypatch.setenv("ELMV_WORKERS", "zero")
    assert run("assess", "--input", data_csv / "iris.csv", "--output-dir", tmp_path) == 1


def test_refuses_to_write_outside(tmp_path, data_csv):
    out = tmp_path / "out"
    code = run("assess", "--input", data_csv / "iris.csv", "--output-dir", out,
               "--out", "../escape.json")
    assert code == 1 and not (tmp_path / "escape.json").exists()
    assert run("assess", "--input", data_csv / "iris.csv", "--output-dir", out,
               "--out", tmp_path / "abs.json") == 1


def test_no_qualified_subsets_names_stage(tmp_path, data_csv, capsys):
    code = run("subsets", "--input", data_csv / "sim.csv", "--output-dir", tmp_path,
               "--cap", "0", "--min-rows", "60", "--min-cols", "12")
    assert code == 3
    err = capsys.readouterr().err
    assert "subset_gen" in err and "no qualified subsets" in err


def test_stepwise_pipeline_and_hash_checks(tmp_path, data_csv):
    inp = data_csv / "sim.csv"
    common = ["--input", inp, "--output-dir", tmp_path, *FAST]
    assert run("subsets", "--input", inp, "--output-dir", tmp_path) == 0
    assert run("train", *common, "--subsets", tmp_path / "subsets.json", "--no-loocv") == 0
    assert run("predict", "--input", inp, "--output-dir", tmp_path,
               "--registry", tmp_path / "models.json", "--support", tmp_path / "support.csv") == 0
    lines = (tmp_path / "predictions.tsv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=") and len(lines) == 2 + 60
    assert run("features", *common, "--registry", tmp_path / "models.json", "--k4", "5") == 0
    assert len((tmp_path / "ranking.tsv").read_text().splitlines()) == 2 + 5

    # subsets from a different cap do not match this configuration
    assert run("train", *common, "--subsets", tmp_path / "subsets.json", "--cap", "0.3") == 2

    # a support file from another training run is rejected
    other = tmp_path / "other"
    assert run("train", "--input", inp, "--output-dir", other, *FAST, "--seed", "9",
               "--no-loocv") == 0
    assert run("predict", "--input", inp, "--output-dir", tmp_path, "--registry",
               tmp_path / "models.json", "--support", other / "support.csv") == 2

    # features without LOOCV accuracies and without a table
    assert run("features", "--output-dir", tmp_path, "--registry", tmp_path / "models.json") == 2


def test_run_all_deterministic(tmp_path, data_csv):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert run("run-all", "--input", data_csv / "sim.csv", "--output-dir", out, *FAST,
                   "--k4", "6") == 0
        outs.append(out)
    for f in ("predictions.tsv", "ranking.tsv", "subsets.json", "models.json", "support.csv"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f
    m = json.loads((outs[0] / "manifest.json").read_text())
    m2 = json.loads((outs[1] / "manifest.json").read_text())
    assert m["config_hash"] == m2["config_hash"]
    assert set(m["stage_hashes"]) == {"subset_gen", "base_learner", "ensemble", "feature_id"}
    assert m["seeds"]["seed"] == 0 and m["n_queries"] == 12
    assert 0 <= m["query_metrics"]["accuracy"] <= 1
    for f in ("subsets.json", "models.json"):
        assert json.loads((outs[0] / f).read_text())["config_hash"]
    for f in ("predictions.tsv", "ranking.tsv", "support.csv"):
        assert (outs[0] / f).read_text().startswith("# config_hash=")


def test_simulate_with_config(tmp_path):
    (tmp_path / "sim.toml").write_text(
        "[learner]\nnum_rounds = 3\n"
        "[simulation]\nmissing_rates = [0.05]\ntrial_seeds = [0]\n"
        'methods = ["base_no_impute", "knn_baseline"]\nnoise_levels = [0.1]\n')
    assert run("simulate", "--config", tmp_path / "sim.toml", "--output-dir", tmp_path,
               "--out", "res") == 0
    summary = json.loads((tmp_path / "res" / "summary.json").read_text())
    assert set(summary["methods"]) == {"base_no_impute", "knn_baseline"}
    assert (tmp_path / "res" / "trials.tsv").read_text().startswith("# config_hash=")


def test_simulate_unknown_method(tmp_path):
    assert run("simulate", "--output-dir", tmp_path, "--methods", "magic") == 1
