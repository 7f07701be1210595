import csv
import json

import numpy as np
import pytest

from predinfo import cli
from predinfo.config import config_hash, load_config, parse_config, recipe_names, recipe_path
from predinfo.errors import ConfigError, NotPositiveDefiniteError
from predinfo.io import read_pisq, read_sequence_csv, read_table
from predinfo.parallel import resolve_jobs

TINY_TRAIN = {"iterations": 5, "replications": 2, "batch_size": 8}
TINY_CRITIC = {"embed_dim": 4, "hidden": [8], "lstm_width": 4}


def write_yaml(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# -- schema -----------------------------------------------------------------

def test_error_names_line_and_field():
    text = "name: x\ngenerator:\n  kind: gp\n  kernel:\n    kind: ARR\nk_grid: [1]\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text, "cfg.yaml")
    msg = str(info.value)
    assert "cfg.yaml:5" in msg and "generator.kernel.kind" in msg


def test_unknown_key_is_rejected():
    with pytest.raises(ConfigError, match=r"cfg.yaml:3: estimator.iters"):
        parse_config("generator: {kind: iid}\nk_grid: [1]\nestimator: {iters: 5}\n", "cfg.yaml")


def test_empty_grid_is_rejected():
    with pytest.raises(ConfigError, match="k_grid"):
        parse_config("generator: {kind: iid}\nk_grid: []\n")
    with pytest.raises(ConfigError, match="strictly increasing"):
        parse_config("generator: {kind: iid}\nk_grid: [2, 1]\n")


def test_semantic_checks():
    with pytest.raises(ConfigError, match="exceeds"):
        parse_config("generator: {kind: ising, T: 10, M: 20}\nk_grid: [1]\n")
    with pytest.raises(ConfigError, match="estimator.bounds"):
        parse_config("generator: {kind: iid}\nk_grid: [1]\nestimator: {bounds: []}\n")
    with pytest.raises(ConfigError, match="YAML syntax"):
        parse_config("generator: [unclosed\n")


def test_hash_is_stable_and_ignores_output_location():
    a = parse_config("generator: {kind: iid}\nk_grid: [1, 2]\nout: a\n")
    b = parse_config("k_grid: [1, 2]\nout: b\ngenerator:\n  kind: iid\n")
    c = parse_config("generator: {kind: iid}\nk_grid: [1, 3]\n")
    assert config_hash(a) == config_hash(b) != config_hash(c)
    assert len(config_hash(a)) == 16


def test_full_overrides_merge():
    text = "generator: {kind: ising, T: 1000, M: 100}\nk_grid: [1]\nfull_overrides: {generator: {T: 5000}}\n"
    assert parse_config(text).generator.T == 1000
    full = parse_config(text, full=True)
    assert full.generator.T == 5000 and full.generator.M == 100


def test_every_recipe_validates_in_both_scales():
    assert len(recipe_names()) >= 8
    for name in recipe_names():
        for full in (False, True):
            cfg = load_config(recipe_path(name), full)
            assert cfg.command is not None, name
    with pytest.raises(ConfigError, match="unknown recipe"):
        recipe_path("nope")


# -- commands ----------------------------------------------------------------

def test_generate_ising(tmp_path):
    cfg = parse_config("seed: 3\ngenerator: {kind: ising, T: 100000, M: 10000}\nk_grid: [1]\n")
    res = cli.cmd_generate(cfg, str(tmp_path))
    data = read_sequence_csv(tmp_path / "data.csv")
    assert data.values.shape == (100_000, 1)
    assert set(np.unique(data.values)) == {-1.0, 1.0}
    np.testing.assert_array_equal(read_pisq(tmp_path / "data.pisq"), data.values)
    side = json.loads((tmp_path / "data.json").read_text())
    assert side["config_hash"] == config_hash(cfg) and side["seed"] == 3
    assert len(side["couplings"]) == 10
    assert res.exit_code == 0


def test_generate_gp_defaults(tmp_path):
    cfg = parse_config("generator: {kind: gp, n: 300, d: 2}\nk_grid: [1]\n")
    cli.cmd_generate(cfg, str(tmp_path))
    meta, header, rows = read_table(tmp_path / "data.csv")
    assert header == ["t", "x0", "x1"] and len(rows) == 300
    assert meta["config_hash"] == config_hash(cfg) and meta["version"]


def test_closed_form_mode(tmp_path):
    cfg = load_config(recipe_path("closed-form"))
    cli.cmd_estimate_mi(cfg, str(tmp_path))
    _, header, rows = read_table(tmp_path / "closed_form.csv")
    assert header == ["rho", "d", "k", "kprime", "theoretical_mi"]
    by = {(float(r[0]), int(r[1])): float(r[4]) for r in rows if r[2] == "30"}
    assert by[(0.5, 1)] == pytest.approx(0.14, abs=0.005)
    assert by[(0.8, 1)] == pytest.approx(0.51, abs=0.005)
    assert by[(0.9, 1)] == pytest.approx(0.83, abs=0.01)


def test_estimator_list_row_count(tmp_path):
    cfg = parse_config(f"""
generator: {{kind: ar1, rho: 0.8, n: 2000}}
k_grid: [1, 2]
estimator:
  method: neural
  critics: [Separable]
  bounds: [InfoNCE, SMILE]
  critic: {json.dumps(TINY_CRITIC)}
  train: {json.dumps(TINY_TRAIN)}
  kprime: 2
""")
    res = cli.cmd_estimate_mi(cfg, str(tmp_path))
    _, header, rows = read_table(tmp_path / "estimates.csv")
    assert len(rows) == 2 * 2 * 2
    assert {r[2] for r in rows} == {"InfoNCE", "SMILE"}
    _, _, summary = read_table(tmp_path / "summary.csv")
    assert len(summary) == 4
    assert len(list((tmp_path / "traces").iterdir())) == 8
    assert res.exit_code == 0


def test_learning_curve_iid(tmp_path):
    cfg = parse_config("""
generator: {kind: iid, n: 20000, d: 2}
k_grid: [1, 2, 3, 4]
estimator: {method: gaussian, kprime: 4, train: {replications: 3}}
analysis: {theoretical: true}
""")
    res = cli.cmd_learning_curve(cfg, str(tmp_path))
    _, header, rows = read_table(tmp_path / "curve.csv")
    assert all(abs(float(r[4])) < 0.03 for r in rows)
    assert res.summary["critical_zone"] == 1
    _, theory_header, theory = read_table(tmp_path / "theoretical.csv")
    assert theory_header == ["k", "ipred_closed", "lambda_tilde", "l_k", "l0"]
    assert all(float(r[1]) == 0.0 and abs(float(r[2])) < 0.02 for r in theory)
    script = (tmp_path / "learning_curve.gp").read_text()
    assert "curve.csv" in script and "theoretical.csv" in script and "first 0.02" in script


RISK_CFG = """
seed: 5
generator: {kind: ising, T: 20000, M: 5000}
k_grid: [1, 2, 3]
estimator: {train: {replications: 2}}
analysis:
  p_hat_k: 2
  risk:
    families: [LSTM, MLP]
    fit: {max_epochs: 2, batches_per_epoch: 5}
"""


def data_rows(path):
    return [line for line in path.read_text().splitlines(keepends=True) if not line.startswith("#")]


def test_risk_oracle_outputs_and_determinism(tmp_path):
    cfg = parse_config(RISK_CFG)
    first = cli.cmd_risk_oracle(cfg, str(tmp_path / "a"))
    cli.cmd_risk_oracle(cfg, str(tmp_path / "b"))
    for name in ("risk_report.csv", "fits.csv", "curve.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = list(csv.reader(data_rows(tmp_path / "a" / "risk_report.csv")))
    assert rows[0][:3] == ["k", "risk_lstm", "risk_mlp"]
    assert [r[0] for r in rows[1:]] == ["1", "2", "3", "minima", "oracle_stderr", "k_star", "p_hat"]
    assert set(first.summary["k_star"]) == {"LSTM", "MLP"}


def test_risk_oracle_rejects_continuous_data(tmp_path):
    cfg = parse_config("generator: {kind: iid, n: 5000}\nk_grid: [1]\n")
    with pytest.raises(ConfigError):
        cli.cmd_risk_oracle(cfg, str(tmp_path))


# -- entry point and exit codes ----------------------------------------------

def test_exit_code_ok_and_config_error(tmp_path, capsys):
    good = write_yaml(tmp_path, "generator: {kind: iid, n: 100}\nk_grid: [1]\n")
    assert cli.run(["generate", "--config", str(good), "--out", str(tmp_path / "o"), "--seed", "7"]) == 0
    assert read_sequence_csv(tmp_path / "o" / "data.csv").seed == 7
    bad = write_yaml(tmp_path, "generator: {kind: iid}\nk_grid: []\n", "bad.yaml")
    assert cli.run(["generate", "--config", str(bad)]) == 2
    assert "k_grid" in capsys.readouterr().err
    assert cli.run(["generate", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_exit_code_partial(tmp_path):
    cfg = write_yaml(tmp_path, """
generator: {kind: iid, n: 19}
k_grid: [1, 2, 3]
estimator: {method: gaussian, kprime: 15, train: {replications: 1}}
""")
    assert cli.run(["learning-curve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 4
    assert (tmp_path / "o" / "curve.csv").exists()


def test_exit_code_numeric(tmp_path, monkeypatch):
    def boom(cfg, out, jobs):
        raise NotPositiveDefiniteError("joint block is singular", block="joint")
    monkeypatch.setitem(cli.COMMANDS, "generate", boom)
    cfg = write_yaml(tmp_path, "generator: {kind: iid, n: 100}\nk_grid: [1]\n")
    assert cli.run(["generate", "--config", str(cfg)]) == 3


def test_reproduce_and_recipes_list(tmp_path, capsys):
    assert cli.run(["recipes"]) == 0
    assert "fig2-ar5" in capsys.readouterr().out
    assert cli.run(["reproduce", "closed-form", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "closed_form.csv").exists()


def test_jobs_resolution(monkeypatch):
    monkeypatch.delenv("PREDINFO_JOBS", raising=False)
    assert resolve_jobs(None) == 1
    monkeypatch.setenv("PREDINFO_JOBS", "3")
    assert resolve_jobs(None) == 3
    assert resolve_jobs(2) == 2


def test_parallel_output_matches_serial(tmp_path):
    cfg = parse_config(f"""
generator: {{kind: ar1, rho: 0.8, n: 1000}}
k_grid: [1, 2]
estimator:
  method: neural
  critics: [Separable]
  critic: {json.dumps(TINY_CRITIC)}
  train: {json.dumps(TINY_TRAIN)}
""")
    cli.cmd_estimate_mi(cfg, str(tmp_path / "one"), jobs=1)
    cli.cmd_estimate_mi(cfg, str(tmp_path / "two"), jobs=2)
    for name in ("estimates.csv", "summary.csv"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()
