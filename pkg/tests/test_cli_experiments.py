from pathlib import Path

import numpy as np
import pytest

from llhmm import cli
from llhmm import experiments as ex
from llhmm.errors import ConfigError, ZeroNormBeforeProjection
from llhmm.experiments import (
    MICRO_DEFAULTS,
    ExperimentResult,
    _commensurate_dns_n,
    cmd_cost_model,
    cmd_hmm_convergence,
    cmd_integrator_study,
    cmd_micro_sweep,
    cmd_showcase,
    cmd_stability_study,
    merge,
    metric_bytes,
    micro_sweep_points,
    read_csv,
)


@pytest.mark.parametrize("func,cfg", [
    (cmd_integrator_study, {"methods": []}),
    (cmd_stability_study, {"n_list": []}),
    (cmd_micro_sweep, {"values": []}),
    (cmd_hmm_convergence, {"n_macro": []}),
    (cmd_cost_model, {"eps_list": []}),
    (cmd_showcase, {"cases": []}),
])
def test_empty_sweep_is_rejected(func, cfg):
    with pytest.raises(ConfigError):
        func(cfg)


def test_unknown_sweep_parameter():
    with pytest.raises(ConfigError):
        micro_sweep_points(merge(MICRO_DEFAULTS, {"parameter": "kappa"}))


def test_merge_is_recursive_and_leaves_defaults_alone():
    defaults = {"a": 1, "b": {"c": 2, "d": 3}}
    out = merge(defaults, {"b": {"c": 5}})
    assert out == {"a": 1, "b": {"c": 5, "d": 3}}
    assert defaults["b"]["c"] == 2


def test_mu_sweep_keeps_outer_box_margin():
    pts = micro_sweep_points(merge(MICRO_DEFAULTS, {"values": [2.0, 6.0]}))
    assert [p[2]["mu_prime"] for p in pts] == [10.0, 12.0]


def test_commensurate_dns_grid():
    assert _commensurate_dns_n(24, 0.01, 15) == 1512
    assert _commensurate_dns_n(10, 0.1, 10) == 100


def test_csv_layout_and_roundtrip(tmp_path):
    res = ExperimentResult("demo", [("name", "-"), ("err", "1"), ("ok", "bool"), ("wall_seconds", "s")],
                           metadata={"eps": 0.01})
    res.add(name="a", err=0.125, ok=True, wall_seconds=1.5)
    with pytest.raises(ValueError):
        res.add(name="b")
    path = res.to_csv(tmp_path / "out.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "# llhmm-csv v1; experiment=demo"
    assert lines[2] == "name [-],err [1],ok [bool],wall_seconds [s]"
    assert lines[3] == "a,1.2500000000e-01,1,1.5000000000e+00"
    experiment, names, rows = read_csv(path)
    assert experiment == "demo" and names == ["name", "err", "ok", "wall_seconds"]
    assert rows == [{"name": "a", "err": 0.125, "ok": 1.0, "wall_seconds": 1.5}]


def test_metric_bytes_ignore_timestamp_and_timing(tmp_path):
    paths = []
    for k, secs in enumerate((1.0, 7.0)):
        res = ExperimentResult("demo", [("err", "1"), ("wall_seconds", "s"), ("dns_over_hmm_wall", "1")],
                               metadata={"run": k})
        res.add(err=0.5, wall_seconds=secs, dns_over_hmm_wall=secs)
        paths.append(res.to_csv(tmp_path / f"{k}.csv"))
    assert metric_bytes(paths[0]) == metric_bytes(paths[1])
    assert b"wall" not in metric_bytes(paths[0])


def test_micro_sweep_rows_and_determinism_across_workers(tmp_path):
    cfg = tmp_path / "sweep.toml"
    cfg.write_text('experiment = "micro-sweep"\nproblem = "EX1"\neps = 0.02\nparameter = "mu"\n'
                   'values = [3.0, 3.9]\nn_macro = 8\nmacro_point = [0.3]\n'
                   '[base]\neta = 0.45\nmu_prime = 6.0\npoints_per_eps = 8\n')
    outs = []
    for workers in (1, 2):
        out = tmp_path / f"w{workers}.csv"
        assert cli.main(["micro-sweep", "--config", str(cfg), "--out", str(out),
                         "--workers", str(workers)]) == 0
        outs.append(out)
    assert metric_bytes(outs[0]) == metric_bytes(outs[1])
    _, names, rows = read_csv(outs[0])
    assert len(rows) == 2 and [r["mu"] for r in rows] == [3.0, 3.9]
    assert all(np.isfinite(r[c]) for r in rows for c in ("e_avg", "e_disc", "e_approx"))


def test_cost_columns_track_prediction():
    res = cmd_cost_model({"problem": "EX1", "eps_list": [0.02, 0.01], "repeats": 1})
    rows = res.rows
    assert rows[0]["predicted_relative"] == 1.0 and rows[0]["wall_relative"] == 1.0
    # scaled parameters give the same node-step count for every eps
    assert rows[1]["predicted_work"] == rows[0]["predicted_work"]
    assert rows[1]["wall_over_predicted"] == pytest.approx(rows[1]["wall_relative"])


def test_exit_code_for_config_errors(tmp_path, capsys):
    assert cli.main(["stability", "--config", str(tmp_path / "missing.toml")]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("values = [1,\n")
    assert cli.main(["micro-sweep", "--config", str(bad)]) == 2
    other = tmp_path / "other.toml"
    other.write_text('experiment = "cost"\n')
    assert cli.main(["micro-sweep", "--config", str(other)]) == 2
    empty = tmp_path / "empty.toml"
    empty.write_text('values = []\n')
    assert cli.main(["micro-sweep", "--config", str(empty), "--out", str(tmp_path / "x.csv")]) == 2
    assert cli.main(["cost", "--workers", "0"]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_exit_code_for_numerical_errors(monkeypatch, capsys):
    def fail(cfg, workers=1):
        raise ZeroNormBeforeProjection("interpolant vanished")

    monkeypatch.setitem(cli.COMMANDS, "cost", fail)
    assert cli.main(["cost"]) == 3
    assert "numerical error" in capsys.readouterr().err


def test_homogenize_prints_matrix(capsys):
    assert cli.main(["homogenize", "EX1"]) == 0
    assert abs(float(capsys.readouterr().out.split()[0]) - 0.866) <= 1e-3
    assert cli.main(["homogenize", "1 + 0.5*sin(2*pi*x1/eps)", "--dim", "1"]) == 0
    assert abs(float(capsys.readouterr().out.split()[0]) - 0.866) <= 1e-3
    assert cli.main(["homogenize", "sin("]) == 2


DEFAULTS = {
    "integrators": ex.INTEGRATOR_DEFAULTS,
    "stability": ex.STABILITY_DEFAULTS,
    "micro-sweep": ex.MICRO_DEFAULTS,
    "hmm-convergence": ex.HMM_DEFAULTS,
    "showcase": ex.SHOWCASE_DEFAULTS,
    "cost": ex.COST_DEFAULTS,
}


@pytest.mark.parametrize("path", sorted((Path(__file__).resolve().parents[1] / "configs").glob("*.toml")),
                         ids=lambda p: p.stem)
def test_shipped_configs_use_known_keys(path):
    cfg = cli.load_config(path)
    name = cfg.pop("experiment")
    defaults = DEFAULTS[name]

    def check(over, base, where):
        for key, val in over.items():
            assert key in base, f"{where}{key}"
            if isinstance(val, dict):
                check(val, base[key], f"{where}{key}.")

    check(cfg, defaults, "")
