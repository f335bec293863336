"""End-to-end runs of the command-line interface, in process."""

import json

import pytest

from chainbreak.cli import main
from chainbreak.errors import IntegrationError


def run_cli(*argv):
    return main(list(argv))


def read_json(path):
    return json.loads(path.read_text())


def test_validate_default_potential(tmp_path):
    out = tmp_path / "v"
    assert run_cli("validate", "--out", str(out)) == 0
    doc = read_json(out / "results.json")
    assert doc["command"] == "validate"
    assert doc["results"]["all_passed"] is True
    assert any(c["name"] == "geometry_ordering" for c in doc["results"]["checks"])


def test_validate_failing_potential_exits_2(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": {"potential": {
        "form": "quadratic", "coeffs": [1.0, -4.0, 3.0], "a": 1.5}}}))
    out = tmp_path / "v"
    assert run_cli("validate", "--config", str(cfg), "--out", str(out)) == 2
    doc = read_json(out / "results.json")
    assert doc["results"]["all_passed"] is False


def test_deterministic_curves(tmp_path):
    out = tmp_path / "d"
    assert run_cli("deterministic", "--preset", "fast", "--out", str(out)) == 0
    lines = (out / "curves.csv").read_text().splitlines()
    assert lines[0] == "t,x_det,A,d_plus,d_minus,v,xi"
    first = [float(v) for v in lines[1].split(",")]
    assert first == pytest.approx([0.0, 2.0, -4.0, 1.0, -1.0, 0.0, 0.125])
    doc = read_json(out / "results.json")
    assert doc["results"]["t_close"] == pytest.approx(0.5)
    assert doc["results"]["err_est"] < 1e-8
    assert doc["derived"]["regime"] == "fast"


def test_simulate_with_trajectory_dump(tmp_path):
    out = tmp_path / "s"
    code = run_cli("simulate", "--preset", "fast", "--n", "10",
                   "--seed", "3", "--dump-every", "200", "--out", str(out))
    assert code == 0
    doc = read_json(out / "results.json")
    assert doc["results"]["n"] == 10
    assert 0.0 <= doc["results"]["p_hat"] <= 1.0
    assert doc["derived"]["dt_effective"] > 0
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "t,x,left_edge,right_edge"
    assert len(lines) > 5


def test_unknown_config_field_exits_2(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"simulate": {"count": 5}}))
    assert run_cli("simulate", "--config", str(cfg)) == 2
    assert "simulate.count" in capsys.readouterr().err


def test_malformed_json_exits_2(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    assert run_cli("simulate", "--config", str(cfg)) == 2


def test_missing_config_exits_2(tmp_path):
    assert run_cli("simulate", "--config", str(tmp_path / "nope.json")) == 2


def test_bad_potential_form_exits_2(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": {"potential": {"form": "morse"}}}))
    assert run_cli("validate", "--config", str(cfg)) == 2


def test_runtime_failure_exits_3(tmp_path, monkeypatch):
    import chainbreak.cli as cli_mod

    def boom(params, dt=None):
        raise IntegrationError("step control gave up")

    monkeypatch.setattr(cli_mod, "solve_deterministic", boom)
    assert run_cli("deterministic", "--preset", "fast",
                   "--out", str(tmp_path / "d")) == 3


def test_resolved_config_round_trip(tmp_path):
    out1 = tmp_path / "one"
    assert run_cli("simulate", "--preset", "fast", "--n", "15", "--seed", "9",
                   "--out", str(out1)) == 0
    doc = read_json(out1 / "results.json")
    cfg = tmp_path / "echo.json"
    cfg.write_text(json.dumps(doc["config"]))
    out2 = tmp_path / "two"
    assert run_cli("simulate", "--config", str(cfg), "--out", str(out2)) == 0
    assert (out1 / "results.json").read_bytes() == (out2 / "results.json").read_bytes()


def test_flag_overrides_echoed(tmp_path, capsys):
    out = tmp_path / "o"
    assert run_cli("simulate", "--preset", "fast", "--sigma", "0.02",
                   "--n", "5", "--out", str(out)) == 0
    echo = json.loads(capsys.readouterr().out)
    assert echo["model"]["sigma"] == pytest.approx(0.02)
    assert echo["model"]["epsilon"] == pytest.approx(0.25)
    assert echo["simulate"]["n"] == 5


def test_sweep_csv(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "sweep": {"sigmas": [0.01], "epsilons": [0.25, 0.05], "n": 8}}))
    out = tmp_path / "w"
    assert run_cli("sweep", "--config", str(cfg), "--out", str(out)) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "sigma,epsilon,regime,p_left,ci_low,ci_high,n"
    assert len(lines) == 3
    assert "fast" in lines[1] and "intermediate" in lines[2]


def test_corridor_rows_respect_bound(tmp_path):
    out = tmp_path / "c"
    assert run_cli("corridor", "--preset", "fast", "--n", "300",
                   "--out", str(out)) == 0
    doc = read_json(out / "results.json")
    for row in doc["results"]["rows"]:
        assert row["p_hat"] <= row["bound"]


def test_tau_l_outputs(tmp_path):
    out = tmp_path / "t"
    assert run_cli("tau-l", "--preset", "fast", "--n", "50",
                   "--out", str(out)) == 0
    doc = read_json(out / "results.json")
    assert doc["results"]["t_cap"] > 0
    lines = (out / "tau_l.csv").read_text().splitlines()
    assert lines[0] == "trial,tau,sign"
    assert len(lines) == 51


def test_conditional_outputs(tmp_path):
    out = tmp_path / "co"
    assert run_cli("conditional", "--preset", "fast", "--n", "60",
                   "--out", str(out)) == 0
    doc = read_json(out / "results.json")
    assert 0.0 <= doc["results"]["p_exit"] <= 1.0


def test_chain_histogram(tmp_path):
    out = tmp_path / "ch"
    assert run_cli("chain", "--preset", "fast", "--n", "6",
                   "--out", str(out)) == 0
    lines = (out / "histogram.csv").read_text().splitlines()
    assert lines[0] == "bond_index,count,fraction"
    fractions = [float(l.split(",")[2]) for l in lines[1:]]
    assert sum(fractions) == pytest.approx(1.0)


def test_thread_count_leaves_results_identical(tmp_path):
    out1, out2 = tmp_path / "w1", tmp_path / "w2"
    assert run_cli("simulate", "--preset", "fast", "--n", "16", "--seed", "5",
                   "--threads", "1", "--out", str(out1)) == 0
    assert run_cli("simulate", "--preset", "fast", "--n", "16", "--seed", "5",
                   "--threads", "2", "--out", str(out2)) == 0
    assert (out1 / "results.json").read_bytes() == (out2 / "results.json").read_bytes()


def test_version_flag():
    assert run_cli("--version") == 0


def test_no_command_is_usage_error():
    assert run_cli() == 2
