import json

import numpy as np
import pytest
import yaml

from tcbf_transfer import cli
from tcbf_transfer.config import scenario_to_dict
from tcbf_transfer.sim.log import TrajectoryLog
from tcbf_transfer.sim.metrics import metrics


def write_yaml(path, doc):
    path.write_text(yaml.safe_dump(doc, sort_keys=False))
    return str(path)


def load_json(path):
    return json.loads(path.read_text())


@pytest.fixture
def linear_margin_config(tmp_path):
    doc = yaml.safe_load(cli.data_path(cli.PACKAGED["margin_example"]).read_text())
    doc["margin_problem"] = {"alpha_b": {"kind": "linear", "c": 1.0}, "alpha_V": {"kind": "linear", "c": 1.0},
                             "r": {"kind": "zero"}, "s0": 1.0, "eta": 0.1, "s_max": 20.0}
    return write_yaml(tmp_path / "lin.yaml", doc)


def test_margin_solve_matches_closed_form(tmp_path, linear_margin_config):
    out = tmp_path / "solve"
    assert cli.main(["margin", "solve", "--config", linear_margin_config, "--out", str(out)]) == 0
    arr = np.loadtxt(out / "margin.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(arr[:, 1], 0.1 * arr[:, 0], rtol=1e-9)
    assert load_json(out / "margin.json")["status"] == "PASS"


def test_margin_verify_pass_and_half_fails(tmp_path, linear_margin_config):
    solved = tmp_path / "solve"
    cli.main(["margin", "solve", "--config", linear_margin_config, "--out", str(solved)])
    out = tmp_path / "ok"
    code = cli.main(["margin", "verify", "--config", linear_margin_config, "--input", str(solved / "margin.csv"),
                     "--out", str(out)])
    assert code == 0 and load_json(out / "margin.json")["status"] == "PASS"
    arr = np.loadtxt(solved / "margin.csv", delimiter=",", skiprows=1)
    half = tmp_path / "half.csv"
    np.savetxt(half, np.column_stack([arr[:, 0], arr[:, 1] / 2, arr[:, 2] / 2]), delimiter=",",
               header="s,phi,dphi", comments="")
    out = tmp_path / "half"
    code = cli.main(["margin", "verify", "--config", linear_margin_config, "--input", str(half), "--out", str(out)])
    rep = load_json(out / "margin.json")
    assert code == 1 and rep["status"] == "FAIL"
    assert rep["anchor"]["status"] == "FAIL"


def test_margin_compare(tmp_path):
    out = tmp_path / "cmp"
    assert cli.main(["margin", "compare", "--config", "margin_example", "--out", str(out)]) == 0
    rep = load_json(out / "margin.json")
    assert set(rep["methods"]) == {"closed_form", "picard"}
    assert rep["methods"]["picard"]["iterations"] <= 50


def test_certificate(tmp_path):
    assert cli.main(["certificate", "--out", str(tmp_path)]) == 0
    rep = load_json(tmp_path / "certificate.json")
    assert rep["lyapunov_residual"] <= 1e-9
    assert rep["samples"]["n"] == 1000 and rep["samples"]["status"] == "PASS"


def test_plan_deterministic(tmp_path):
    for name in ("a", "b"):
        assert cli.main(["plan", "--out", str(tmp_path / name)]) == 0
    for f in ("waypoints.csv", "trajectory.csv", "plan.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    rep = load_json(tmp_path / "a" / "plan.json")
    assert rep["status"] == "PASS" and rep["path_clearance_inflated"] > 0
    header = (tmp_path / "a" / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,px,py,pz,vx,vy,vz,ax,ay,az,yaw"


def test_simulate_matches_library_run(tmp_path, fixture_runs):
    for mode in ("nominal", "filtered"):
        assert cli.main(["simulate", "--mode", mode, "--out", str(tmp_path)]) == 0
        sc, log, _ = fixture_runs[mode]
        assert load_json(tmp_path / f"metrics_{mode}.json") == json.loads(json.dumps(metrics(log, sc)))
    nom = load_json(tmp_path / "metrics_nominal.json")["true_clearance"]["min"]
    fil = load_json(tmp_path / "metrics_filtered.json")["true_clearance"]["min"]
    assert nom < 0 < fil


def test_simulate_rerun_bit_identical(tmp_path):
    for name in ("a", "b"):
        assert cli.main(["simulate", "--duration", "1.5", "--out", str(tmp_path / name)]) == 0
    for f in ("log_filtered.csv", "metrics_filtered.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_audit_and_report_from_logs(tmp_path, fixture_runs):
    paths = {}
    for mode in ("nominal", "filtered"):
        paths[mode] = tmp_path / f"log_{mode}.csv"
        fixture_runs[mode][1].to_csv(paths[mode])
    assert cli.main(["audit", "--log", str(paths["filtered"]), "--out", str(tmp_path / "af")]) == 0
    assert load_json(tmp_path / "af" / "audit.json")["passed"]
    assert cli.main(["audit", "--mode", "nominal", "--log", str(paths["nominal"]), "--out",
                     str(tmp_path / "an")]) == 0
    out = tmp_path / "rep"
    args = ["report", "--out", str(out)] + [f"--log={m}={p}" for m, p in paths.items()]
    assert cli.main(args) == 0
    rep = load_json(out / "report.json")
    for mode in ("nominal", "filtered"):
        sc, log, _ = fixture_runs[mode]
        back = TrajectoryLog.from_csv(paths[mode])
        assert np.abs(back.data - log.data)[np.isfinite(log.data)].max() <= 1e-12
        ref = metrics(log, sc)
        assert rep[mode]["true_clearance"]["min"] == pytest.approx(ref["true_clearance"]["min"], abs=1e-12)
        assert rep[mode]["b2_min"]["min"] == pytest.approx(ref["b2_min"]["min"], abs=1e-12)
    for f in ("path.svg", "clearance.svg", "barriers_filtered.svg", "barriers_nominal.svg"):
        assert (out / f).read_text().lstrip().startswith("<?xml")
    first = {f: (out / f).read_bytes() for f in ("report.json", "path.svg")}
    assert cli.main(args) == 0
    assert all((out / f).read_bytes() == b for f, b in first.items())


def test_audit_eps_override_flags_coarse_stride(tmp_path, fixture_runs):
    path = tmp_path / "log.csv"
    fixture_runs["filtered"][1].to_csv(path)
    code = cli.main(["audit", "--log", str(path), "--stride", "50", "--out", str(tmp_path)])
    assert code == 0
    assert load_json(tmp_path / "audit.json")["dt"] == pytest.approx(0.05)


def test_exit_codes(tmp_path, capsys):
    assert cli.main(["plan", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)]) == 1
    doc = scenario_to_dict(cli._load(type("A", (), {"config": None})())[1])
    doc["cbf"]["bogus"] = 1
    assert cli.main(["plan", "--config", write_yaml(tmp_path / "bad.yaml", doc), "--out", str(tmp_path)]) == 1
    assert "cbf.bogus" in capsys.readouterr().err
    assert cli.main(["simulate", "--dt", "0.05", "--out", str(tmp_path)]) == 1
    assert "--dt" in capsys.readouterr().err
    doc = scenario_to_dict(cli._load(type("A", (), {"config": None})())[1])
    doc["certificate"]["kp"] = -1.0
    assert cli.main(["certificate", "--config", write_yaml(tmp_path / "nh.yaml", doc), "--out", str(tmp_path)]) == 1
    assert "certificate" in capsys.readouterr().err
    doc = scenario_to_dict(cli._load(type("A", (), {"config": None})())[1])
    doc["planner"]["max_iterations"] = 3
    assert cli.main(["plan", "--config", write_yaml(tmp_path / "np.yaml", doc), "--out", str(tmp_path)]) == 2
    assert "PlanningError" in capsys.readouterr().err


def test_bad_margin_is_validation_failure(tmp_path, capsys):
    doc = scenario_to_dict(cli._load(type("A", (), {"config": None})())[1])
    doc["margin"] = {"kind": "power", "eta": 0.05, "s0": 1.0, "lam": 0.5}
    path = write_yaml(tmp_path / "m.yaml", doc)
    assert cli.main(["simulate", "--config", path, "--duration", "0.1", "--out", str(tmp_path)]) == 1
    assert "margin" in capsys.readouterr().err


@pytest.mark.parametrize("workers", ["1", "2"])
def test_batch(tmp_path, workers):
    good = str(cli.data_path(cli.PACKAGED["free_space"]))
    bad = write_yaml(tmp_path / "bad.yaml", {"schema_version": 1, "nope": 1})
    code = cli.main(["simulate", "--batch", f"{good},{bad}", "--duration", "0.5", "--workers", workers,
                     "--out", str(tmp_path / "b")])
    rep = load_json(tmp_path / "b" / "batch.json")
    assert code == 1
    assert [r["exit"] for r in rep["runs"]] == [0, 1]
    assert (tmp_path / "b" / "free_space" / "log_nominal.csv").exists()
