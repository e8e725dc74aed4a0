"""The sawlab command: exit codes, output locations, determinism, report re-emission."""

import json
import subprocess
import sys

import pytest
import yaml

from sawlab import validate
from sawlab.bench import read_report
from sawlab.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main
from sawlab.validate import Check

TINY = {"preset": "balance-smoke", "policy": {"hidden": [4, 4]},
        "ppo": {"batch_steps": 100, "num_envs": 2, "iterations": 2, "eval_every": 1,
                "eval_episodes": 1, "seq_len": 25, "epochs": 1, "minibatches": 2}}


@pytest.fixture
def tiny_yaml(tmp_path):
    p = tmp_path / "tiny.yaml"
    p.write_text(yaml.safe_dump(TINY))
    return p


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """Two serial training runs of the tiny config with the same seed."""
    root = tmp_path_factory.mktemp("train")
    cfg = root / "tiny.yaml"
    cfg.write_text(yaml.safe_dump(TINY))
    outs = []
    for k in range(2):
        out = root / f"run{k}"
        assert main(["train", "--config", str(cfg), "--seed", "3", "--serial",
                     "--out", str(out)]) == EXIT_OK
        outs.append(out)
    return outs


def test_entry_point_installed():
    r = subprocess.run([sys.executable, "-m", "sawlab.cli", "--help"], capture_output=True,
                       text=True)
    assert r.returncode == 0
    assert "train" in r.stdout and "bench" in r.stdout


# --- determinism ---------------------------------------------------------------------

def test_train_serial_bitwise_identical(trained):
    a, b = trained
    for name in ("metrics.csv", "policy.json", "config.yaml"):
        if name == "config.yaml":
            # the resolved output path differs between the two runs, nothing else does
            da, db = (yaml.safe_load((d / name).read_text()) for d in (a, b))
            da.pop("out"), db.pop("out")
            assert da == db
        else:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_bench_disturbance_bitwise_identical(trained, tmp_path):
    pol = trained[0] / "policy.json"
    reports = []
    for k in range(2):
        out = tmp_path / f"b{k}"
        assert main(["bench", "disturbance", "--policy", str(pol), "--forces", "20,400",
                     "--durations", "0.2", "--trials", "2", "--seed", "1",
                     "--out", str(out)]) == EXIT_OK
        reports.append(out)
    for name in ("report.json", "report.csv", "report.svg"):
        assert (reports[0] / name).read_bytes() == (reports[1] / name).read_bytes(), name
    rep = read_report(reports[0] / "report.json")
    assert {(c.direction, c.force) for c in rep.disturbance} == {
        ("+x", 20.0), ("+x", 400.0), ("-x", 20.0), ("-x", 400.0)}
    assert rep.meta["source"] == "live"


def test_bench_logs_rescored_from_live_run(trained, tmp_path):
    pol = trained[0] / "policy.json"
    live = tmp_path / "live"
    main(["bench", "disturbance", "--policy", str(pol), "--forces", "30",
          "--durations", "0.2", "--trials", "2", "--directions=-x", "--out", str(live)])
    redo = tmp_path / "redo"
    assert main(["bench", "disturbance", "--logs", str(live / "logs"), "--out",
                 str(redo)]) == EXIT_OK
    a, b = read_report(live / "report.json"), read_report(redo / "report.json")
    assert [(c.successes, c.attempts) for c in a.disturbance] == \
           [(c.successes, c.attempts) for c in b.disturbance]


# --- metrics from the command line ---------------------------------------------------------

def test_bench_velocity_synthetic(tmp_path, capsys):
    assert main(["bench", "velocity", "--synthetic", "--v", "1.0", "--t", "10",
                 "--out", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["velocity"]["d_c"] == 10.0
    assert abs(rep["velocity"]["d_r"] - 10.0) < 1e-9
    assert "d_c 10.000 m" in capsys.readouterr().out


def test_bench_rotation_three_rows(tmp_path):
    assert main(["bench", "rotation", "--synthetic", "--omega", "0.5", "--durations", "1,5,30",
                 "--out", str(tmp_path)]) == EXIT_OK
    rep = read_report(tmp_path / "report.json")
    assert [r.duration for r in rep.rotation] == [1.0, 5.0, 30.0]
    assert [r.theta_c for r in rep.rotation] == [0.5, 2.5, 15.0]
    assert all(len(r.angular_errors) == 3 for r in rep.rotation)
    # the written logs score the same when imported
    redo = tmp_path / "redo"
    assert main(["bench", "rotation", "--logs", str(tmp_path / "logs"), "--durations", "1,5,30",
                 "--out", str(redo)]) == EXIT_OK
    back = read_report(redo / "report.json")
    assert [r.angular_errors for r in back.rotation] == [r.angular_errors for r in rep.rotation]


def test_bench_energy_synthetic(tmp_path):
    assert main(["bench", "energy", "--synthetic", "--v", "1.0", "--t", "10",
                 "--out", str(tmp_path)]) == EXIT_OK
    e = read_report(tmp_path / "report.json").energy
    assert abs(e["positive_work"] - 100.0) < 1e-9
    assert abs(e["energy_per_meter"] - 10.0) < 1e-9


def test_reports_merge_unless_fresh(tmp_path):
    main(["bench", "velocity", "--synthetic", "--out", str(tmp_path)])
    main(["bench", "energy", "--synthetic", "--out", str(tmp_path)])
    rep = read_report(tmp_path / "report.json")
    assert rep.velocity and rep.energy
    main(["bench", "energy", "--synthetic", "--fresh", "--out", str(tmp_path)])
    rep = read_report(tmp_path / "report.json")
    assert not rep.velocity and rep.energy


def test_report_reemits_formats(tmp_path):
    main(["bench", "rotation", "--synthetic", "--out", str(tmp_path)])
    dest = tmp_path / "again"
    assert main(["report", "--in", str(tmp_path / "report.json"), "--format", "csv,svg",
                 "--out", str(dest), "--stem", "fig"]) == EXIT_OK
    assert sorted(p.name for p in dest.iterdir()) == ["fig.csv", "fig.svg"]
    assert (dest / "fig.csv").read_text() == (tmp_path / "report.csv").read_text()


# --- exit codes and output root --------------------------------------------------------------

def test_sawlab_out_sets_default_root(tmp_path, monkeypatch):
    monkeypatch.setenv("SAWLAB_OUT", str(tmp_path / "root"))
    assert main(["bench", "velocity", "--synthetic"]) == EXIT_OK
    assert (tmp_path / "root" / "bench" / "report.json").is_file()


def test_train_default_out_under_root(tiny_yaml, tmp_path, monkeypatch):
    monkeypatch.setenv("SAWLAB_OUT", str(tmp_path))
    assert main(["train", "--config", str(tiny_yaml), "--iterations", "1", "--seed", "5",
                 "--serial"]) == EXIT_OK
    assert (tmp_path / "balance-smoke-seed5" / "policy.json").is_file()


@pytest.mark.parametrize("argv", [
    ["train", "--preset", "moonwalk"],
    ["train", "--config", "/nonexistent.yaml"],
    ["bench", "disturbance", "--policy", "/nonexistent/policy.json"],
    ["bench", "disturbance"],
    ["bench", "velocity", "--synthetic", "--t", "0"],
    ["bench", "rotation", "--logs", "x", "--synthetic"],
    ["bench", "disturbance", "--logs", "/nonexistent-dir"],
    ["report", "--in", "/nonexistent.json"],
])
def test_config_and_input_errors_exit_2(argv, tmp_path, monkeypatch):
    monkeypatch.setenv("SAWLAB_OUT", str(tmp_path))
    assert main(argv) == EXIT_CONFIG


def test_bad_config_value_exits_2(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text(yaml.safe_dump({"ppo": {"gamma": 2.0}}))
    assert main(["train", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_corrupt_report_exits_2(tmp_path):
    p = tmp_path / "r.json"
    p.write_text(json.dumps({"schema": "something-else"}))
    assert main(["report", "--in", str(p)]) == EXIT_CONFIG


def test_runtime_error_exits_3(trained, tmp_path):
    # a live rotation needs yaw control, which the planar simulator lacks
    pol = trained[0] / "policy.json"
    assert main(["bench", "rotation", "--policy", str(pol), "--durations", "1", "--trials", "1",
                 "--out", str(tmp_path)]) == EXIT_RUNTIME


def test_argparse_usage_error_exits_2():
    with pytest.raises(SystemExit) as e:
        main(["bench", "sideways"])
    assert e.value.code == 2


def test_validation_failure_exits_4(monkeypatch, capsys):
    monkeypatch.setitem(validate.SCENARIOS, "drop-test",
                        lambda: [Check("energy drift", 0.5, 0.01, False)])
    assert main(["validate", "drop-test"]) == EXIT_VALIDATION
    assert "FAIL energy drift" in capsys.readouterr().out


@pytest.mark.parametrize("scenario", ["drop-test", "push-test", "gradcheck"])
def test_validate_scenarios_pass(scenario, capsys):
    assert main(["validate", scenario]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(ln.startswith("PASS") for ln in lines)


def test_validate_reward_audit_small(capsys):
    assert main(["validate", "reward-audit", "--n", "2000"]) == EXIT_OK
    assert all(ln.startswith("PASS") for ln in capsys.readouterr().out.splitlines())
