"""Disturbance protocol with scripted controllers, metric oracles, reports."""

import math

import numpy as np
import pytest

from sawlab.bench import (
    BenchReport,
    CellResult,
    DisturbanceGrid,
    RotationRow,
    TrialResult,
    emit_report,
    energy_metric,
    grid_from_logs,
    positive_work,
    read_report,
    rotation_metrics,
    rotation_trial,
    run_disturbance_sweep,
    to_csv,
    to_svg,
    velocity_metric,
    velocity_trial,
)
from sawlab.bench.mock import MockEnv, MockFactory, always_falls, fails_at, never_falls
from sawlab.bench.synthetic import foot_excursion_log, power_log, rotation_log, straight_walk_log
from sawlab.core import EpisodeLog
from sawlab.errors import InvalidArgument, ProtocolError, SchemaError
from sawlab.sim import PushConfig, RobotModel, SawEnv, SimConfig


def grid(**kw):
    base = dict(forces=[50.0, 100.0, 150.0], durations=[0.2, 0.5], directions=["+x", "-x", "+y"],
                trials=5, settle=0.2, recovery=0.4)
    base.update(kw)
    return DisturbanceGrid(**base)


# --- trial protocol --------------------------------------------------------------------

def test_always_falls_one_attempt_per_cell():
    cells = run_disturbance_sweep(MockFactory(), always_falls(), grid())
    assert len(cells) == 18
    for c in cells:
        assert c.attempts == 1 and c.successes == 0 and c.success_pct == 0.0


def test_never_falls_full_trials():
    ctrl = never_falls()
    cells = run_disturbance_sweep(MockFactory(), ctrl, grid())
    assert all(c.attempts == 5 and c.success_pct == 100.0 for c in cells)
    assert len(ctrl.trials_seen) == 18 * 5


@pytest.mark.parametrize("k_fail", [0, 1, 2, 3, 4])
def test_attempts_equal_first_failure_index(k_fail):
    cells = run_disturbance_sweep(MockFactory(), fails_at(k_fail), grid())
    for c in cells:
        assert c.attempts == k_fail + 1
        assert c.successes == k_fail
        assert c.recovery_flags == [True] * k_fail + [False]


def test_without_stop_rule_every_trial_runs():
    cells = run_disturbance_sweep(MockFactory(), fails_at(2), grid(stop_on_first_failure=False))
    assert all(c.attempts == 5 and c.successes == 2 and c.success_pct == 40.0 for c in cells)


def test_cell_specific_script():
    # fail only the second trial of the strongest, longest +x cell
    from sawlab.bench.mock import ScriptedController
    ctrl = ScriptedController(lambda d, f, t, k: (d, f, t, k) == ("+x", 150.0, 0.5, 1))
    cells = {(c.direction, c.force, c.duration): c
             for c in run_disturbance_sweep(MockFactory(), ctrl, grid())}
    assert cells["+x", 150.0, 0.5].attempts == 2
    assert cells["+x", 150.0, 0.5].successes == 1
    assert sum(c.attempts for c in cells.values()) == 17 * 5 + 2


def test_blowup_counts_as_flagged_failure():
    cells = run_disturbance_sweep(MockFactory(blowup=True), never_falls(), grid(forces=[10.0]))
    for c in cells:
        assert c.attempts == 1
        assert c.trials[0].blowup and not c.trials[0].recovered


def test_impulse_recorded_per_cell():
    assert CellResult("+x", 100.0, 0.5).impulse == 50.0
    cells = run_disturbance_sweep(MockFactory(), never_falls(), grid(trials=1))
    assert all(c.to_dict()["impulse"] == c.force * c.duration for c in cells)


def test_trial_logs_rescored_from_disk(tmp_path):
    live = run_disturbance_sweep(MockFactory(), fails_at(3), grid(), seed=5, log_dir=tmp_path)
    logs = [EpisodeLog.read(p) for p in sorted(tmp_path.glob("*.jsonl"))]
    assert len(logs) == sum(c.attempts for c in live)
    imported = grid_from_logs(logs)
    assert [c.to_dict() for c in imported] == [
        {**c.to_dict(), "trials": [{**t.to_dict(), "log_path": None} for t in c.trials]}
        for c in live]


def test_imported_logs_reapply_stop_rule(tmp_path):
    run_disturbance_sweep(MockFactory(), fails_at(1), grid(stop_on_first_failure=False),
                          log_dir=tmp_path)
    logs = [EpisodeLog.read(p) for p in tmp_path.glob("*.jsonl")]
    assert all(c.attempts == 2 for c in grid_from_logs(logs))
    assert all(c.attempts == 5 for c in grid_from_logs(logs, stop_on_first_failure=False))


def test_push_lands_after_settle(tmp_path):
    run_disturbance_sweep(MockFactory(), never_falls(), grid(trials=1, directions=["-x"]),
                          log_dir=tmp_path)
    lg = EpisodeLog.read(next(tmp_path.glob("*.jsonl")))
    pushed = [r for r in lg.records if r.push is not None]
    assert len(pushed) == 1
    assert pushed[0].push["force"] < 0
    assert lg.meta["marks"]["push"] == pytest.approx(0.2)
    assert lg.duration == pytest.approx(0.6)


def test_planar_env_rejects_lateral_pushes():
    model = RobotModel(with_arms=False)
    factory = lambda s=0: SawEnv(model, SimConfig(), seed=s)  # noqa: E731
    with pytest.raises(ProtocolError):
        run_disturbance_sweep(factory, never_falls(), grid(directions=["+y"]))


def test_live_sweep_on_planar_env():
    model = RobotModel(with_arms=False)
    pose = model.nominal_pose()

    class Hold:
        act_dim = model.n_act

        def reset(self):
            pass

        def act(self, f, c, obs=None):
            return pose

    sim = SimConfig(push=PushConfig(probability=0.0))
    factory = lambda s=0: SawEnv(model, sim, seed=s)  # noqa: E731
    g = DisturbanceGrid(forces=[5.0, 2000.0], durations=[0.2], trials=2, settle=0.5,
                        recovery=1.0)
    cells = run_disturbance_sweep(factory, Hold(), g)
    by = {(c.direction, c.force): c for c in cells}
    assert by["+x", 5.0].success_pct == 100.0 and by["+x", 5.0].attempts == 2
    assert by["+x", 2000.0].attempts == 1 and by["+x", 2000.0].successes == 0


def test_grid_validation_and_scaling():
    with pytest.raises(InvalidArgument):
        DisturbanceGrid(forces=[100.0, 50.0])
    with pytest.raises(InvalidArgument):
        DisturbanceGrid(forces=[10.0], trials=0)
    with pytest.raises(InvalidArgument):
        DisturbanceGrid(forces=[10.0], directions=["up"])
    g = DisturbanceGrid.scaled(428.0, 2)
    assert g.forces == [79.0, 214.0]
    g = DisturbanceGrid.scaled(214.0, 2)
    assert g.forces == [39.5, 107.0]


# --- metric oracles ----------------------------------------------------------------------

def test_rotation_exact_tracking():
    r = rotation_metrics(rotation_log(0.5, 5.0, foot_radius=0.2), 0.5, 5.0)
    assert r.angular_error < 1e-12 and r.lateral_drift == 0.0


def test_rotation_undershoot():
    r = rotation_metrics(rotation_log(0.5, 30.0, final_rotation=14.5), 0.5, 30.0)
    assert r.commanded == 15.0
    assert abs(r.rotation - 14.5) < 1e-12
    assert abs(r.angular_error - 0.5) < 1e-12


def test_rotation_multiple_turns_unwrap():
    r = rotation_metrics(rotation_log(1.0, 20.0), 1.0, 20.0)
    assert abs(r.rotation - 20.0) < 1e-12


def test_lateral_drift_hand_value():
    r = rotation_metrics(foot_excursion_log(0.5), 0.0, 1.0)
    assert abs(r.lateral_drift - 0.1952) < 1e-15


def test_drift_uses_world_frame_feet():
    # feet 0.4 m out on a turning base: the circle they trace is still 0.4 m
    r = rotation_metrics(rotation_log(0.5, 5.0, foot_radius=0.4), 0.5, 5.0)
    assert abs(r.lateral_drift - (0.4 - 0.3048)) < 1e-12


def test_rotation_requires_channels():
    # an imported log that carries only the base channel
    head = '{"schema": "sawlab.episode_log", "version": 1, "dt": 0.02}'
    rec = '{"obs": {"motor_pos": [0.0], "time": 0.02, "base_pos": [1, 0, 0.8]}, "cmd": [0, 0, 0, 0]}'
    with pytest.raises(SchemaError):
        rotation_metrics(EpisodeLog.loads(head + "\n" + rec + "\n"), 0.5, 0.02)


@pytest.mark.parametrize("distance, mean", [(10.0, 1.0), (11.3, 1.13), (7.4, 0.74)])
def test_velocity_metric(distance, mean):
    r = velocity_metric(straight_walk_log(1.0, 10.0, distance=distance, stop_time=1.0), 1.0, 10.0)
    assert r.d_c == 10.0
    assert abs(r.d_r - distance) < 1e-12
    assert abs(r.mean_velocity - mean) < 1e-12


def test_velocity_log_too_short():
    with pytest.raises(ProtocolError):
        velocity_metric(straight_walk_log(1.0, 5.0), 1.0, 10.0)


def test_energy_constant_power():
    T = 500                                      # 10 s at 50 Hz
    e = energy_metric(power_log(np.full((T, 1), 5.0), np.full((T, 1), 2.0), 0.02, distance=10.0))
    assert abs(e.positive_work - 100.0) < 1e-12
    assert abs(e.energy_per_meter - 10.0) < 1e-12


def test_energy_braking_contributes_nothing():
    lg = power_log(np.full((100, 1), 5.0), np.full((100, 1), -2.0), 0.02, distance=1.0)
    assert positive_work(lg) == 0.0


def test_energy_two_motors_opposite_power():
    T = 100                                      # 2 s
    tau = np.tile([5.0, 5.0], (T, 1))
    om = np.tile([1.0, -1.0], (T, 1))
    e = energy_metric(power_log(tau, om, 0.02, distance=1.0))
    assert abs(e.positive_work - 10.0) < 1e-12
    assert abs(e.energy_per_meter - 10.0) < 1e-12


def test_energy_standing_not_normalized():
    e = energy_metric(power_log(np.ones((10, 1)), np.ones((10, 1)), 0.02, distance=0.05))
    assert e.energy_per_meter is None and e.positive_work == pytest.approx(0.2)


def test_energy_invariant_to_dt_refinement():
    def work(dt):
        t = np.arange(1, int(round(4.0 / dt)) + 1) * dt
        tau = 20.0 * np.sin(2 * np.pi * 0.5 * t)[:, None]
        om = (3.0 * np.sin(2 * np.pi * 0.5 * t + 0.3) + 0.5)[:, None]
        return positive_work(power_log(tau, om, dt, distance=2.0))
    coarse, fine = work(0.02), work(0.0005)
    assert abs(coarse / fine - 1.0) < 0.005


# --- live protocols on the mock ----------------------------------------------------------------

def test_velocity_trial_on_mock():
    from sawlab.bench.mock import never_falls as nf
    tr = velocity_trial(MockEnv(), nf(), 1.0, 10.0, seed=0, settle=1.0, stop=1.0)
    assert tr.velocity.d_c == 10.0
    assert abs(tr.velocity.d_r - 10.0) < 1e-9
    assert tr.energy.positive_work == 0.0


def test_rotation_refused_without_yaw():
    env = SawEnv(RobotModel(with_arms=False))
    with pytest.raises(ProtocolError):
        rotation_trial(env, never_falls(), 0.5, 1.0, seed=0)


# --- reports -------------------------------------------------------------------------------

def sample_report():
    cell = CellResult("+x", 100.0, 0.5, [TrialResult(k, 10 + k, k != 1 and k != 3)
                                        for k in range(5)])
    other = CellResult("-x", 50.0, 0.2, [TrialResult(0, 3, True)])
    rot = [RotationRow(0.5, d, [0.1 * d, 0.2 * d], [0.01, 0.03]) for d in (1.0, 5.0, 30.0)]
    return BenchReport(disturbance=[cell, other], rotation=rot,
                       velocity={"v": 1.0, "duration": 10.0, "d_c": 10.0, "d_r": 11.3,
                                 "mean_velocity": 1.13, "log": None},
                       energy={"positive_work": 100.0, "distance": 10.0,
                               "energy_per_meter": 10.0, "log": None},
                       meta={"seed": 1, "policy_hash": "abc"})


def test_report_json_round_trip(tmp_path):
    r = sample_report()
    paths = emit_report(r, tmp_path)
    assert sorted(p.suffix for p in paths) == [".csv", ".json", ".svg"]
    back = read_report(tmp_path / "report.json")
    assert back.to_dict() == r.to_dict()
    assert back.to_json() == r.to_json()


def test_csv_three_of_five_row():
    text = to_csv(sample_report())
    lines = text.splitlines()
    assert lines[1].startswith("disturbance,+x,100.0,0.5,50.0,")
    assert lines[1].endswith(",3,5,60.0")


def test_csv_row_count():
    r = sample_report()
    n_rows = len(to_csv(r).splitlines()) - 1
    cells, trials = len(r.disturbance), sum(c.attempts for c in r.disturbance)
    assert n_rows == cells + trials + 5 * len(r.rotation) + 3 + 3


def test_svg_heatmap_per_direction():
    svg = to_svg(sample_report())
    assert svg.count('class="heatmap"') == 2
    assert 'data-direction="+x"' in svg and 'data-direction="-x"' in svg
    assert "60%" in svg and "3/5" in svg
    assert 'class="rotation-error"' in svg and 'class="whisker"' in svg


def test_svg_without_rotation_omits_panel():
    r = sample_report()
    r.rotation = []
    svg = to_svg(r)
    assert "rotation" not in svg
    assert svg.count('class="heatmap"') == 2


def test_report_schema_checks():
    d = sample_report().to_dict()
    d["version"] = 2
    with pytest.raises(SchemaError):
        BenchReport.from_dict(d)
    d = sample_report().to_dict()
    d["disturbance"][0]["successes"] = 4
    with pytest.raises(SchemaError):
        BenchReport.from_dict(d)


def test_rotation_row_stats():
    row = RotationRow(0.5, 5.0, [1.0, 3.0], [0.0, 0.2])
    assert row.theta_c == 2.5
    assert row.angular_error == (2.0, 1.0)
    m, s = row.lateral_drift
    assert abs(m - 0.1) < 1e-15 and abs(s - 0.1) < 1e-15
    assert all(math.isnan(x) for x in RotationRow(0.5, 1.0, [], []).angular_error)
