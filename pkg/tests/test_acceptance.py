"""Acceptance checks 1 to 9.

Each check records a verdict line; the terminal summary prints one PASS/FAIL
line per criterion. The two training checks (8 and the report in 9, which
reuses the trained stand policy) take up to 30 min and 2 h of wall time and
are skipped under SAWLAB_QUICK=1. SAWLAB_WALK_BUDGET shortens the walking
budget (seconds) for local iteration; the verdict then states the budget used.
"""

import csv
import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest
import yaml

from conftest import slow
from reward_cases import DT, WALK, cases
from sawlab.bench import (
    DisturbanceGrid,
    energy_metric,
    grid_from_logs,
    read_report,
    rotation_metrics,
    run_disturbance_sweep,
    velocity_metric,
)
from sawlab.bench.mock import MockEnv, MockFactory, fails_at, never_falls
from sawlab.bench.protocols import Phase, record_episode
from sawlab.bench.synthetic import power_log, rotation_log, straight_walk_log
from sawlab.config import ExperimentConfig
from sawlab.core import Command, EpisodeLog, mirror_obs
from sawlab.policy import LstmPolicy, gaussian_log_prob, load_checkpoint
from sawlab.rewards import (
    ContactTracker,
    RewardInputs,
    batch_terms,
    batch_total,
    r_feet_contact,
    total_reward,
)
from sawlab.sim import RobotModel, SimConfig, Simulator, compile_model
from sawlab.train import evaluate, train_loop
from sawlab.train.ppo import PpoConfig, SequenceBatch, flat_grads, flat_params, ppo_loss
from sawlab.validate import fuzz_reward_inputs, model_reward_config, random_observation

WALK_BUDGET = float(os.environ.get("SAWLAB_WALK_BUDGET", 7200))


# --- 1 reward fidelity -------------------------------------------------------------------

def test_1_reward_fidelity(verdict):
    t0 = time.perf_counter()
    table = cases()
    worst = max(max(abs(c.scalar() - c.expected), abs(c.batched() - c.expected)) for c in table)
    model = RobotModel()
    cfg = model_reward_config(model)
    rng = np.random.default_rng(101)
    top = -math.inf
    for _ in range(5):                                  # 5 x 20000 = 1e5 states
        inp = fuzz_reward_inputs(rng, 20_000, model.n_act, len(cfg.c_arm))
        top = max(top, float(batch_total(batch_terms(inp, cfg), cfg, skip=("feet_airtime",)).max()))
    took = time.perf_counter() - t0
    ok = len(table) >= 30 and worst <= 1e-12 and top <= 1.02 + 1e-12 and took < 10
    assert verdict(1, "rewards", ok, f"{len(table)} cases, max error {worst:.1e}; fuzzed "
                   f"non-airtime max {top:.6f} <= 1.02 on 1e5 states; {took:.1f} s")


# --- 2 grace window ----------------------------------------------------------------------

def test_2_grace_window(verdict):
    rng = np.random.default_rng(202)
    wrong = checked = 0
    for _ in range(400):
        tr = ContactTracker(DT)
        tr.reset((True, True), 0.0)
        seq = [tuple(bool(x) for x in rng.random(2) < 0.6) for _ in range(60)]
        last_single = None
        for k, c in enumerate(seq, start=1):
            t = k * DT
            tr.update(c, t)
            if sum(c) == 1:
                last_single = k
            # 0.2 s at 50 Hz is 10 steps after the single-contact step
            expect = 1.0 if last_single is not None and k - last_single <= 10 else 0.0
            wrong += r_feet_contact(tr, WALK, t) != expect
            checked += 1
    # the edge itself: one single step, then double support
    tr = ContactTracker(DT)
    tr.reset((True, True), 0.0)
    tr.update((False, True), DT)
    edge = []
    for k in range(2, 14):
        tr.update((True, True), k * DT)
        edge.append(r_feet_contact(tr, WALK, k * DT))
    ok = wrong == 0 and edge == [1.0] * 10 + [0.0] * 2
    assert verdict(2, "grace", ok, f"{checked} scripted steps, {wrong} mismatches; "
                   f"term holds 10 steps (0.2 s) then drops")


# --- 3 mirror invariance -----------------------------------------------------------------

def test_3_mirror_invariance(verdict):
    model = RobotModel()
    ms = model.mirror_spec()
    cfg = model_reward_config(model)
    rng = np.random.default_rng(303)
    n = 10_000
    obs = [random_observation(rng, model.n_act, 2) for _ in range(n)]
    cmds = [Command(*rng.uniform(-1, 1, 3), heading_ref=float(rng.uniform(-3, 3))) for _ in obs]
    a = batch_total(batch_terms(RewardInputs.from_observations(obs, cmds), cfg), cfg)
    # mirrored side through the per-observation path
    b = np.array([total_reward(mirror_obs(o, ms), c.mirrored(), ContactTracker(DT), cfg)[0]
                  for o, c in zip(obs, cmds)])
    worst = float(np.max(np.abs(a - b)))
    assert verdict(3, "mirror", worst < 1e-12, f"max |R(o,c) - R(M(o),M(c))| = {worst:.1e} "
                   f"over {n} pairs")


# --- 4 physics ---------------------------------------------------------------------------

def test_4_physics(verdict):
    model, cfg = RobotModel(), SimConfig()
    pose = model.nominal_pose()
    sim = Simulator(model, cfg)

    z0, vx, vz = 4.0, 0.7, 2.0
    st = sim.new_state(np.r_[0.0, z0, 0.0, pose], np.r_[vx, vz, 0.0, np.zeros(model.n_act)])
    fall = 0.0
    for k in range(1, 201):
        sim.advance(st, pose, 1)
        t = k * cfg.physics_dt
        fall = max(fall, abs(st.q[1] - (z0 + vz * t - 0.5 * cfg.gravity * t * t)),
                   abs(st.q[0] - vx * t))

    ratios = []
    for force, dur in ((200.0, 0.02), (500.0, 0.02), (800.0, 0.02),
                       (20.0, 0.2), (110.0, 0.35), (200.0, 0.5), (-200.0, 0.5)):
        st = sim.new_state(np.r_[0.0, 30.0, 0.0, pose])
        p0 = sim.momentum(st)[0]
        n = int(round(dur / cfg.physics_dt))
        sim.advance(st, pose, n + 30, force, (11, 11 + n))
        ratios.append((sim.momentum(st)[0] - p0) / (force * dur))
    impulse = max(abs(r - 1.0) for r in ratios)

    zero = np.zeros(model.n_act)
    passive = Simulator(model, cfg, compile_model(model, gain_scale=(zero, zero)))
    gains = []
    for drop in (0.05, 0.15, 0.4):
        st = passive.new_state(np.r_[0.0, model.base_height + drop, 0.05, pose])
        ref, prev = abs(passive.energy(st)), passive.energy(st)
        for _ in range(100):                                     # 2 s in 20 ms chunks
            passive.advance(st, pose, 40)
            e = passive.energy(st)
            gains.append((e - prev) / 0.02 / ref)
            prev = e
    gain = max(gains)
    ok = fall < 1e-6 and impulse <= 0.01 and gain <= 0.01
    assert verdict(4, "physics", ok, f"free fall error {fall:.1e} m; worst |dp/(F dt) - 1| "
                   f"{impulse:.2e} over 7 pushes; max passive energy gain {gain:.2e}/s")


# --- 5 gradient --------------------------------------------------------------------------

def test_5_gradient(verdict):
    t0 = time.perf_counter()
    model = RobotModel()
    ms = model.mirror_spec()
    rng = np.random.default_rng(505)
    T, B, hidden = 6, 2, (8, 8)
    pol = LstmPolicy(ms.obs_dim, model.n_act, hidden, model.nominal_pose(), seed=5, mirror=ms)
    pol.normalizer.update(rng.normal(size=(30, ms.obs_dim)))
    pol.log_std[:] = rng.uniform(-1.5, -0.5, model.n_act)

    def states():
        return [(0.2 * rng.normal(size=(B, k)), 0.2 * rng.normal(size=(B, k))) for k in hidden]

    feats, cmds = rng.normal(size=(T, B, ms.obs_dim)), rng.uniform(-1, 1, size=(T, B, 3))
    acts = pol.nominal + 0.2 * rng.normal(size=(T, B, model.n_act))
    mask = np.ones((T, B))
    mask[4:, 0] = 0.0
    batch = SequenceBatch(feats, cmds, acts, np.zeros((T, B)), rng.normal(size=(T, B)),
                          rng.normal(size=(T, B)), mask, states(), states(), states())
    u, _ = pol.net.forward(pol.inputs(feats, cmds), batch.h_actor, keep_cache=False)
    batch.logp = gaussian_log_prob(acts, pol.mean_from_raw(u), pol.log_std) \
        + 0.2 * rng.normal(size=(T, B))
    cfg = PpoConfig(clip=0.2, entropy_coef=0.01, mirror_weight=0.5)
    _, grads, _ = ppo_loss(batch, pol, cfg)
    h, worst, count = 1e-4, 0.0, 0
    for p, g in zip(flat_params(pol), flat_grads(grads)):
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            up = ppo_loss(batch, pol, cfg, need_grad=False)[0]
            p[idx] = orig - h
            down = ppo_loss(batch, pol, cfg, need_grad=False)[0]
            p[idx] = orig
            num = (up - down) / (2 * h)
            worst = max(worst, abs(num - g[idx]) / max(abs(num) + abs(g[idx]), 1e-8))
            count += 1
    took = time.perf_counter() - t0
    ok = worst < 1e-4 and took < 60
    assert verdict(5, "gradient", ok, f"max relative error {worst:.2e} over {count} parameters, "
                   f"{took:.1f} s")


# --- 6 protocol and metric oracles -------------------------------------------------------

def test_6_protocol_and_oracles(verdict):
    grid = DisturbanceGrid(forces=[60.0, 120.0], durations=[0.2, 0.5], directions=["+x", "-y"],
                           trials=5, settle=0.2, recovery=0.3)
    bad = []
    for k_fail in range(6):
        ctrl = fails_at(k_fail) if k_fail < 5 else never_falls()
        for c in run_disturbance_sweep(MockFactory(), ctrl, grid):
            want = (min(k_fail + 1, 5), k_fail)
            if (c.attempts, c.successes) != want:
                bad.append((k_fail, c.direction, c.force, c.duration))
    exact = []
    r = rotation_metrics(rotation_log(0.5, 30.0, final_rotation=14.5), 0.5, 30.0)
    exact += [r.commanded == 15.0, abs(r.angular_error - 0.5) < 1e-12]
    v = velocity_metric(straight_walk_log(1.0, 10.0, distance=11.3, stop_time=1.0), 1.0, 10.0)
    exact += [v.d_c == 10.0, abs(v.d_r - 11.3) < 1e-12, abs(v.mean_velocity - 1.13) < 1e-12]
    e = energy_metric(power_log(np.tile([5.0, 5.0], (500, 1)), np.tile([2.0, -2.0], (500, 1)),
                                0.02, distance=10.0))
    exact += [abs(e.positive_work - 100.0) < 1e-12, abs(e.energy_per_meter - 10.0) < 1e-12]
    ok = not bad and all(exact)
    assert verdict(6, "protocol", ok, f"attempt counts exact for first failure at trials 1-5 and "
                   f"none ({len(bad)} wrong cells); {sum(exact)}/{len(exact)} oracle values exact")


# --- 7 determinism -----------------------------------------------------------------------

def _sawlab(*args, cwd):
    r = subprocess.run([sys.executable, "-m", "sawlab.cli", *args], cwd=cwd, capture_output=True,
                       text=True)
    assert r.returncode == 0, r.stderr
    return r


def test_7_determinism(verdict, tmp_path):
    cfg = tmp_path / "tiny.yaml"
    cfg.write_text(yaml.safe_dump({
        "preset": "balance-smoke", "policy": {"hidden": [4, 4]},
        "ppo": {"batch_steps": 200, "num_envs": 2, "iterations": 3, "eval_every": 1,
                "eval_episodes": 2, "seq_len": 25, "epochs": 2, "minibatches": 2}}))
    for k in range(2):
        _sawlab("--serial", "train", "--config", str(cfg), "--seed", "7", "--out", f"t{k}",
                cwd=tmp_path)
        _sawlab("bench", "disturbance", "--policy", "t0/policy.json", "--forces", "30,300",
                "--durations", "0.2,0.5", "--trials", "2", "--seed", "4", "--out", f"b{k}",
                cwd=tmp_path)
    same = {name: (tmp_path / "t0" / name).read_bytes() == (tmp_path / "t1" / name).read_bytes()
            for name in ("metrics.csv", "policy.json")}
    same.update({name: (tmp_path / "b0" / name).read_bytes() == (tmp_path / "b1" / name).read_bytes()
                 for name in ("report.json", "report.csv")})
    rows = len((tmp_path / "t0" / "metrics.csv").read_text().splitlines()) - 1
    ok = all(same.values()) and rows == 3
    assert verdict(7, "determinism", ok, ", ".join(f"{k} {'identical' if v else 'DIFFERS'}"
                                                    for k, v in same.items()))


# --- 8 smoke training --------------------------------------------------------------------

@pytest.fixture(scope="module")
def stand_run(tmp_path_factory):
    """balance-smoke training until the 20-episode eval exceeds 12 s or 30 min pass."""
    out = tmp_path_factory.mktemp("stand")
    cfg = ExperimentConfig.resolve(preset="balance-smoke", overrides={"seed": 0})
    cfg.write(out / "config.yaml")
    policy = cfg.make_policy()
    t0 = time.perf_counter()
    res = train_loop(cfg.factory(), policy, cfg.ppo, seed=cfg.seed, out_dir=out,
                     config={**cfg.to_dict(), "out": None}, config_hash=cfg.hash(),
                     iterations=10**6, time_budget=1800.0,
                     stop=lambda row: row["eval_episode_length"] > 12.0)
    return out, res, time.perf_counter() - t0


@slow
def test_8_stand_smoke(verdict, stand_run):
    out, res, took = stand_run
    first = res.initial_eval["mean_episode_length"]
    last = res.final_eval["mean_episode_length"]
    ok = first < 3.0 and last > 12.0 and took <= 1800
    assert verdict(8, "stand", ok, f"eval length {first:.2f} s -> {last:.2f} s over "
                   f"{res.iterations} iterations in {took / 60:.1f} min (1 core)")


@slow
def test_8_walk_single_contact(verdict, tmp_path):
    cfg = ExperimentConfig.resolve(preset="single-contact", overrides={"seed": 0})
    policy = cfg.make_policy()
    t0 = time.perf_counter()
    res = train_loop(cfg.factory(), policy, cfg.ppo, seed=cfg.seed, out_dir=tmp_path,
                     config={**cfg.to_dict(), "out": None}, config_hash=cfg.hash(),
                     iterations=10**6, time_budget=WALK_BUDGET)
    took = time.perf_counter() - t0
    ev = evaluate(policy, cfg.factory(), 20, seed=99, command=Command(c_x=1.0))
    rate = ev["feet_contact_rate"]
    ok = rate > 0.6 and took <= 7200 and WALK_BUDGET >= 7200
    assert verdict(8, "walk", ok, f"single-contact rate {rate:.3f} at 1 m/s (need > 0.6), "
                   f"eval length {ev['mean_episode_length']:.2f} s, {res.iterations} iterations "
                   f"in {took / 60:.0f} min of a {WALK_BUDGET / 60:.0f} min budget (1 core)")


# --- 9 end-to-end report -----------------------------------------------------------------

@slow
def test_9_end_to_end_report(verdict, stand_run, tmp_path):
    run, _, _ = stand_run
    bench = tmp_path / "bench"
    _sawlab("bench", "disturbance", "--policy", str(run / "policy.json"), "--label", "stand",
            "--out", str(bench), cwd=tmp_path)
    rep = read_report(bench / "report.json")
    cfg = ExperimentConfig.from_resolved(json.loads((run / "policy.json").read_text())["config"])
    grid = cfg.grid()
    cells = {(c.direction, c.force, c.duration): c for c in rep.disturbance}
    expect = {(d, f, t) for d in grid.directions for f in grid.forces for t in grid.durations}
    svg = (bench / "report.svg").read_text()
    with open(bench / "report.csv", newline="") as fh:
        # one summary row per cell (successes filled in) plus one row per trial
        csv_rows = [r for r in csv.DictReader(fh)
                    if r["section"] == "disturbance" and r["successes"] != ""]
    structure = (set(cells) == expect
                 and all(1 <= c.attempts <= 5 for c in cells.values())
                 and svg.count('class="heatmap"') == len(grid.directions)
                 and all(f"{c.successes}/{c.attempts}" in svg for c in cells.values())
                 and len(csv_rows) == len(expect))

    # the live trial logs, read back as if recorded on hardware
    redo = tmp_path / "redo"
    _sawlab("bench", "disturbance", "--logs", str(bench / "logs"), "--out", str(redo),
            cwd=tmp_path)
    back = {(c.direction, c.force, c.duration): (c.successes, c.attempts)
            for c in read_report(redo / "report.json").disturbance}
    same = back == {k: (c.successes, c.attempts) for k, c in cells.items()}

    # a lateral push log, which the planar simulator cannot produce, through the same path
    lat = tmp_path / "lateral"
    lat.mkdir()
    env = MockEnv()
    lg = record_episode(env, never_falls(), 0, [Phase(0.2), Phase(0.4, push=(80.0, 0.2, True))],
                        meta={"direction": "+y", "force": 80.0, "duration": 0.2, "trial": 0})
    lg.write(lat / "trial.jsonl")
    lateral = grid_from_logs([EpisodeLog.read(lat / "trial.jsonl")])
    imported = len(lateral) == 1 and lateral[0].direction == "+y" and lateral[0].successes == 1

    _, meta = load_checkpoint(run / "policy.json")
    ok = structure and same and imported
    assert verdict(9, "report", ok, f"{len(cells)} cells ({len(grid.forces)} forces x "
                   f"{len(grid.durations)} durations x {len(grid.directions)} directions), "
                   f"success {sum(c.successes for c in cells.values())}/"
                   f"{sum(c.attempts for c in cells.values())} trials; live logs re-scored "
                   f"{'identically' if same else 'DIFFERENTLY'}; lateral log import "
                   f"{'ok' if imported else 'failed'}; policy from iteration {meta['iteration']}")
