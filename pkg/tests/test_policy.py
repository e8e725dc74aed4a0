"""LSTM forward/backward, Gaussian head, checkpoints."""

import json
import math

import numpy as np
import pytest

from sawlab.core import Command
from sawlab.errors import InvalidArgument, ProtocolError, SchemaError
from sawlab.policy import (
    LOG_STD_MIN,
    LstmNet,
    LstmPolicy,
    gaussian_entropy,
    gaussian_log_prob,
    load_checkpoint,
    save_checkpoint,
)
from sawlab.sim import RobotModel

MODEL = RobotModel(with_arms=False)
SPEC = MODEL.mirror_spec()


def policy(hidden=(8, 8), seed=0, **kw):
    return LstmPolicy(SPEC.obs_dim, MODEL.n_act, hidden, MODEL.nominal_pose(), seed=seed,
                      mirror=SPEC, **kw)


# --- forward ---------------------------------------------------------------------

def test_zero_weights_give_zero_output():
    net = LstmNet(5, (4, 3), 2, seed=1)
    for p in net.params:
        p[...] = 0.0
    rng = np.random.default_rng(0)
    ys, _ = net.forward(rng.normal(size=(7, 3, 5)) * 100)
    assert np.all(ys == 0.0)


def test_forward_deterministic_after_reset():
    pol = policy()
    rng = np.random.default_rng(1)
    f, c = rng.normal(size=SPEC.obs_dim), Command(0.5)
    a = pol.forward(f, c)
    pol.forward(rng.normal(size=SPEC.obs_dim), c)     # perturb the carried state
    pol.reset_hidden()
    assert np.array_equal(pol.forward(f, c), a)


def test_two_steps_equal_composed_single_steps():
    net = LstmNet(6, (5, 4), 3, seed=2)
    rng = np.random.default_rng(2)
    xs = rng.normal(size=(2, 4, 6))
    s0 = [(rng.normal(size=(4, h)), rng.normal(size=(4, h))) for h in net.hidden]
    both, fin = net.forward(xs, s0)
    y1, s1 = net.forward(xs[:1], s0)
    y2, s2 = net.forward(xs[1:], s1)
    assert np.allclose(both[0], y1[0], rtol=0, atol=1e-14)
    assert np.allclose(both[1], y2[0], rtol=0, atol=1e-14)
    for (h, c), (h2, c2) in zip(fin, s2):
        assert np.allclose(h, h2, atol=1e-14) and np.allclose(c, c2, atol=1e-14)


def test_hidden_state_shapes_follow_layers():
    pol = policy(hidden=(6, 5))
    pol.reset_hidden(3)
    pol.forward(np.zeros((3, SPEC.obs_dim)), np.zeros((3, 3)))
    assert [h.shape for h, _ in pol.state] == [(3, 6), (3, 5)]
    assert [c.shape for _, c in pol.state] == [(3, 6), (3, 5)]


def test_dimension_mismatch():
    pol = policy()
    with pytest.raises(InvalidArgument):
        pol.forward(np.zeros(SPEC.obs_dim + 1), Command())
    with pytest.raises(InvalidArgument):
        pol.net.forward(np.zeros((2, 1, 3)))
    with pytest.raises(InvalidArgument):
        pol.forward(np.zeros((2, SPEC.obs_dim)), np.zeros((2, 3)))   # hidden batch is 1


def test_zero_head_outputs_nominal_pose():
    pol = policy()
    pol.net.params[-2][...] = 0.0
    a = pol.act(np.random.default_rng(3).normal(size=SPEC.obs_dim), Command(1.0))
    assert np.array_equal(a, MODEL.nominal_pose())


# --- sampling ------------------------------------------------------------------------

def test_log_std_floor_collapses_to_mean():
    pol = policy(log_std_init=-50.0)
    assert np.all(pol.log_std == LOG_STD_MIN)
    mean = np.linspace(-1, 1, MODEL.n_act)
    a, _ = pol.sample_action(mean, np.random.default_rng(0))
    assert np.max(np.abs(a - mean)) < 6 * math.exp(LOG_STD_MIN)


def test_log_prob_at_mean_closed_form():
    log_std = np.array([-1.0, 0.0, 0.5, -2.0])
    mean = np.array([0.1, -0.2, 0.3, 4.0])
    expect = sum(-s - 0.5 * math.log(2 * math.pi) for s in log_std)
    assert abs(gaussian_log_prob(mean, mean, log_std) - expect) < 1e-12


def test_log_prob_matches_density():
    rng = np.random.default_rng(4)
    log_std = rng.normal(size=3) * 0.3
    mean, a = rng.normal(size=3), rng.normal(size=3)
    dens = 1.0
    for x, m, s in zip(a, mean, np.exp(log_std)):
        dens *= math.exp(-0.5 * ((x - m) / s) ** 2) / (s * math.sqrt(2 * math.pi))
    assert abs(gaussian_log_prob(a, mean, log_std) - math.log(dens)) < 1e-12


def test_sample_std_moment():
    pol = policy(log_std_init=-1.3)
    rng = np.random.default_rng(5)
    mean = np.zeros((100_000, MODEL.n_act))
    a, lp = pol.sample_action(mean, rng)
    std = a.std(axis=0)
    assert np.all(np.abs(std / math.exp(-1.3) - 1.0) < 0.02)
    assert lp.shape == (100_000,)


def test_entropy_closed_form():
    log_std = np.array([-1.0, 0.2])
    assert abs(gaussian_entropy(log_std) - sum(0.5 * math.log(2 * math.pi * math.e) + s
                                               for s in log_std)) < 1e-12


# --- backward ----------------------------------------------------------------------

def _loss(net, xs, s0, dys):
    ys, _ = net.forward(xs, s0, keep_cache=False)
    return float(np.sum(ys * dys))


def test_lstm_backward_against_finite_differences():
    rng = np.random.default_rng(6)
    net = LstmNet(7, (8, 8), 4, seed=6)
    xs = rng.normal(size=(6, 2, 7))
    s0 = [(0.3 * rng.normal(size=(2, 8)), 0.3 * rng.normal(size=(2, 8))) for _ in range(2)]
    dys = rng.normal(size=(6, 2, 4))
    net.forward(xs, s0)
    grads = net.backward(dys)
    h = 1e-5
    worst = 0.0
    for p, g in zip(net.params, grads):
        assert g.shape == p.shape
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            lp = _loss(net, xs, s0, dys)
            p[idx] = orig - h
            lm = _loss(net, xs, s0, dys)
            p[idx] = orig
            num = (lp - lm) / (2 * h)
            worst = max(worst, abs(num - g[idx]) / max(abs(num) + abs(g[idx]), 1e-6))
    assert worst < 1e-4, worst


def test_zero_upstream_gradient():
    net = LstmNet(3, (4, 4), 2, seed=7)
    net.forward(np.random.default_rng(7).normal(size=(5, 2, 3)))
    assert all(np.all(g == 0.0) for g in net.backward(np.zeros((5, 2, 2))))


def test_backward_is_linear_over_sequences():
    rng = np.random.default_rng(8)
    net = LstmNet(3, (4, 4), 2, seed=8)
    xa, xb = rng.normal(size=(5, 1, 3)), rng.normal(size=(5, 1, 3))
    da, db = rng.normal(size=(5, 1, 2)), rng.normal(size=(5, 1, 2))
    net.forward(xa)
    ga = net.backward(da)
    net.forward(xb)
    gb = net.backward(db)
    net.forward(np.concatenate([xa, xb], axis=1))
    gab = net.backward(np.concatenate([da, db], axis=1))
    for x, y, z in zip(ga, gb, gab):
        assert np.allclose(x + y, z, rtol=0, atol=1e-12)


def test_backward_without_cache():
    net = LstmNet(3, (4,), 2)
    with pytest.raises(ProtocolError):
        net.backward(np.zeros((1, 1, 2)))
    net.forward(np.zeros((2, 1, 3)), keep_cache=False)
    with pytest.raises(ProtocolError):
        net.backward(np.zeros((2, 1, 2)))


# --- checkpoints -----------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    pol = policy(seed=9)
    pol.normalizer.update(np.random.default_rng(9).normal(size=(40, SPEC.obs_dim)))
    pol.log_std[:] = -1.1
    p = save_checkpoint(tmp_path / "c.json", pol, {"seed": 9}, iteration=12, config_hash="abc")
    back, meta = load_checkpoint(p)
    assert back.param_hash() == pol.param_hash()
    assert meta == {"iteration": 12, "config_hash": "abc", "config": {"seed": 9}}
    f = np.random.default_rng(10).normal(size=SPEC.obs_dim)
    pol.reset_hidden()
    assert np.array_equal(back.act(f, Command(0.3)), pol.act(f, Command(0.3)))


def test_checkpoint_schema_errors(tmp_path):
    p = save_checkpoint(tmp_path / "c.json", policy())
    doc = json.loads(p.read_text())
    doc["version"] = 7
    p.write_text(json.dumps(doc))
    with pytest.raises(SchemaError):
        load_checkpoint(p)
    (tmp_path / "junk.json").write_text("not json")
    with pytest.raises(SchemaError):
        load_checkpoint(tmp_path / "junk.json")
