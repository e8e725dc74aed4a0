"""Property checks runnable outside the test harness (``sawlab validate``).

Each scenario returns a list of :class:`Check` rows with the measured value
and the tolerance it was held to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from sawlab.sim import RobotModel, SimConfig, Simulator, compile_model


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: {self.value:.3e} (tolerance {self.tolerance:g})"


def _airborne(model: RobotModel, height: float = 5.0):
    return np.concatenate([[0.0, height, 0.0], model.nominal_pose()])


def drop_test(model: RobotModel | None = None, cfg: SimConfig | None = None) -> list[Check]:
    """Free fall against the closed form, then a passive (zero-gain) drop onto
    the ground watching for energy gain."""
    model = model or RobotModel()
    cfg = cfg or SimConfig()
    sim = Simulator(model, cfg)
    vx, vz, T = 0.3, 1.0, 0.1
    st = sim.new_state(_airborne(model), np.r_[vx, vz, 0.0, np.zeros(model.n_act)])
    z0 = st.q[1]
    n = int(round(T / cfg.physics_dt))
    sim.advance(st, model.nominal_pose(), n)
    err = max(abs(st.q[1] - (z0 + vz * T - 0.5 * cfg.gravity * T * T)), abs(st.q[0] - vx * T))
    checks = [Check("free-fall position error (m) over 0.1 s", err, 1e-6, err < 1e-6)]

    n_act = model.n_act
    passive = Simulator(model, cfg, compile_model(model, gain_scale=(np.zeros(n_act),
                                                                      np.zeros(n_act))))
    st = passive.new_state(_airborne(model, model.base_height + 0.15))
    e_prev = passive.energy(st)
    e_ref = abs(e_prev)
    worst = 0.0
    chunk = 40
    for _ in range(100):                     # 2 s in 20 ms chunks
        passive.advance(st, model.nominal_pose(), chunk)
        e = passive.energy(st)
        rate = (e - e_prev) / (chunk * cfg.physics_dt) / e_ref
        worst = max(worst, rate)
        e_prev = e
    checks.append(Check("passive drop max energy gain (fraction/s)", worst, 0.01, worst <= 0.01))
    return checks


def push_test(model: RobotModel | None = None, cfg: SimConfig | None = None) -> list[Check]:
    """Impulse-momentum on an airborne robot across both training push ranges."""
    model = model or RobotModel()
    cfg = cfg or SimConfig()
    sim = Simulator(model, cfg)
    checks = []
    for force, dur in ((200.0, 0.02), (800.0, 0.02), (20.0, 0.2), (200.0, 0.5)):
        st = sim.new_state(_airborne(model, 20.0))
        p0 = sim.momentum(st)[0]
        n = int(round(dur / cfg.physics_dt))
        sim.advance(st, model.nominal_pose(), n + 10, force, (5, 5 + n))
        ratio = (sim.momentum(st)[0] - p0) / (force * dur)
        checks.append(Check(f"dp/(F dt) at {force:g} N x {dur * 1000:g} ms", ratio, 0.01,
                            abs(ratio - 1.0) <= 0.01))
    return checks


def gradcheck(hidden=(8, 8), T: int = 6, B: int = 3, seed: int = 0, h: float = 1e-4,
              tol: float = 1e-4) -> list[Check]:
    """Analytic PPO + mirror gradient against central differences, every parameter.

    ``h = 1e-4`` keeps the difference quotient's roundoff (about eps*|L|/h) well
    under the tolerance even for entries with gradients near 1e-7.
    """
    from sawlab.policy import LstmPolicy, gaussian_log_prob
    from sawlab.train.ppo import PpoConfig, SequenceBatch, flat_grads, flat_params, ppo_loss

    model = RobotModel()
    ms = model.mirror_spec()
    rng = np.random.default_rng(seed)
    pol = LstmPolicy(ms.obs_dim, model.n_act, hidden, model.nominal_pose(), seed=seed, mirror=ms)
    pol.normalizer.update(rng.normal(size=(50, ms.obs_dim)))

    def states():
        return [(0.3 * rng.normal(size=(B, k)), 0.3 * rng.normal(size=(B, k))) for k in hidden]

    feats = rng.normal(size=(T, B, ms.obs_dim))
    cmds = rng.normal(size=(T, B, 3))
    acts = pol.nominal + 0.1 * rng.normal(size=(T, B, model.n_act))
    mask = np.ones((T, B))
    mask[T - 2:, 1] = 0.0
    batch = SequenceBatch(feats, cmds, acts, np.zeros((T, B)), rng.normal(size=(T, B)),
                          rng.normal(size=(T, B)), mask, states(), states(), states())
    u, _ = pol.net.forward(pol.inputs(feats, cmds), batch.h_actor, keep_cache=False)
    lp = gaussian_log_prob(acts, pol.mean_from_raw(u), pol.log_std)
    batch.logp = lp + 0.15 * rng.normal(size=lp.shape)     # mix of clipped and unclipped
    cfg = PpoConfig(clip=0.2, entropy_coef=0.01, mirror_weight=1.0)
    _, grads, _ = ppo_loss(batch, pol, cfg)
    worst = 0.0
    for p, g in zip(flat_params(pol), flat_grads(grads)):
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            lp_ = ppo_loss(batch, pol, cfg, need_grad=False)[0]
            p[idx] = orig - h
            lm = ppo_loss(batch, pol, cfg, need_grad=False)[0]
            p[idx] = orig
            num = (lp_ - lm) / (2 * h)
            rel = abs(num - g[idx]) / max(abs(num) + abs(g[idx]), 1e-8)
            worst = max(worst, rel)
    return [Check(f"PPO+mirror gradient max relative error, LSTM {tuple(hidden)}, T={T}",
                  worst, tol, worst < tol)]


def fuzz_reward_inputs(rng: np.random.Generator, n: int, n_act: int, n_arm: int,
                       walking: bool = True):
    """Random batched reward inputs with walking commands and no touchdown,
    the regime where the non-airtime bound applies."""
    from sawlab.rewards import RewardInputs

    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    cmd = rng.uniform(-1, 1, size=(n, 4))
    cmd[:, 3] *= math.pi
    if not walking:
        cmd[:, :3] = 0.0
    return RewardInputs(
        cmd=cmd, base_linvel=rng.normal(size=(n, 3)) * 2, torso=q,
        base_z=rng.normal(size=n), foot_pos=rng.normal(size=(n, 2, 3)) * 0.3,
        foot_rpy=rng.normal(size=(n, 2, 3)), arm_pos=rng.normal(size=(n, n_arm)),
        base_acc=rng.normal(size=(n, 3)) * 10, action=rng.normal(size=(n, n_act)),
        prev_action=rng.normal(size=(n, n_act)), torque=rng.normal(size=(n, n_act)) * 50,
        time=rng.uniform(0, 16, size=n), last_single=rng.uniform(-16, 16, size=n),
        touchdown=np.zeros((n, 2), bool), touchdown_airtime=np.zeros((n, 2)))


def random_observation(rng: np.random.Generator, n_act: int, n_arm: int):
    from sawlab.core import Observation, UnitQuaternion

    q = UnitQuaternion.from_array(rng.normal(size=4)).normalize()
    return Observation(
        motor_pos=rng.normal(size=n_act), motor_vel=rng.normal(size=n_act) * 3,
        torso_orientation=q, base_pos=rng.normal(size=3),
        base_linvel=rng.normal(size=3) * 2, base_acc=rng.normal(size=3) * 10,
        foot_pos=rng.normal(size=(2, 3)) * 0.3, foot_orientation=rng.normal(size=(2, 3)),
        contact=rng.random(2) < 0.5, airtime=rng.random(2), touchdown=np.zeros(2, bool),
        arm_pos=rng.normal(size=n_arm), applied_torque=rng.normal(size=n_act) * 50,
        prev_action=rng.normal(size=n_act), action=rng.normal(size=n_act),
        time=float(rng.uniform(0, 16)))


def reward_audit(n: int = 100_000, seed: int = 0, n_mirror: int = 10_000) -> list[Check]:
    """Non-airtime total bound on fuzzed states and mirror invariance."""
    from sawlab.core import Command, mirror_obs
    from sawlab.rewards import RewardInputs, batch_terms, batch_total

    rng = np.random.default_rng(seed)
    model = RobotModel()
    cfg = model_reward_config(model)
    na, narm = model.n_act, len(cfg.c_arm)
    worst_total = -math.inf
    for start in range(0, n, 20_000):
        inp = fuzz_reward_inputs(rng, min(20_000, n - start), na, narm)
        tot = batch_total(batch_terms(inp, cfg), cfg, skip=("feet_airtime",))
        worst_total = max(worst_total, float(tot.max()))

    ms = model.mirror_spec()
    obs = [random_observation(rng, na, narm) for _ in range(n_mirror)]
    cmds = [Command(*rng.uniform(-1, 1, size=3), heading_ref=float(rng.uniform(-math.pi, math.pi)))
            for _ in range(n_mirror)]
    a = batch_total(batch_terms(RewardInputs.from_observations(obs, cmds), cfg), cfg)
    b = batch_total(batch_terms(RewardInputs.from_observations(
        [mirror_obs(o, ms) for o in obs], [c.mirrored() for c in cmds]), cfg), cfg)
    worst_mirror = float(np.max(np.abs(a - b)))
    bound = cfg.non_airtime_weight
    return [Check(f"max non-airtime total over {n} fuzzed states", worst_total, bound,
                  worst_total <= bound + 1e-12),
            Check(f"max |R(o,c) - R(M(o),M(c))| over {n_mirror} pairs", worst_mirror, 1e-12,
                  worst_mirror < 1e-12)]


def model_reward_config(model: RobotModel):
    from sawlab.rewards import RewardConfig

    _, _, tmax = model.gains()
    return RewardConfig(c_h=model.base_height, c_feet=model.nominal_foot_pos(),
                        c_arm=np.zeros(2 if model.with_arms else 0), t_max=tmax)


SCENARIOS = {"drop-test": drop_test, "push-test": push_test, "gradcheck": gradcheck,
             "reward-audit": reward_audit}
