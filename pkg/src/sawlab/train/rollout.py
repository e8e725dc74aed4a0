"""Lock-step rollout collection over several environments.

Each environment owns its RNG streams (spawned from one seed), so the data an
environment produces does not depend on how environments are grouped.
"""

from __future__ import annotations

import multiprocessing as mp
from dataclasses import dataclass, field

import numpy as np

from sawlab.errors import SimulationBlowup, TrainingError
from sawlab.policy import LstmPolicy
from sawlab.rewards import TERMS, RewardConfig
from sawlab.sim import DomainRandomization, RobotModel, SawEnv, SimConfig
from sawlab.train.ppo import SequenceBatch, compute_gae, normalize_advantages


@dataclass
class EnvFactory:
    """Picklable recipe for identical environments."""

    model: RobotModel = field(default_factory=RobotModel)
    sim: SimConfig = field(default_factory=SimConfig)
    reward: RewardConfig | None = None
    dr: DomainRandomization | None = None

    def __call__(self, seed: int = 0) -> SawEnv:
        return SawEnv(self.model, self.sim, self.reward, self.dr, seed=seed)


def _zero_rows(state, rows):
    for h, c in state:
        h[rows] = 0.0
        c[rows] = 0.0


def _rows(state, rows):
    return [(h[rows].copy(), c[rows].copy()) for h, c in state]


@dataclass
class Timeline:
    """Per-env time series of one collection, arrays shaped (T, N, ...)."""

    feats: np.ndarray
    cmds: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    last_values: np.ndarray
    chunk_starts: list          # (t, env, actor_state, critic_state, mirror_state)
    episodes: list              # (return, length_steps, fallen)
    term_sums: dict
    steps: int


class Collector:
    """Owns N environments plus recurrent state, and continues episodes across
    successive :meth:`collect` calls."""

    def __init__(self, factory, n_envs: int, seed: int, seq_len: int, env_ids=None):
        ids = list(range(n_envs)) if env_ids is None else list(env_ids)
        children = np.random.SeedSequence(seed).spawn(max(ids) + 1 if ids else 0)
        self.envs = [factory() for _ in ids]
        self.rngs = [np.random.default_rng(children[i]) for i in ids]
        self.seq_len = seq_len
        self.started = False
        self.ep_return = np.zeros(len(ids))
        self.ep_len = np.zeros(len(ids), dtype=int)

    def _reset(self, i):
        env = self.envs[i]
        env.reset(int(self.rngs[i].integers(2 ** 31)))
        self.ep_return[i] = 0.0
        self.ep_len[i] = 0
        self.since_chunk[i] = 0
        self.new_episode[i] = True

    def _start(self, policy: LstmPolicy):
        n = len(self.envs)
        self.since_chunk = np.zeros(n, dtype=int)
        self.new_episode = np.ones(n, dtype=bool)
        for i in range(n):
            self._reset(i)
        self.s_actor = policy.net.zero_state(n)
        self.s_critic = policy.value.zero_state(n)
        self.s_mirror = policy.net.zero_state(n)
        self.started = True

    def collect(self, policy: LstmPolicy, n_steps: int, gamma: float) -> Timeline:
        if not self.started:
            self._start(policy)
        n = len(self.envs)
        na = policy.act_dim
        od = policy.obs_dim
        feats = np.zeros((n_steps, n, od))
        cmds = np.zeros((n_steps, n, 3))
        actions = np.zeros((n_steps, n, na))
        logp = np.zeros((n_steps, n))
        rewards = np.zeros((n_steps, n))
        values = np.zeros((n_steps, n))
        dones = np.zeros((n_steps, n))
        chunks = []
        episodes = []
        term_sums = {k: 0.0 for k in TERMS}
        use_mirror = policy.mirror is not None
        for t in range(n_steps):
            for i, env in enumerate(self.envs):
                feats[t, i] = env.features()
                cmds[t, i] = env.command.velocity()
            starts = [i for i in range(n)
                      if t == 0 or self.new_episode[i] or self.since_chunk[i] >= self.seq_len]
            for i in starts:
                chunks.append((t, i, _rows(self.s_actor, [i]), _rows(self.s_critic, [i]),
                               _rows(self.s_mirror, [i])))
                self.since_chunk[i] = 0
                self.new_episode[i] = False
            x = policy.inputs(feats[t], cmds[t])
            u, self.s_actor = policy.net.forward(x[None], self.s_actor, keep_cache=False)
            v, self.s_critic = policy.value.forward(x[None], self.s_critic, keep_cache=False)
            if use_mirror:
                fm, cm = policy.mirror_inputs(feats[t], cmds[t])
                _, self.s_mirror = policy.net.forward(policy.inputs(fm, cm)[None], self.s_mirror,
                                                      keep_cache=False)
            mean = policy.mean_from_raw(u[0])
            values[t] = v[0, :, 0]
            std = np.exp(policy.log_std)
            for i, env in enumerate(self.envs):
                a = mean[i] + std * self.rngs[i].standard_normal(na)
                actions[t, i] = a
                try:
                    _, br, done = env.step(a)
                except SimulationBlowup as exc:
                    raise TrainingError(f"env {i}: {exc}", dump={"step": exc.step}) from exc
                r = br["total"]
                for k in TERMS:
                    term_sums[k] += br[k]
                self.ep_return[i] += r
                self.ep_len[i] += 1
                self.since_chunk[i] += 1
                if done:
                    dones[t, i] = 1.0
                    episodes.append((float(self.ep_return[i]), int(self.ep_len[i]), env.fallen))
                    if not env.fallen:
                        # time-limit truncation: bootstrap from the final state
                        xf = policy.inputs(env.features()[None], env.command.velocity()[None])
                        vf, _ = policy.value.forward(xf[None], _rows(self.s_critic, [i]),
                                                     keep_cache=False)
                        r += gamma * float(vf[0, 0, 0])
                    self._reset(i)
                    _zero_rows(self.s_actor, [i])
                    _zero_rows(self.s_critic, [i])
                    _zero_rows(self.s_mirror, [i])
                rewards[t, i] = r
            logp[t] = policy.log_prob(actions[t], mean)
        xl = np.stack([policy.inputs(e.features(), e.command.velocity()) for e in self.envs])
        vl, _ = policy.value.forward(xl[None], self.s_critic, keep_cache=False)
        for k in term_sums:
            term_sums[k] /= n_steps * n
        return Timeline(feats, cmds, actions, logp, rewards, values, dones, vl[0, :, 0], chunks,
                        episodes, term_sums, n_steps * n)


def merge_timelines(parts: list[Timeline]) -> Timeline:
    """Concatenate env groups (in order) into one timeline."""
    if len(parts) == 1:
        return parts[0]
    offs = np.cumsum([0] + [p.feats.shape[1] for p in parts])
    cat = (lambda name: np.concatenate([getattr(p, name) for p in parts], axis=1))
    chunks = []
    for off, p in zip(offs, parts):
        chunks += [(t, i + off, a, c, m) for t, i, a, c, m in p.chunk_starts]
    chunks.sort(key=lambda c: (c[0], c[1]))
    steps = sum(p.steps for p in parts)
    terms = {k: sum(p.term_sums[k] * p.steps for p in parts) / steps for k in parts[0].term_sums}
    return Timeline(cat("feats"), cat("cmds"), cat("actions"), cat("logp"), cat("rewards"),
                    cat("values"), cat("dones"),
                    np.concatenate([p.last_values for p in parts]), chunks,
                    sum((p.episodes for p in parts), []), terms, steps)


def build_batch(tl: Timeline, gamma: float, lam: float, seq_len: int) -> SequenceBatch:
    """GAE along each env's timeline, then cut into padded sequences at the
    recorded chunk starts."""
    adv, ret = compute_gae(tl.rewards, tl.values, tl.dones, tl.last_values, gamma, lam)
    T, N = tl.rewards.shape
    starts = sorted(tl.chunk_starts, key=lambda c: (c[1], c[0]))
    bounds = []
    for k, (t, i, *_rest) in enumerate(starts):
        nxt = starts[k + 1] if k + 1 < len(starts) else None
        end = nxt[0] if nxt is not None and nxt[1] == i else T
        bounds.append((t, min(end, t + seq_len), i))
    B = len(bounds)
    L = seq_len
    od, na = tl.feats.shape[2], tl.actions.shape[2]
    out = {k: np.zeros((L, B) + s) for k, s in (("feats", (od,)), ("cmds", (3,)),
                                                 ("actions", (na,)), ("logp", ()),
                                                 ("adv", ()), ("ret", ()), ("mask", ()))}
    for b, (t0, t1, i) in enumerate(bounds):
        n = t1 - t0
        out["feats"][:n, b] = tl.feats[t0:t1, i]
        out["cmds"][:n, b] = tl.cmds[t0:t1, i]
        out["actions"][:n, b] = tl.actions[t0:t1, i]
        out["logp"][:n, b] = tl.logp[t0:t1, i]
        out["adv"][:n, b] = adv[t0:t1, i]
        out["ret"][:n, b] = ret[t0:t1, i]
        out["mask"][:n, b] = 1.0

    def stack(which):
        layers = len(starts[0][which])
        return [(np.concatenate([s[which][k][0] for s in starts]),
                 np.concatenate([s[which][k][1] for s in starts])) for k in range(layers)]

    mask = out["mask"]
    return SequenceBatch(out["feats"], out["cmds"], out["actions"], out["logp"],
                         normalize_advantages(out["adv"], mask), out["ret"], mask,
                         stack(2), stack(3), stack(4))


# --- optional process fan-out -------------------------------------------------

def _worker(conn, factory, n_envs, seed, seq_len, ids):
    col = Collector(factory, n_envs, seed, seq_len, env_ids=ids)
    while True:
        msg = conn.recv()
        if msg[0] == "stop":
            break
        _, pdict, n_steps, gamma = msg
        try:
            conn.send(("ok", col.collect(LstmPolicy.from_dict(pdict), n_steps, gamma)))
        except Exception as exc:   # forwarded to the parent
            conn.send(("err", repr(exc)))


class ParallelCollector:
    """Splits environments over worker processes; each keeps its own envs."""

    def __init__(self, factory, n_envs: int, seed: int, seq_len: int, workers: int):
        groups = np.array_split(np.arange(n_envs), min(workers, n_envs))
        ctx = mp.get_context("spawn")
        self.conns = []
        self.procs = []
        for g in groups:
            a, b = ctx.Pipe()
            p = ctx.Process(target=_worker, args=(b, factory, n_envs, seed, seq_len, g.tolist()),
                            daemon=True)
            p.start()
            self.conns.append(a)
            self.procs.append(p)

    def collect(self, policy: LstmPolicy, n_steps: int, gamma: float) -> Timeline:
        pdict = policy.to_dict()
        for c in self.conns:
            c.send(("collect", pdict, n_steps, gamma))
        parts = []
        for c in self.conns:
            status, payload = c.recv()
            if status != "ok":
                raise TrainingError(f"rollout worker failed: {payload}")
            parts.append(payload)
        return merge_timelines(parts)

    def close(self):
        for c in self.conns:
            try:
                c.send(("stop",))
            except (BrokenPipeError, OSError):
                pass
        for p in self.procs:
            p.join(timeout=5)
