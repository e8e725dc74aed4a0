"""PPO objective with a mirror-symmetry term, plus GAE and Adam."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from sawlab.core import mirror_act
from sawlab.errors import InvalidArgument, TrainingError
from sawlab.policy import LstmPolicy, gaussian_entropy, gaussian_log_prob


@dataclass
class PpoConfig:
    clip: float = 0.2
    gamma: float = 0.99
    lam: float = 0.95
    lr: float = 3e-4
    epochs: int = 4
    seq_len: int = 200
    minibatches: int = 4
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    mirror_weight: float = 1.0
    max_grad_norm: float = 1.0
    batch_steps: int = 4000          # env steps collected per iteration
    num_envs: int = 8
    iterations: int = 100
    eval_every: int = 10
    eval_episodes: int = 20
    checkpoint_every: int = 25
    workers: int = 1

    def __post_init__(self):
        if not self.clip >= 0:
            raise InvalidArgument("ppo.clip must be >= 0")
        if not (0 < self.gamma <= 1 and 0 < self.lam <= 1):
            raise InvalidArgument("ppo.gamma and ppo.lam must lie in (0, 1]")
        if self.mirror_weight < 0 or self.value_coef < 0 or self.lr < 0:
            raise InvalidArgument("ppo weights and learning rate must be >= 0")
        for k in ("epochs", "seq_len", "minibatches", "batch_steps", "num_envs", "eval_episodes",
                  "workers", "eval_every", "checkpoint_every"):
            if int(getattr(self, k)) < 1:
                raise InvalidArgument(f"ppo.{k} must be >= 1")
            setattr(self, k, int(getattr(self, k)))
        if int(self.iterations) < 0:
            raise InvalidArgument("ppo.iterations must be >= 0")
        self.iterations = int(self.iterations)

    def to_dict(self) -> dict:
        return asdict(self)


def compute_gae(rewards, values, dones, last_value, gamma: float, lam: float):
    """GAE over a (T, ...) time series. ``dones[t]`` marks a terminal transition
    (no bootstrap from ``t+1``); ``last_value`` is V of the state after step T-1."""
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    d = np.asarray(dones, dtype=float)
    T = r.shape[0]
    adv = np.zeros_like(r)
    nxt_v = np.asarray(last_value, dtype=float)
    running = np.zeros_like(r[0])
    for t in range(T - 1, -1, -1):
        nonterm = 1.0 - d[t]
        delta = r[t] + gamma * nxt_v * nonterm - v[t]
        running = delta + gamma * lam * nonterm * running
        adv[t] = running
        nxt_v = v[t]
    return adv, adv + v


def normalize_advantages(adv: np.ndarray, mask: np.ndarray) -> np.ndarray:
    m = mask > 0
    n = int(m.sum())
    if n == 0:
        return np.zeros_like(adv)
    mu = adv[m].mean()
    sd = adv[m].std()
    out = np.zeros_like(adv)
    out[m] = (adv[m] - mu) / (sd if sd > 1e-12 else 1.0)
    return out


@dataclass
class SequenceBatch:
    """Fixed-length padded sequences, arrays shaped (T, B, ...)."""

    feats: np.ndarray
    cmds: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    mask: np.ndarray
    h_actor: list
    h_critic: list
    h_mirror: list

    def select(self, idx) -> SequenceBatch:
        pick = (lambda a: a[:, idx])
        st = (lambda s: [(h[idx], c[idx]) for h, c in s])
        return SequenceBatch(pick(self.feats), pick(self.cmds), pick(self.actions),
                             pick(self.logp), pick(self.advantages), pick(self.returns),
                             pick(self.mask), st(self.h_actor), st(self.h_critic),
                             st(self.h_mirror))

    @property
    def n_seq(self) -> int:
        return self.feats.shape[1]


def _mirror_grad(g: np.ndarray, perm: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """Transpose of the map v -> signs * v[perm] applied to ``g``."""
    out = np.empty_like(g)
    out[..., perm] = g * signs
    return out


def mirror_loss(batch: SequenceBatch, policy: LstmPolicy):
    """Mean squared asymmetry of action means over valid steps. Returns
    (loss, mean_orig, mean_mirror, caches)."""
    x = policy.inputs(batch.feats, batch.cmds)
    u, _ = policy.net.forward(x, batch.h_actor)
    cache_o = policy.net.cache
    fm, cm = policy.mirror_inputs(batch.feats, batch.cmds)
    um, _ = policy.net.forward(policy.inputs(fm, cm), batch.h_mirror)
    cache_m = policy.net.cache
    mu = policy.mean_from_raw(u)
    mu_m = policy.mean_from_raw(um)
    diff = mu_m - mirror_act(mu, policy.mirror)
    n = max(batch.mask.sum(), 1.0)
    loss = float(np.sum(batch.mask[..., None] * diff ** 2) / n)
    return loss, (mu, mu_m, diff, cache_o, cache_m)


def ppo_loss(batch: SequenceBatch, policy: LstmPolicy, cfg: PpoConfig, need_grad: bool = True):
    """Clipped surrogate + value + entropy + mirror loss on one minibatch.

    Returns (loss, grads, diagnostics) where grads is a dict with ``actor``,
    ``critic`` (lists aligned with the nets' params) and ``log_std``.
    """
    mask = batch.mask
    n = max(float(mask.sum()), 1.0)
    w = mask / n
    ls = policy.log_std
    if cfg.mirror_weight > 0 and policy.mirror is not None:
        l_mir, (mu, mu_m, diff, cache_o, cache_m) = mirror_loss(batch, policy)
    else:
        x = policy.inputs(batch.feats, batch.cmds)
        u, _ = policy.net.forward(x, batch.h_actor)
        cache_o, cache_m, l_mir, diff = policy.net.cache, None, 0.0, None
        mu = policy.mean_from_raw(u)
    logp = gaussian_log_prob(batch.actions, mu, ls)
    ratio = np.exp(logp - batch.logp)
    A = batch.advantages
    eps = cfg.clip
    s1 = ratio * A
    s2 = np.clip(ratio, 1.0 - eps, 1.0 + eps) * A
    l_pi = -float(np.sum(w * np.minimum(s1, s2)))
    xv = policy.inputs(batch.feats, batch.cmds)
    v, _ = policy.value.forward(xv, batch.h_critic)
    v = v[..., 0]
    l_v = float(np.sum(w * (v - batch.returns) ** 2))
    ent = gaussian_entropy(ls)
    loss = l_pi + cfg.value_coef * l_v - cfg.entropy_coef * ent + cfg.mirror_weight * l_mir
    if not np.isfinite(loss):
        raise TrainingError("non-finite PPO loss", dump={
            "policy_loss": l_pi, "value_loss": l_v, "mirror_loss": l_mir,
            "max_abs_ratio": float(np.nanmax(np.abs(ratio))) if ratio.size else 0.0})
    clipped = (np.abs(ratio - 1.0) > eps) & (mask > 0)
    diag = {
        "policy_loss": l_pi, "value_loss": l_v, "mirror_loss": l_mir, "entropy": ent,
        "clip_fraction": float(clipped.sum() / n),
        "approx_kl": float(np.sum(w * ((ratio - 1.0) - (logp - batch.logp)))),
    }
    if not need_grad:
        return loss, None, diag

    # d loss / d logp: unclipped branch active where s1 <= s2 (ties included)
    active = s1 <= s2
    dlogp = -w * A * ratio * active
    std2 = np.exp(-2.0 * ls)
    resid = batch.actions - mu
    dmu = dlogp[..., None] * resid * std2
    dls = np.sum(dlogp[..., None] * (resid ** 2 * std2 - 1.0), axis=(0, 1)) - cfg.entropy_coef
    grads = {}
    if cache_m is not None:
        g = 2.0 * cfg.mirror_weight * w[..., None] * diff
        m = policy.mirror
        dmu = dmu - _mirror_grad(g, m.act_permutation, m.act_signs)
        ga = policy.net.backward(policy.action_scale * dmu, cache_o)
        gm = policy.net.backward(policy.action_scale * g, cache_m)
        grads["actor"] = [a + b for a, b in zip(ga, gm)]
    else:
        grads["actor"] = policy.net.backward(policy.action_scale * dmu, cache_o)
    dv = cfg.value_coef * 2.0 * w * (v - batch.returns)
    grads["critic"] = policy.value.backward(dv[..., None])
    grads["log_std"] = dls
    return loss, grads, diag


def flat_params(policy: LstmPolicy) -> list[np.ndarray]:
    """Every trainable array, in a fixed order (actor, critic, log_std)."""
    return policy.net.params + policy.value.params + [policy.log_std]


def flat_grads(grads: dict) -> list[np.ndarray]:
    return grads["actor"] + grads["critic"] + [grads["log_std"]]


def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> float:
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if max_norm > 0 and total > max_norm:
        s = max_norm / (total + 1e-12)
        for g in grads:
            g *= s
    return total


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float = 3e-4, betas=(0.9, 0.999),
                 eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        if self.lr == 0.0:
            return
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self) -> dict:
        return {"t": self.t, "m": [a.tolist() for a in self.m], "v": [a.tolist() for a in self.v]}
