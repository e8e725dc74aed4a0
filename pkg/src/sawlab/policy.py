"""Stacked LSTM controller with a linear head, Gaussian exploration, and a
separate value network. Everything is float64 numpy with a hand-written
backward pass (truncated BPTT over whatever sequence was run forward)."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sawlab.core import Command, MirrorSpec, mirror_act, mirror_features
from sawlab.errors import InvalidArgument, ProtocolError, SchemaError

LOG_STD_MIN = -4.0
LOG_STD_MAX = 1.0
CHECKPOINT_SCHEMA = "sawlab.checkpoint"
CHECKPOINT_VERSION = 1
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _orthogonal(rng, rows, cols):
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q if rows >= cols else q.T


class LstmNet:
    """Stacked LSTM + linear head. Gate order in the 4H blocks is i, f, g, o.

    Parameters are kept as a flat list of arrays (``params``) so optimizers
    and gradient checks can treat them uniformly.
    """

    def __init__(self, in_dim: int, hidden: tuple[int, ...], out_dim: int, seed: int = 0,
                 head_scale: float = 1.0):
        if in_dim < 1 or out_dim < 1 or not hidden or min(hidden) < 1:
            raise InvalidArgument("LSTM dimensions must be positive")
        self.in_dim = int(in_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.out_dim = int(out_dim)
        rng = np.random.default_rng(seed)
        self.params: list[np.ndarray] = []
        d = self.in_dim
        for h in self.hidden:
            wx = rng.uniform(-1.0, 1.0, (4 * h, d)) / math.sqrt(d)
            wh = np.vstack([_orthogonal(rng, h, h) for _ in range(4)])
            b = np.zeros(4 * h)
            b[h:2 * h] = 1.0
            self.params += [wx, wh, b]
            d = h
        self.params.append(rng.standard_normal((self.out_dim, d)) * head_scale / math.sqrt(d))
        self.params.append(np.zeros(self.out_dim))
        self._cache = None

    @property
    def names(self) -> list[str]:
        out = []
        for k in range(len(self.hidden)):
            out += [f"l{k}.wx", f"l{k}.wh", f"l{k}.b"]
        return out + ["head.w", "head.b"]

    def zero_state(self, batch: int = 1) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(np.zeros((batch, h)), np.zeros((batch, h))) for h in self.hidden]

    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, v: np.ndarray) -> None:
        v = np.asarray(v, dtype=float)
        if v.size != self.n_params():
            raise InvalidArgument("flat parameter vector has the wrong length")
        k = 0
        for p in self.params:
            p[...] = v[k:k + p.size].reshape(p.shape)
            k += p.size

    def zeros_like_params(self) -> list[np.ndarray]:
        return [np.zeros_like(p) for p in self.params]

    def forward(self, xs: np.ndarray, state=None, keep_cache: bool = True):
        """Run a (T, B, in) sequence. Returns (outputs (T, B, out), final state)."""
        xs = np.asarray(xs, dtype=float)
        if xs.ndim != 3 or xs.shape[2] != self.in_dim:
            raise InvalidArgument(f"expected input of shape (T, B, {self.in_dim}), got {xs.shape}")
        T, B, _ = xs.shape
        state = self.zero_state(B) if state is None else state
        if len(state) != len(self.hidden):
            raise InvalidArgument("hidden state does not match layer count")
        layer_in = xs
        caches = []
        final = []
        for k, H in enumerate(self.hidden):
            wx, wh, b = self.params[3 * k:3 * k + 3]
            h, c = state[k]
            if h.shape != (B, H) or c.shape != (B, H):
                raise InvalidArgument(f"hidden state of layer {k} must be ({B}, {H})")
            hs = np.empty((T + 1, B, H))
            cs = np.empty((T + 1, B, H))
            gates = np.empty((T, B, 4 * H))
            tcs = np.empty((T, B, H))
            hs[0], cs[0] = h, c
            zx = layer_in @ wx.T + b
            for t in range(T):
                z = zx[t] + hs[t] @ wh.T
                i = _sigmoid(z[:, :H])
                f = _sigmoid(z[:, H:2 * H])
                g = np.tanh(z[:, 2 * H:3 * H])
                o = _sigmoid(z[:, 3 * H:])
                cs[t + 1] = f * cs[t] + i * g
                tcs[t] = np.tanh(cs[t + 1])
                hs[t + 1] = o * tcs[t]
                gates[t, :, :H], gates[t, :, H:2 * H] = i, f
                gates[t, :, 2 * H:3 * H], gates[t, :, 3 * H:] = g, o
            caches.append((layer_in, hs, cs, gates, tcs))
            final.append((hs[T].copy(), cs[T].copy()))
            layer_in = hs[1:]
        wo, bo = self.params[-2:]
        ys = layer_in @ wo.T + bo
        self._cache = (caches, layer_in) if keep_cache else None
        return ys, final

    @property
    def cache(self):
        """Opaque record of the last forward pass (``None`` if not kept)."""
        return self._cache

    def backward(self, dys: np.ndarray, cache=None) -> list[np.ndarray]:
        """Gradients of sum(dys * ys) w.r.t. params for the last cached forward
        (or for ``cache`` taken from :attr:`cache` after an earlier forward)."""
        cache = self._cache if cache is None else cache
        if cache is None:
            raise ProtocolError("backward() needs a cached forward pass")
        caches, top = cache
        dys = np.asarray(dys, dtype=float)
        if dys.shape != top.shape[:2] + (self.out_dim,):
            raise InvalidArgument("upstream gradient shape does not match the cached outputs")
        grads = self.zeros_like_params()
        wo = self.params[-2]
        grads[-2] = np.einsum("tbo,tbh->oh", dys, top)
        grads[-1] = dys.sum(axis=(0, 1))
        dh_out = dys @ wo
        for k in range(len(self.hidden) - 1, -1, -1):
            H = self.hidden[k]
            wx, wh, _ = self.params[3 * k:3 * k + 3]
            layer_in, hs, cs, gates, tcs = caches[k]
            T, B = dh_out.shape[:2]
            dz_all = np.empty((T, B, 4 * H))
            dh_next = np.zeros((B, H))
            dc_next = np.zeros((B, H))
            for t in range(T - 1, -1, -1):
                i = gates[t, :, :H]
                f = gates[t, :, H:2 * H]
                g = gates[t, :, 2 * H:3 * H]
                o = gates[t, :, 3 * H:]
                dh = dh_out[t] + dh_next
                dc = dh * o * (1.0 - tcs[t] ** 2) + dc_next
                dz = dz_all[t]
                dz[:, :H] = dc * g * i * (1.0 - i)
                dz[:, H:2 * H] = dc * cs[t] * f * (1.0 - f)
                dz[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
                dz[:, 3 * H:] = dh * tcs[t] * o * (1.0 - o)
                dc_next = dc * f
                dh_next = dz @ wh
            grads[3 * k] = np.einsum("tbz,tbd->zd", dz_all, layer_in)
            grads[3 * k + 1] = np.einsum("tbz,tbh->zh", dz_all, hs[:-1])
            grads[3 * k + 2] = dz_all.sum(axis=(0, 1))
            dh_out = dz_all @ wx
        return grads

    def to_dict(self) -> dict:
        return {"in_dim": self.in_dim, "hidden": list(self.hidden), "out_dim": self.out_dim,
                "params": [p.tolist() for p in self.params]}

    @classmethod
    def from_dict(cls, d: dict) -> LstmNet:
        net = cls(d["in_dim"], tuple(d["hidden"]), d["out_dim"])
        if len(d["params"]) != len(net.params):
            raise SchemaError("parameter list does not match the layer layout")
        for p, v in zip(net.params, d["params"]):
            a = np.asarray(v, dtype=float)
            if a.shape != p.shape:
                raise SchemaError(f"parameter shape {a.shape} != {p.shape}")
            p[...] = a
        return net


@dataclass
class ObsNormalizer:
    """Running mean/variance over features, updated with each sample and its
    mirror image so that normalization commutes with the mirror map."""

    dim: int
    mean: np.ndarray = None
    var: np.ndarray = None
    count: float = 0.0
    clip: float = 10.0
    eps: float = 1e-8
    mirror: tuple | None = field(default=None, repr=False)   # (perm, signs)

    def __post_init__(self):
        self.mean = np.zeros(self.dim) if self.mean is None else np.asarray(self.mean, float)
        self.var = np.ones(self.dim) if self.var is None else np.asarray(self.var, float)

    def update(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        if self.mirror is not None:
            perm, signs = self.mirror
            x = np.vstack([x, x[:, perm] * signs])
        n = x.shape[0]
        if n == 0:
            return
        bm, bv = x.mean(0), x.var(0)
        tot = self.count + n
        delta = bm - self.mean
        self.mean = self.mean + delta * n / tot
        self.var = (self.var * self.count + bv * n + delta ** 2 * self.count * n / tot) / tot
        self.count = tot

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.count == 0:
            return np.clip(np.asarray(x, dtype=float), -self.clip, self.clip)
        z = (np.asarray(x, dtype=float) - self.mean) / np.sqrt(self.var + self.eps)
        return np.clip(z, -self.clip, self.clip)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "mean": self.mean.tolist(), "var": self.var.tolist(),
                "count": self.count, "clip": self.clip}


def gaussian_log_prob(a: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """Diagonal Gaussian log-density summed over the last axis."""
    z = (a - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - _HALF_LOG_2PI, axis=-1)


def gaussian_entropy(log_std: np.ndarray) -> float:
    return float(np.sum(log_std + _HALF_LOG_2PI + 0.5))


class LstmPolicy:
    """Actor: features + command -> PD setpoints.

    The network's raw output ``u`` maps to setpoints as ``nominal + scale * u``;
    exploration noise is a state-independent diagonal Gaussian on setpoints.
    """

    def __init__(self, obs_dim: int, act_dim: int, hidden=(64, 64), nominal=None,
                 action_scale: float = 0.5, log_std_init: float = -2.0, seed: int = 0,
                 mirror: MirrorSpec | None = None, head_scale: float = 1.0):
        self.obs_dim = int(obs_dim)
        self.act_dim = int(act_dim)
        self.net = LstmNet(self.obs_dim + 3, tuple(hidden), self.act_dim, seed=seed,
                           head_scale=head_scale)
        self.value = LstmNet(self.obs_dim + 3, tuple(hidden), 1, seed=seed + 7919)
        self.log_std = np.full(self.act_dim, float(log_std_init))
        self.clamp_log_std()
        self.nominal = np.zeros(act_dim) if nominal is None else np.asarray(nominal, float).copy()
        self.action_scale = float(action_scale)
        self.mirror = mirror
        norm_mirror = (mirror.obs_permutation, mirror.obs_signs) if mirror is not None else None
        if mirror is not None and mirror.obs_dim != self.obs_dim:
            raise InvalidArgument("mirror spec does not match the observation size")
        self.normalizer = ObsNormalizer(self.obs_dim, mirror=norm_mirror)
        self.state = self.net.zero_state(1)
        self.deterministic = True

    @property
    def hidden(self) -> tuple[int, ...]:
        return self.net.hidden

    def clamp_log_std(self) -> None:
        np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std)

    def reset_hidden(self, batch: int = 1) -> None:
        self.state = self.net.zero_state(batch)

    reset = reset_hidden

    def inputs(self, features, commands) -> np.ndarray:
        """Normalized features concatenated with the raw command vector."""
        f = np.asarray(features, dtype=float)
        c = np.asarray(commands, dtype=float)
        if f.shape[-1] != self.obs_dim:
            raise InvalidArgument(f"expected {self.obs_dim} features, got {f.shape[-1]}")
        if c.shape[-1] != 3:
            raise InvalidArgument("command vector must have 3 entries")
        return np.concatenate([self.normalizer(f), c], axis=-1)

    def mean_from_raw(self, u: np.ndarray) -> np.ndarray:
        return self.nominal + self.action_scale * u

    def forward(self, features, command) -> np.ndarray:
        """One control step for a batch (or a single env): returns action means
        and advances the stored hidden state."""
        single = np.ndim(features) == 1
        if isinstance(command, Command):
            command = command.velocity()
        x = self.inputs(np.atleast_2d(features), np.atleast_2d(command))
        if x.shape[0] != self.state[0][0].shape[0]:
            raise InvalidArgument("batch size differs from the hidden state; call reset_hidden")
        u, self.state = self.net.forward(x[None], self.state, keep_cache=False)
        mean = self.mean_from_raw(u[0])
        return mean[0] if single else mean

    def sample_action(self, mean: np.ndarray, rng: np.random.Generator):
        """Draw ``a ~ N(mean, exp(log_std)^2)``; returns (action, log_prob)."""
        std = np.exp(self.log_std)
        a = mean + std * rng.standard_normal(np.shape(mean))
        return a, gaussian_log_prob(a, mean, self.log_std)

    def log_prob(self, actions, means) -> np.ndarray:
        return gaussian_log_prob(np.asarray(actions, float), np.asarray(means, float), self.log_std)

    def act(self, features, command, obs=None) -> np.ndarray:
        """Controller interface used by rollouts and benchmarks (mean action)."""
        return self.forward(features, command)

    def mirror_inputs(self, features, commands):
        m = self.mirror
        if m is None:
            raise ProtocolError("policy has no mirror spec")
        cm = np.asarray(commands, dtype=float) * np.array([1.0, -1.0, -1.0])
        return mirror_features(np.asarray(features, dtype=float), m), cm

    def mirror_diagnostic(self, features, commands) -> float:
        """Mean ||mu(M o, M c) - M mu(o, c)|| over (T, B, ...) sequences run from zero state."""
        f = np.asarray(features, dtype=float)
        c = np.asarray(commands, dtype=float)
        u, _ = self.net.forward(self.inputs(f, c), keep_cache=False)
        fm, cm = self.mirror_inputs(f, c)
        um, _ = self.net.forward(self.inputs(fm, cm), keep_cache=False)
        d = self.mean_from_raw(um) - mirror_act(self.mean_from_raw(u), self.mirror)
        return float(np.linalg.norm(d, axis=-1).mean())

    # --- serialization ---
    def to_dict(self) -> dict:
        m = self.mirror
        return {
            "obs_dim": self.obs_dim, "act_dim": self.act_dim, "hidden": list(self.hidden),
            "nominal": self.nominal.tolist(), "action_scale": self.action_scale,
            "log_std": self.log_std.tolist(), "actor": self.net.to_dict(),
            "critic": self.value.to_dict(), "normalizer": self.normalizer.to_dict(),
            "mirror": m.to_dict() if m is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> LstmPolicy:
        mirror = MirrorSpec.from_dict(d["mirror"]) if d.get("mirror") else None
        p = cls(d["obs_dim"], d["act_dim"], tuple(d["hidden"]), d["nominal"], d["action_scale"],
                mirror=mirror)
        p.log_std = np.asarray(d["log_std"], dtype=float)
        p.net = LstmNet.from_dict(d["actor"])
        p.value = LstmNet.from_dict(d["critic"])
        nd = d["normalizer"]
        p.normalizer = ObsNormalizer(nd["dim"], np.asarray(nd["mean"]), np.asarray(nd["var"]),
                                     float(nd["count"]), float(nd["clip"]),
                                     mirror=p.normalizer.mirror)
        p.reset_hidden()
        return p

    def param_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(path, policy: LstmPolicy, config: dict | None = None, iteration: int = 0,
                    config_hash: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"schema": CHECKPOINT_SCHEMA, "version": CHECKPOINT_VERSION, "iteration": iteration,
           "config_hash": config_hash, "config": config or {}, "policy": policy.to_dict()}
    path.write_text(json.dumps(doc))
    return path


def load_checkpoint(path) -> tuple[LstmPolicy, dict]:
    """Returns (policy, metadata) where metadata holds config, hash, iteration."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not a JSON checkpoint: {exc}") from exc
    if doc.get("schema") != CHECKPOINT_SCHEMA:
        raise SchemaError(f"{path}: unexpected schema {doc.get('schema')!r}")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise SchemaError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    meta = {k: doc[k] for k in ("iteration", "config_hash", "config")}
    return LstmPolicy.from_dict(doc["policy"]), meta
