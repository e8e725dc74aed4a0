"""Episodic training loop: collect, GAE, several epochs of minibatch PPO."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sawlab.core import Command
from sawlab.errors import TrainingError
from sawlab.policy import LstmPolicy, gaussian_log_prob, save_checkpoint
from sawlab.rewards import TERMS
from sawlab.train.ppo import Adam, PpoConfig, clip_grad_norm, flat_grads, flat_params, ppo_loss
from sawlab.train.rollout import Collector, ParallelCollector, build_batch

log = logging.getLogger("sawlab.train")

REPLAY_TOL = 1e-6

METRIC_COLUMNS = (
    ["iteration", "env_steps", "episodes", "mean_return", "mean_episode_length"]
    + [f"r_{k}" for k in TERMS]
    + ["policy_loss", "value_loss", "mirror_loss", "entropy", "clip_fraction", "approx_kl",
       "grad_norm", "mirror_diagnostic", "replay_error", "eval_episode_length", "eval_return",
       "eval_fall_rate"]
)


def evaluate(policy: LstmPolicy, factory, episodes: int, seed: int,
             command: Command | None = None) -> dict:
    """Deterministic (mean-action) episodes. Lengths are in seconds.

    ``feet_contact_rate`` is the mean unweighted single-contact term over all
    steps, which is the stepping diagnostic used for walking commands.
    """
    seeds = np.random.SeedSequence(seed).generate_state(episodes)
    lengths, returns, falls, contact = [], [], 0, []
    for s in seeds:
        env = factory()
        if command is not None:
            env.set_command(command, hold=True)
        env.reset(int(s))
        policy.reset_hidden(1)
        ret, done = 0.0, False
        while not done:
            a = policy.act(env.features(), env.command)
            _, br, done = env.step(a)
            ret += br["total"]
            contact.append(env.last_terms["feet_contact"])
        lengths.append(env.step_count * env.control_dt)
        returns.append(ret)
        falls += int(env.fallen)
    policy.reset_hidden(1)
    return {"mean_episode_length": float(np.mean(lengths)), "mean_return": float(np.mean(returns)),
            "fall_rate": falls / episodes, "feet_contact_rate": float(np.mean(contact)),
            "lengths": [float(x) for x in lengths]}


def replay_error(policy: LstmPolicy, batch) -> float:
    x = policy.inputs(batch.feats, batch.cmds)
    u, _ = policy.net.forward(x, batch.h_actor, keep_cache=False)
    lp = gaussian_log_prob(batch.actions, policy.mean_from_raw(u), policy.log_std)
    m = batch.mask > 0
    return float(np.max(np.abs(lp[m] - batch.logp[m]))) if m.any() else 0.0


@dataclass
class TrainResult:
    metrics: list[dict] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)
    initial_eval: dict | None = None
    final_eval: dict | None = None
    iterations: int = 0
    wall_time: float = 0.0       # seconds, including evaluations


def _fmt(v):
    if v is None or v == "":
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def train_loop(factory, policy: LstmPolicy, cfg: PpoConfig, seed: int = 0, out_dir=None,
               config: dict | None = None, config_hash: str = "",
               iterations: int | None = None, time_budget: float | None = None,
               stop=None) -> TrainResult:
    """Train ``policy`` in place. With ``out_dir`` set, writes ``metrics.csv``
    and checkpoints under ``checkpoints/`` plus ``policy.json`` (latest).

    ``time_budget`` (wall seconds) ends training after the iteration that
    crosses it; ``stop(row)`` is asked after every evaluated iteration and
    ends training when it returns true. Either way the last iteration is
    evaluated and checkpointed.
    """
    iters = cfg.iterations if iterations is None else int(iterations)
    out = Path(out_dir) if out_dir is not None else None
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    n_steps = max(1, cfg.batch_steps // cfg.num_envs)
    if cfg.workers > 1:
        collector = ParallelCollector(factory, cfg.num_envs, seed, cfg.seq_len, cfg.workers)
    else:
        collector = Collector(factory, cfg.num_envs, seed, cfg.seq_len)
    opt = Adam(flat_params(policy), lr=cfg.lr)
    result = TrainResult()
    writer = fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        fh = open(out / "metrics.csv", "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)
    eval_seed = seed + 1_000_003
    try:
        result.initial_eval = evaluate(policy, factory, cfg.eval_episodes, eval_seed)
        log.info("iter 0 eval: length %.2f s, return %.2f",
                 result.initial_eval["mean_episode_length"], result.initial_eval["mean_return"])
        env_steps = done_iters = 0
        start = time.perf_counter()
        for it in range(1, iters + 1):
            t0 = time.perf_counter()
            tl = collector.collect(policy, n_steps, cfg.gamma)
            env_steps += tl.steps
            batch = build_batch(tl, cfg.gamma, cfg.lam, cfg.seq_len)
            rep = replay_error(policy, batch)
            if rep > REPLAY_TOL:
                raise TrainingError(f"stored log-probs not reproduced (max error {rep:.3e})",
                                    dump={"iteration": it})
            diags = []
            gnorms = []
            for _ in range(cfg.epochs):
                order = rng.permutation(batch.n_seq)
                for idx in np.array_split(order, min(cfg.minibatches, batch.n_seq)):
                    _, grads, d = ppo_loss(batch.select(np.sort(idx)), policy, cfg)
                    g = flat_grads(grads)
                    gnorms.append(clip_grad_norm(g, cfg.max_grad_norm))
                    opt.step(g)
                    policy.clamp_log_std()
                    diags.append(d)
            policy.normalizer.update(tl.feats.reshape(-1, tl.feats.shape[-1]))
            eps = tl.episodes
            row = {
                "iteration": it, "env_steps": env_steps, "episodes": len(eps),
                "mean_return": float(np.mean([e[0] for e in eps])) if eps else "",
                "mean_episode_length": (float(np.mean([e[1] for e in eps])) *
                                        factory.sim.control_dt) if eps else "",
            }
            for k in TERMS:
                row[f"r_{k}"] = tl.term_sums[k]
            for k in ("policy_loss", "value_loss", "mirror_loss", "entropy", "clip_fraction",
                      "approx_kl"):
                row[k] = float(np.mean([d[k] for d in diags]))
            row["grad_norm"] = float(np.mean(gnorms))
            row["mirror_diagnostic"] = (policy.mirror_diagnostic(batch.feats[:, :4], batch.cmds[:, :4])
                                        if policy.mirror is not None else "")
            row["replay_error"] = rep
            # stop early if another iteration would not fit in the budget
            elapsed = time.perf_counter() - start
            out_of_time = time_budget is not None and elapsed * (it + 1) / it > time_budget
            last = it == iters or out_of_time
            if it % cfg.eval_every == 0 or last:
                ev = evaluate(policy, factory, cfg.eval_episodes, eval_seed)
                row["eval_episode_length"] = ev["mean_episode_length"]
                row["eval_return"] = ev["mean_return"]
                row["eval_fall_rate"] = ev["fall_rate"]
                result.final_eval = ev
                if stop is not None and stop(row):
                    last = True
            result.metrics.append(row)
            if writer is not None:
                writer.writerow([_fmt(row.get(k, "")) for k in METRIC_COLUMNS])
                fh.flush()
                if it % cfg.checkpoint_every == 0 or last:
                    p = save_checkpoint(out / "checkpoints" / f"iter_{it:05d}.json", policy,
                                        config, it, config_hash)
                    result.checkpoints.append(p)
            log.info("iter %d: steps %d, ep len %s, return %s, eval %s (%.1fs)", it, env_steps,
                     row["mean_episode_length"], row["mean_return"],
                     row.get("eval_episode_length", "-"), time.perf_counter() - t0)
            done_iters = it
            if last:
                break
        result.iterations = done_iters
        result.wall_time = time.perf_counter() - start
        if out is not None:
            save_checkpoint(out / "policy.json", policy, config, done_iters, config_hash)
    finally:
        if fh is not None:
            fh.close()
        if isinstance(collector, ParallelCollector):
            collector.close()
    return result
