"""Command-line entry point: ``sawlab train | bench | report | validate``.

Exit codes: 0 success, 2 bad configuration or input, 3 runtime failure
(simulation blow-up, training error, protocol violation), 4 a validation
invariant failed. ``SAWLAB_OUT`` sets the default output root.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from sawlab.errors import (
    ConfigError,
    InvalidArgument,
    ProtocolError,
    SawError,
    SchemaError,
    SimulationBlowup,
    TrainingError,
)

log = logging.getLogger("sawlab.cli")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VALIDATION = 0, 2, 3, 4


class ValidationFailed(SawError):
    pass


def out_root() -> Path:
    return Path(os.environ.get("SAWLAB_OUT", "runs"))


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _words(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


# --- train -------------------------------------------------------------------

def cmd_train(args) -> int:
    from sawlab.config import ExperimentConfig
    from sawlab.train import train_loop

    ppo = {}
    if args.iterations is not None:
        ppo["iterations"] = args.iterations
    if args.workers is not None:
        ppo["workers"] = args.workers
    if args.serial or args.serial_here:
        ppo["workers"] = 1
    overrides = {"seed": args.seed}
    if ppo:
        overrides["ppo"] = ppo
    cfg = ExperimentConfig.load(args.config, args.preset, overrides)
    out = Path(args.out or cfg.out or out_root() / f"{cfg.preset or 'default'}-seed{cfg.seed}")
    cfg.resolved["out"] = str(out)
    cfg.write(out / "config.yaml")
    log.info("training %s into %s (config %s)", cfg.preset or "default", out, cfg.hash())
    policy = cfg.make_policy()
    if args.time_budget is not None and not args.time_budget > 0:
        raise InvalidArgument("--time-budget must be positive")
    # checkpoints carry the config without the run location, so reruns match byte for byte
    embedded = {**cfg.to_dict(), "out": None}
    res = train_loop(cfg.factory(), policy, cfg.ppo, seed=cfg.seed, out_dir=out,
                     config=embedded, config_hash=cfg.hash(), time_budget=args.time_budget)
    first, last = res.initial_eval, res.final_eval or res.initial_eval
    print(f"eval episode length: {first['mean_episode_length']:.2f} s -> "
          f"{last['mean_episode_length']:.2f} s after {res.iterations} iterations "
          f"({res.wall_time:.0f} s)")
    print(f"wrote {out / 'metrics.csv'} and {out / 'policy.json'}")
    return EXIT_OK


# --- bench -------------------------------------------------------------------

def _load_logs(path) -> list:
    from sawlab.core import EpisodeLog

    p = Path(path)
    if not p.exists():
        raise InvalidArgument(f"log path {p} not found")
    files = sorted(p.glob("*.jsonl")) if p.is_dir() else [p]
    if not files:
        raise InvalidArgument(f"no .jsonl episode logs under {p}")
    return [EpisodeLog.read(f) for f in files]


def _policy_and_config(args):
    """(policy, ExperimentConfig) from --policy and optional --config."""
    from sawlab.config import ExperimentConfig
    from sawlab.policy import load_checkpoint

    if not args.policy:
        raise InvalidArgument("--policy is required for live runs (or pass --logs / --synthetic)")
    if not Path(args.policy).is_file():
        raise InvalidArgument(f"checkpoint {args.policy} not found")
    policy, meta = load_checkpoint(args.policy)
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    elif meta.get("config"):
        cfg = ExperimentConfig.from_resolved(meta["config"])
    else:
        cfg = ExperimentConfig.resolve()
    if policy.act_dim != cfg.model.n_act:
        raise InvalidArgument(f"checkpoint drives {policy.act_dim} motors, config model has "
                              f"{cfg.model.n_act}")
    return policy, cfg


def _bench_meta(args, source, policy=None, cfg=None) -> dict:
    meta = {"command": f"bench {args.metric}", "source": source, "seed": args.seed}
    if policy is not None:
        meta["policy_hash"] = policy.param_hash()
    if cfg is not None:
        meta["config_hash"] = cfg.hash()
    if args.label:
        meta["label"] = args.label
    return meta


def _disturbance(args, out: Path):
    from sawlab.bench import BenchReport, grid_from_logs, run_disturbance_sweep

    if args.logs:
        cells = grid_from_logs(_load_logs(args.logs), trials=args.trials)
        return BenchReport(disturbance=cells, meta=_bench_meta(args, "logs"))
    policy, cfg = _policy_and_config(args)
    grid = cfg.grid(forces=args.forces, durations=args.durations, directions=args.directions,
                    trials=args.trials)
    cells = run_disturbance_sweep(cfg.factory(), policy, grid, seed=args.seed,
                                  log_dir=out / "logs")
    meta = _bench_meta(args, "live", policy, cfg)
    meta["grid"] = grid.to_dict()
    return BenchReport(disturbance=cells, meta=meta)


def _rotation_rows(results):
    from sawlab.bench import RotationRow

    rows: dict = {}
    for omega, duration, res, name in results:
        row = rows.setdefault((omega, duration), RotationRow(omega, duration, [], []))
        row.angular_errors.append(res.angular_error)
        row.lateral_drifts.append(res.lateral_drift)
        if name:
            row.logs.append(name)
    return [rows[k] for k in sorted(rows, key=lambda k: (k[1], k[0]))]


def _clock(lg):
    marks = lg.meta.get("marks") or {}
    return lg.window(marks["clock"]) if "clock" in marks else lg


def _rotation(args, out: Path):
    from sawlab.bench import BenchReport, rotation_metrics, rotation_trial
    from sawlab.bench.synthetic import rotation_log

    results = []
    if args.logs:
        for lg in _load_logs(args.logs):
            omega = float(lg.meta.get("omega", args.omega))
            duration = float(lg.meta.get("duration", lg.duration))
            results.append((omega, duration, rotation_metrics(_clock(lg), omega, duration,
                                                              args.circle_radius), None))
        return BenchReport(rotation=_rotation_rows(results), meta=_bench_meta(args, "logs"))
    if args.synthetic:
        for d in args.durations:
            for k in range(args.trials):
                lg = rotation_log(args.omega, d)
                name = f"rotation_{d:g}s_{k}.jsonl"
                lg.write(out / "logs" / name)
                results.append((args.omega, d, rotation_metrics(lg, args.omega, d,
                                                                args.circle_radius), name))
        return BenchReport(rotation=_rotation_rows(results), meta=_bench_meta(args, "synthetic"))
    policy, cfg = _policy_and_config(args)
    factory = cfg.factory()
    for d in args.durations:
        for k in range(args.trials):
            tr = rotation_trial(factory(args.seed + k), policy, args.omega, d, args.seed + k,
                                args.circle_radius, cfg.bench.settle)
            name = f"rotation_{d:g}s_{k}.jsonl"
            tr.log.write(out / "logs" / name)
            results.append((args.omega, d, tr.result, name))
    return BenchReport(rotation=_rotation_rows(results), meta=_bench_meta(args, "live", policy, cfg))


def _walk_record(args, out: Path):
    """One straight-walk log (live, imported or synthetic) plus its source tag."""
    from sawlab.bench.protocols import velocity_trial
    from sawlab.bench.synthetic import power_log, straight_walk_log

    if args.logs:
        logs = _load_logs(args.logs)
        if len(logs) != 1:
            raise InvalidArgument(f"{args.metric} scores exactly one log, got {len(logs)}")
        return _clock(logs[0]), "logs", None, None
    if args.synthetic:
        if args.metric == "energy":
            n = int(round(args.t / 0.02))
            lg = power_log([[10.0]] * n, [[1.0]] * n, 0.02, distance=args.v * args.t)
        else:
            lg = straight_walk_log(args.v, args.t)
        lg.write(out / "logs" / f"{args.metric}.jsonl")
        return lg, "synthetic", None, None
    policy, cfg = _policy_and_config(args)
    env = cfg.factory()(args.seed)
    tr = velocity_trial(env, policy, args.v, args.t, args.seed, cfg.bench.settle,
                        cfg.bench.stop_time)
    tr.log.write(out / "logs" / f"{args.metric}.jsonl")
    return _clock(tr.log), "live", policy, cfg


def _velocity(args, out: Path):
    from sawlab.bench import BenchReport, velocity_metric

    lg, source, policy, cfg = _walk_record(args, out)
    v = float(lg.meta.get("v", args.v)) if source == "logs" else args.v
    t = float(lg.meta.get("duration", args.t)) if source == "logs" else args.t
    r = velocity_metric(lg, v, t)
    return BenchReport(velocity={"v": v, "duration": t, "d_c": r.d_c, "d_r": r.d_r,
                                 "mean_velocity": r.mean_velocity, "log": f"{args.metric}.jsonl"},
                       meta=_bench_meta(args, source, policy, cfg))


def _energy(args, out: Path):
    from sawlab.bench import BenchReport, energy_metric

    lg, source, policy, cfg = _walk_record(args, out)
    r = energy_metric(lg)
    return BenchReport(energy={"positive_work": r.positive_work, "distance": r.distance,
                               "energy_per_meter": r.energy_per_meter,
                               "log": f"{args.metric}.jsonl"},
                       meta=_bench_meta(args, source, policy, cfg))


def cmd_bench(args) -> int:
    from sawlab.bench import emit_report, read_report

    out = Path(args.out or out_root() / "bench")
    run = {"disturbance": _disturbance, "rotation": _rotation, "velocity": _velocity,
           "energy": _energy}[args.metric]
    report = run(args, out)
    existing = out / "report.json"
    if existing.is_file() and not args.fresh:
        report = read_report(existing).merge(report)
    paths = emit_report(report, out)
    _summarize(report, args.metric)
    print("wrote " + ", ".join(str(p) for p in paths))
    return EXIT_OK


def _summarize(report, metric: str) -> None:
    if metric == "disturbance":
        for c in report.disturbance:
            print(f"{c.direction} {c.force:g} N x {c.duration:g} s: {c.successes}/{c.attempts} "
                  f"({c.success_pct:.0f}%)")
    elif metric == "rotation":
        for r in report.rotation:
            (em, es), (dm, ds) = r.angular_error, r.lateral_drift
            print(f"{r.duration:g} s: theta_c {r.theta_c:.3f} rad, error {em:.3f} +/- {es:.3f} rad, "
                  f"drift {dm:.3f} +/- {ds:.3f} m")
    elif metric == "velocity":
        v = report.velocity
        print(f"d_c {v['d_c']:.3f} m, d_r {v['d_r']:.3f} m, mean {v['mean_velocity']:.3f} m/s")
    else:
        e = report.energy
        per = e["energy_per_meter"]
        print(f"positive work {e['positive_work']:.3f} J over {e['distance']:.3f} m, "
              + (f"{per:.3f} J/m" if per is not None else "per-metre value not applicable"))


# --- report / validate -------------------------------------------------------

def cmd_report(args) -> int:
    from sawlab.bench import emit_report, read_report

    src = Path(args.input)
    if not src.is_file():
        raise InvalidArgument(f"report {src} not found")
    report = read_report(src)
    formats = _words(args.format)
    out = Path(args.out) if args.out else src.parent
    for p in emit_report(report, out, formats, stem=args.stem or src.stem):
        print(f"wrote {p}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from sawlab import validate

    fn = validate.SCENARIOS[args.scenario]
    checks = fn(n=args.n) if args.scenario == "reward-audit" and args.n else fn()
    for c in checks:
        print(c.line())
    if not all(c.passed for c in checks):
        raise ValidationFailed(f"{sum(not c.passed for c in checks)} check(s) failed")
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sawlab", description=__doc__.splitlines()[0])
    p.add_argument("--serial", action="store_true",
                   help="run everything in one process (overrides worker counts)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a policy with PPO")
    t.add_argument("--config", help="experiment YAML")
    t.add_argument("--preset", help="single-contact | single-contact-plus-plus | balance-smoke")
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.add_argument("--iterations", type=int)
    t.add_argument("--workers", type=int, help="rollout worker processes")
    t.add_argument("--time-budget", type=float,
                   help="wall-clock seconds; stop after the iteration that would exceed it")
    t.add_argument("--serial", dest="serial_here", action="store_true",
                   help="same as the global --serial")
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("bench", help="run a benchmark metric and write a report")
    b.add_argument("metric", choices=["disturbance", "rotation", "velocity", "energy"])
    b.add_argument("--policy", help="checkpoint JSON")
    b.add_argument("--config", help="experiment YAML (default: the checkpoint's own)")
    b.add_argument("--logs", help="score recorded EpisodeLog .jsonl file(s) instead of running")
    b.add_argument("--synthetic", action="store_true",
                   help="score generated reference logs (no policy needed)")
    b.add_argument("--forces", type=_floats, help="push forces in N, e.g. 50,80,110")
    b.add_argument("--durations", type=_floats,
                   help="push durations (disturbance) or command durations (rotation), in s")
    b.add_argument("--directions", type=_words, help="e.g. +x,-x (use --directions=-x alone)")
    b.add_argument("--trials", type=int)
    b.add_argument("--omega", type=float, default=0.5, help="yaw rate in rad/s")
    b.add_argument("--circle-radius", type=float, default=0.3048, help="drift circle radius, m")
    b.add_argument("--v", type=float, default=1.0, help="commanded speed in m/s")
    b.add_argument("--t", type=float, default=10.0, help="command duration in s")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--label", help="policy label in the figure")
    b.add_argument("--out")
    b.add_argument("--fresh", action="store_true", help="do not merge into an existing report")
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("report", help="re-emit a report JSON as json/csv/svg")
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--format", default="json,csv,svg")
    r.add_argument("--out")
    r.add_argument("--stem")
    r.set_defaults(func=cmd_report)

    v = sub.add_parser("validate", help="run a property check outside the test suite")
    v.add_argument("scenario", choices=["drop-test", "push-test", "gradcheck", "reward-audit"])
    v.add_argument("--n", type=int, help="fuzzed states for reward-audit (default 100000)")
    v.set_defaults(func=cmd_validate)
    return p


def _bench_defaults(args) -> None:
    if args.metric == "rotation":
        args.durations = args.durations or [1.0, 5.0, 30.0]
        args.trials = args.trials or 3
    if args.trials is not None and args.trials < 1:
        raise InvalidArgument("--trials must be >= 1")
    if args.metric in ("velocity", "energy") and not args.t > 0:
        raise InvalidArgument("--t must be positive")
    if args.logs and args.synthetic:
        raise InvalidArgument("--logs and --synthetic are exclusive")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 1)
    if args.command == "train":
        level = min(level, logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "bench":
            _bench_defaults(args)
        return args.func(args)
    except ValidationFailed as e:
        print(f"validation failed: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConfigError, InvalidArgument, SchemaError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationBlowup, TrainingError, ProtocolError, SawError, OSError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
