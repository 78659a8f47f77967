"""Command-line front end: ``run``, ``slope``, ``predict`` and ``presets``.

Tunables live in an INI file with three flat sections::

    [experiment]
    preset = nl1
    seed = 0
    horizon = 1000000

    [model]
    q = 0.5

    [algorithm]
    N = 4096
    N_aux = 1000

Values are JSON literals (bare strings are accepted too). Command-line flags
override file keys. ``PBAYES_THREADS`` sets the default worker count.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from dataclasses import dataclass, field, fields

import numpy as np

from . import presets
from .config import AlgoConfig
from .data import CSVStream
from .diagnostics import TraceWriter, fmt, predict_scores, read_trace, trace_slope
from .engine import PerturbedBayes
from .errors import ConfigurationError, InvariantViolation, ModelEvaluationError
from .models import MixtureLogistic

THREADS_ENV = "PBAYES_THREADS"
EXIT_OK, EXIT_CONFIG, EXIT_MODEL, EXIT_INTERNAL = 0, 2, 3, 4


@dataclass
class ExperimentConfig:
    preset: str = "gmm-demo"
    seed: int = 0
    horizon: int | None = None
    truth: list | None = None
    use_truth: bool = True
    output: str = "trace.csv"
    summary: str | None = None
    data: str | None = None
    shuffle_seed: int | None = None
    every: int = 0
    timing: bool = False
    model: dict = field(default_factory=dict)
    algorithm: dict = field(default_factory=dict)


_EXPERIMENT_KEYS = [f.name for f in fields(ExperimentConfig) if f.name not in ("model", "algorithm")]


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def emit_config(cfg: ExperimentConfig) -> str:
    """INI text that :func:`parse_config` maps back to ``cfg``."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["experiment"] = {k: json.dumps(getattr(cfg, k)) for k in _EXPERIMENT_KEYS}
    cp["model"] = {k: json.dumps(v) for k, v in cfg.model.items()}
    cp["algorithm"] = {k: json.dumps(v) for k, v in cfg.algorithm.items()}
    lines = []
    for name in cp.sections():
        lines.append(f"[{name}]")
        lines += [f"{k} = {v}" for k, v in cp[name].items()]
        lines.append("")
    return "\n".join(lines)


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from exc
    unknown = set(cp.sections()) - {"experiment", "model", "algorithm"}
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
    cfg = ExperimentConfig()
    if cp.has_section("experiment"):
        for k, v in cp["experiment"].items():
            if k not in _EXPERIMENT_KEYS:
                raise ConfigurationError(f"unknown experiment key {k!r}")
            setattr(cfg, k, _parse_value(v))
    if cp.has_section("model"):
        cfg.model = {k: _parse_value(v) for k, v in cp["model"].items()}
    if cp.has_section("algorithm"):
        cfg.algorithm = {k: _parse_value(v) for k, v in cp["algorithm"].items()}
        AlgoConfig.from_dict(dict(cfg.algorithm))  # validates keys and values early
    return cfg


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be positive")
    return n


def _kv(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigurationError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = _parse_value(v.strip())
    return out


def resolve_experiment(args) -> ExperimentConfig:
    """Merge the config file (if any) with command-line flags."""
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = parse_config(fh.read())
        except OSError as exc:
            raise ConfigurationError(f"cannot read {args.config}: {exc}") from exc
    else:
        cfg = ExperimentConfig()
    for name in ("preset", "seed", "horizon", "output", "summary", "data", "shuffle_seed", "every"):
        val = getattr(args, name)
        if val is not None:
            setattr(cfg, name, val)
    if args.timing:
        cfg.timing = True
    if args.truth is not None:
        if args.truth.lower() == "none":
            cfg.use_truth, cfg.truth = False, None
        else:
            cfg.use_truth, cfg.truth = True, [float(v) for v in args.truth.split(",")]
    cfg.model.update(_kv(args.param))
    for name in ("q", "d"):
        if getattr(args, name) is not None:
            cfg.model[name] = getattr(args, name)
    cfg.algorithm.update(_kv(args.set))
    for name in ("N", "M", "t1", "N_aux", "mode"):
        if getattr(args, name) is not None:
            cfg.algorithm[name] = getattr(args, name)
    if args.threads is not None:
        cfg.algorithm["workers"] = args.threads
    cfg.algorithm.setdefault("workers", default_threads())
    return cfg


def run_experiment(cfg: ExperimentConfig, out=None) -> dict:
    """Run one experiment and write its trace (and summary). Returns the summary."""
    out = sys.stdout if out is None else out
    known = {f.name for f in fields(AlgoConfig)}
    unknown = set(cfg.algorithm) - known
    if unknown:
        raise ConfigurationError(f"unknown algorithm keys: {sorted(unknown)}")
    if "seed" in cfg.algorithm:
        raise ConfigurationError("set the seed under [experiment], not [algorithm]")
    exp = presets.build(cfg.preset, cfg.seed, cfg.model, cfg.algorithm)
    truth = None
    if cfg.use_truth:
        truth = exp.truth if cfg.truth is None else np.asarray(cfg.truth, dtype=float)
        if cfg.data is not None and cfg.truth is None:
            truth = None  # synthetic truth says nothing about external data
    if truth is not None and len(truth) != exp.model.dim:
        raise ConfigurationError(f"truth has {len(truth)} entries, model dimension is {exp.model.dim}")
    if cfg.data is not None:
        stream = CSVStream(cfg.data, cfg.shuffle_seed, getattr(exp.model, "x_dim", 0))
    else:
        stream = exp.make_stream(cfg.seed)
    horizon = exp.horizon if cfg.horizon is None else int(cfg.horizon)
    checkpoints = range(cfg.every, horizon + 1, cfg.every) if cfg.every > 0 else ()

    engine = PerturbedBayes(exp.model, exp.config, truth=truth)
    writer = TraceWriter(cfg.output, exp.model.dim, truth is not None, cfg.timing)
    engine.listener = writer
    try:
        report = engine.run(stream, horizon, checkpoints)
    finally:
        writer.close()
        engine.close()
    summary = {
        "preset": cfg.preset,
        "seed": cfg.seed,
        "t": report.t,
        "perturbations": sum(r.kind == "perturb" for r in report.rows),
        "estimate": [float(v) for v in report.estimate],
        "error": None if truth is None else engine.error_of(report.estimate),
        "partition": engine.partition.digest(),
        "wall_ns_per_obs": report.wall_ns_per_obs,
        "stopped_early": report.stopped_early,
        "trace": cfg.output,
    }
    if cfg.summary:
        with open(cfg.summary, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
    print(f"t={report.t} perturbations={summary['perturbations']} "
          f"estimate=[{', '.join(fmt(v) for v in report.estimate)}]"
          + ("" if truth is None else f" error={fmt(summary['error'])}"), file=out)
    return summary


def _cmd_run(args) -> int:
    run_experiment(resolve_experiment(args))
    return EXIT_OK


def _cmd_slope(args) -> int:
    try:
        trace = read_trace(args.trace)
    except OSError as exc:
        raise ConfigurationError(f"cannot read {args.trace}: {exc}") from exc
    print(fmt(trace_slope(trace, args.window)))
    return EXIT_OK


def _cmd_predict(args) -> int:
    if args.theta is not None:
        theta = np.array([float(v) for v in args.theta.split(",")])
    elif args.summary is not None:
        with open(args.summary, encoding="utf-8") as fh:
            theta = np.asarray(json.load(fh)["estimate"], dtype=float)
    else:
        raise ConfigurationError("predict needs --theta or --summary")
    model = MixtureLogistic(args.J, args.x_dim)
    if len(theta) != model.dim:
        raise ConfigurationError(f"theta has {len(theta)} entries, J={args.J}, x_dim={args.x_dim} "
                                 f"needs {model.dim}")
    try:
        predict_scores(model, theta, args.data, args.out)
    except OSError as exc:
        raise ConfigurationError(str(exc)) from exc
    return EXIT_OK


def _cmd_presets(args) -> int:
    for name, (_, desc) in presets.PRESETS.items():
        print(f"{name:10s} {desc}")
    if args.show:
        exp = presets.build(args.show)
        algo = exp.config.to_dict()
        del algo["seed"], algo["workers"]
        cfg = ExperimentConfig(preset=args.show, horizon=exp.horizon, algorithm=algo)
        print()
        print(emit_config(cfg), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="perturbed-bayes", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run an experiment and write its trace")
    r.add_argument("--config", help="INI file; flags override its keys")
    r.add_argument("--preset", help=f"one of {', '.join(presets.PRESETS)}")
    r.add_argument("--seed", type=int)
    r.add_argument("--horizon", type=int)
    r.add_argument("--out", dest="output", help="trace CSV path (default trace.csv)")
    r.add_argument("--summary", help="summary JSON path")
    r.add_argument("--data", help="CSV of observations instead of synthetic data")
    r.add_argument("--shuffle-seed", type=int, help="permute the CSV rows once with this seed")
    r.add_argument("--truth", help="comma-separated parameter for the error column, or 'none'")
    r.add_argument("--every", type=int, help="extra trace row every this many observations")
    r.add_argument("--timing", action="store_true", help="add the wall_ns_per_obs column")
    r.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
    r.add_argument("--N", type=int)
    r.add_argument("--M", type=int)
    r.add_argument("--t1", type=int)
    r.add_argument("--N-aux", dest="N_aux", type=int)
    r.add_argument("--mode", choices=("auto", "full", "meanfield"))
    r.add_argument("--q", type=float, help="quantile level (quantile presets)")
    r.add_argument("--d", type=int, help="parameter dimension (nl2, linear)")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="algorithm tunable")
    r.add_argument("--param", action="append", metavar="KEY=VALUE", help="preset parameter")
    r.set_defaults(fn=_cmd_run)

    s = sub.add_parser("slope", help="log-log slope of error against t")
    s.add_argument("trace")
    s.add_argument("--window", type=float, default=1.0, help="decades at the end of the run")
    s.set_defaults(fn=_cmd_slope)

    p = sub.add_parser("predict", help="purchase probabilities under a fitted logistic mixture")
    p.add_argument("--data", required=True, help="CSV of covariates (optionally led by z)")
    p.add_argument("--out", required=True)
    p.add_argument("--theta", help="comma-separated parameter")
    p.add_argument("--summary", help="summary JSON written by run")
    p.add_argument("--J", type=int, default=2)
    p.add_argument("--x-dim", dest="x_dim", type=int, required=True)
    p.set_defaults(fn=_cmd_predict)

    ls = sub.add_parser("presets", help="list presets")
    ls.add_argument("--show", help="print the config file of one preset")
    ls.set_defaults(fn=_cmd_presets)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelEvaluationError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except InvariantViolation as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
