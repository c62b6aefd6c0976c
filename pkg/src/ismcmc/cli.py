"""Command line entry points: run, pilot-tune, replicate, simulate.

Configs are flat key=value text files mirroring RunConfig; '#' starts a
comment.  Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .errors import ConfigError, IsMcmcError
from .models import GbmModel, PoissonTrendModel, SvModel
from .pipeline import RunConfig, pilot_tune_m, replicate, run

__all__ = ["main", "parse_config_file"]

_INT_KEYS = {"m", "n_iters", "thinning", "seed", "threads", "level_coarse", "level_fine"}
_FLOAT_KEYS = {"burnin", "inflation", "init_step"}
_BOOL_KEYS = {"averaged_is1", "antithetic"}
_VECTOR_KEYS = {"theta_init"}
_INT_TUPLE_KEYS = {"latent_times"}
_STR_KEYS = {"model", "algorithm", "weighting", "approximation", "out", "data_path"}

_SIM_MODELS = {"poisson-trend": PoissonTrendModel, "sv": SvModel, "gbm": GbmModel}


def _coerce(key: str, value: str):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _BOOL_KEYS:
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if key in _VECTOR_KEYS:
            return np.array([float(v) for v in value.split(",")])
        if key in _INT_TUPLE_KEYS:
            return tuple(int(v) for v in value.split(","))
        if key in _STR_KEYS:
            return value
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}")
    raise ConfigError(f"unknown config key {key!r}")


def parse_config_file(path: str) -> RunConfig:
    """Read a flat key=value config file into a RunConfig."""
    fields = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, value = (s.strip() for s in line.split("=", 1))
                fields[key] = _coerce(key, value)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    for required in ("model", "algorithm", "weighting"):
        if required not in fields:
            raise ConfigError(f"config is missing {required!r}")
    cfg = RunConfig(**fields)
    cfg.validate()
    return cfg


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    from dataclasses import replace

    updates = {}
    for key in ("seed", "threads", "out"):
        value = getattr(args, key, None)
        if value is not None:
            updates[key] = value
    return replace(cfg, **updates) if updates else cfg


def _cmd_run(args) -> int:
    cfg = _apply_overrides(parse_config_file(args.config), args)
    result = run(cfg)
    for name, value in result.estimates.items():
        print(f"{name}\t{value:.6g}\tn_v_n={result.n_v_n[name]:.4g}")
    print(f"acceptance_rate\t{result.acc_rate:.4f}")
    print(f"phase1_s\t{result.phase1_seconds:.2f}")
    print(f"phase2_s\t{result.phase2_seconds:.2f}")
    return 0


def _cmd_pilot_tune(args) -> int:
    cfg = _apply_overrides(parse_config_file(args.config), args)
    if args.anchor is not None:
        anchor = np.array([float(v) for v in args.anchor.split(",")])
    elif cfg.theta_init is not None:
        anchor = cfg.theta_init
    else:
        raise ConfigError("pilot-tune needs --anchor or theta_init in the config")
    m = pilot_tune_m(cfg, args.delta, anchor)
    print(m)
    return 0


def _cmd_replicate(args) -> int:
    cfg = _apply_overrides(parse_config_file(args.config), args)
    table = replicate(cfg, args.reps, threads=cfg.threads)
    print("functional\tmse\tmean_time_s\tire")
    for name, mse, ire in zip(table.functionals, table.mse, table.ire):
        print(f"{name}\t{mse:.6g}\t{table.mean_time:.3f}\t{ire:.6g}")
    return 0


def _cmd_simulate(args) -> int:
    if args.model not in _SIM_MODELS:
        raise ConfigError(f"unknown model {args.model!r}")
    theta = np.array([float(v) for v in args.theta.split(",")])
    rng = np.random.default_rng(args.seed)
    model = _SIM_MODELS[args.model]()
    _z, y = model.simulate(theta, args.T, rng)
    np.savetxt(args.out, np.atleast_1d(y), fmt="%.12g")
    print(f"wrote {len(np.atleast_1d(y))} observations to {args.out}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ismcmc")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute one configured run")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("pilot-tune", help="choose the particle count m")
    p.add_argument("--config", required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--anchor", help="comma-separated anchor parameter vector")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_pilot_tune)

    p = sub.add_parser("replicate", help="independent repetitions and IRE table")
    p.add_argument("--config", required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_replicate)

    p = sub.add_parser("simulate", help="simulate observations from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--theta", required=True, help="comma-separated parameter vector")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        code = args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        code = 2
    except IsMcmcError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        code = 3
    if argv is None:
        sys.exit(code)
    return code


if __name__ == "__main__":
    main()
