"""Command-line driver.

Exit codes: 0 success, 1 other failure, 2 configuration error,
3 infeasible identification, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .config import PRESETS, RunConfig, config_from_dict, load_config
from .data import read_csv, write_csv
from .errors import ConfigError, InfeasibleError, NumericalError, SysIdError
from .gradest import GradEstConfig, estimate_gradients
from .runner import StageError, run

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 1, 2, 3, 4

log = logging.getLogger("sobolev_sysid")


def _parse_horizons(text: str) -> tuple[int, ...]:
    try:
        ks = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"--horizons expects comma-separated integers, got {text!r}") from exc
    if not ks:
        raise ConfigError("--horizons is empty")
    return ks


def resolve_config(args) -> RunConfig:
    """Preset, then config file, then command-line overrides."""
    if args.preset is None and args.config is None:
        raise ConfigError("give --preset or --config")
    base = PRESETS[args.preset]() if args.preset else None
    if args.config:
        cfg = load_config(args.config) if base is None else config_from_dict(
            _yaml_mapping(args.config), base)
    else:
        cfg = base
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.std is not None or args.horizons is not None:
        if cfg.experiment != "chua":
            raise ConfigError("--std and --horizons apply to the chua experiment only")
        chua = cfg.chua
        bounds = cfg.bounds
        if args.std is not None:
            chua = dataclasses.replace(chua, disturbance_std=args.std)
        if args.horizons is not None:
            ks = _parse_horizons(args.horizons)
            chua = dataclasses.replace(chua, horizons=ks)
            if bounds.horizon is not None and bounds.horizon not in ks:
                bounds = dataclasses.replace(bounds, horizon=ks[0])
        cfg = cfg.replace(chua=chua, bounds=bounds)
    return cfg


def _yaml_mapping(path) -> dict:
    import yaml

    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: cannot read config ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    if data.pop("preset", None) not in (None,):
        raise ConfigError("use either --preset or a 'preset' key in the config file, not both")
    return data


def _exit_code(exc: BaseException) -> int:
    cause = exc.cause if isinstance(exc, StageError) else exc
    if isinstance(cause, ConfigError):
        return EXIT_CONFIG
    if isinstance(cause, InfeasibleError):
        return EXIT_INFEASIBLE
    if isinstance(cause, (NumericalError, ArithmeticError)):
        return EXIT_NUMERICAL
    return EXIT_OTHER


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    out = Path(args.out) if args.out else Path("runs") / f"{args.preset or Path(args.config).stem}-seed{cfg.seed}"
    result = run(cfg, out)
    print(f"wrote {len(result.files)} files to {out}")
    return EXIT_OK


def cmd_estimate_gradients(args) -> int:
    try:
        config = GradEstConfig(radius=args.radius, radius_fraction=args.radius_fraction,
                               min_neighbors=args.min_neighbors, smoothing=args.smoothing)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    ds = read_csv(args.input)
    write_csv(estimate_gradients(ds.without_derivatives(), config), args.output)
    print(f"wrote {ds.L} gradient samples to {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sobolev-sysid", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v for stage progress, -vv for solver detail")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment pipeline")
    r.add_argument("--preset", choices=sorted(PRESETS))
    r.add_argument("--config", help="YAML run config (see docs/config.md)")
    r.add_argument("--seed", type=int)
    r.add_argument("--std", type=float, help="Chua disturbance standard deviation")
    r.add_argument("--horizons", help="comma-separated prediction horizons, e.g. 3,5,7")
    r.add_argument("--out", help="output directory")
    r.set_defaults(func=cmd_run)

    g = sub.add_parser("estimate-gradients", help="fill derivative columns of a dataset CSV")
    g.add_argument("input")
    g.add_argument("output")
    g.add_argument("--radius", type=float)
    g.add_argument("--radius-fraction", type=float, default=0.05)
    g.add_argument("--min-neighbors", type=int)
    g.add_argument("--smoothing", type=float, default=0.0)
    g.set_defaults(func=cmd_estimate_gradients)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SysIdError, ValueError, ArithmeticError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
