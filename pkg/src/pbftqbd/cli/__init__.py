"""Command-line front end: ``pbftqbd {eval,sweep,simulate,oracle,presets}``.

Exit codes: 0 success, 1 configuration or validation error, 2 every point
failed, 3 numerical failure (iteration limit, singular system, truncation).
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from pathlib import Path

from ..errors import ParameterError, SimConfigError
from ..model import build_params
from ..simulator import SimConfig
from .svg import render_svg
from .sweep import (
    FORMATS,
    MODES,
    PARAM_NAMES,
    PointOptions,
    SweepConfig,
    check_trends,
    exit_status,
    parse_values,
    presets,
    render,
    run_point,
    run_sweep,
)

log = logging.getLogger("pbftqbd")

EXIT_OK, EXIT_CONFIG, EXIT_ALL_FAILED, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(Exception):
    pass


def _model_flags(p: argparse.ArgumentParser, required: bool) -> None:
    p.add_argument("--lambda", dest="lam", type=float, required=required, help="arrival rate")
    p.add_argument("--mu", type=float, required=required, help="per-node verification rate")
    p.add_argument("-f", "--byzantine", dest="f", type=int, required=required,
                   help="maximum number of Byzantine nodes (N = 3f + 1)")
    p.add_argument("--reward", dest="c", type=float, default=None, help="block reward c (default 12.5)")


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol", type=float, default=None, help="rate-matrix tolerance (default 1e-12)")
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--level-cap", type=int, default=None, help="oracle truncation level")


def _sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--warmup", type=float, default=None)
    p.add_argument("--batches", type=int, default=None)


def _output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, default=None, help="output file (default stdout)")
    p.add_argument("--format", choices=FORMATS, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pbftqbd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("eval", help="evaluate a single parameter point")
    _model_flags(ev, required=True)
    _solver_flags(ev)
    _sim_flags(ev)
    _output_flags(ev)
    ev.add_argument("--mode", choices=MODES, default="analytic")
    ev.add_argument("--allow-large-sim", action="store_true",
                    help="in compare mode, simulate points with f above the oracle limit")

    sw = sub.add_parser("sweep", help="run a preset or a config-file sweep")
    src = sw.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(presets()))
    src.add_argument("--config", type=Path, help="INI sweep description")
    _model_flags(sw, required=False)
    _solver_flags(sw)
    _sim_flags(sw)
    _output_flags(sw)
    sw.add_argument("--mode", choices=MODES, default=None)
    sw.add_argument("--plot", type=Path, default=None, help="write an SVG chart here")
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--allow-large-sim", action="store_true")
    sw.add_argument("--trends", action="store_true", help="print the figure trend report to stderr")

    sm = sub.add_parser("simulate", help="simulate a single parameter point")
    _model_flags(sm, required=True)
    _sim_flags(sm)
    _output_flags(sm)

    oc = sub.add_parser("oracle", help="truncated-chain solve of a single point")
    _model_flags(oc, required=True)
    oc.add_argument("--level-cap", type=int, default=None)
    _output_flags(oc)

    sub.add_parser("presets", help="list the built-in sweeps")
    return parser


def _sim_config(args, base: SimConfig | None = None) -> SimConfig:
    horizon = args.horizon if args.horizon is not None else (base.horizon if base else 1e6)
    warmup = args.warmup if args.warmup is not None else (
        base.warmup if base and args.horizon is None else None)
    seed = args.seed if args.seed is not None else (base.seed if base else SimConfig.seed)
    batches = args.batches if args.batches is not None else (base.batches if base else 20)
    return SimConfig(horizon=horizon, warmup=warmup, seed=seed, batches=batches)


def _options(args, base: PointOptions | None = None) -> PointOptions:
    opts = base or PointOptions()
    if getattr(args, "tol", None) is not None:
        opts.tol = args.tol
    if getattr(args, "max_iter", None) is not None:
        opts.max_iter = args.max_iter
    if getattr(args, "level_cap", None) is not None:
        opts.level_cap = args.level_cap
    if getattr(args, "allow_large_sim", False):
        opts.allow_large_sim = True
    return opts


def load_config(path: Path) -> SweepConfig:
    """Read an INI file with [sweep], [fixed], [swept] and optional [sim] sections."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path}")
    try:
        fixed = {k: float(v) for k, v in parser["fixed"].items()} if parser.has_section("fixed") else {}
        if "f" in fixed:
            if fixed["f"] != int(fixed["f"]):
                raise ValueError("f must be an integer")
            fixed["f"] = int(fixed["f"])
        swept = {k: parse_values(v, k) for k, v in parser["swept"].items()} if parser.has_section("swept") else {}
        main = parser["sweep"] if parser.has_section("sweep") else {}
        sim = None
        if parser.has_section("sim"):
            s = parser["sim"]
            sim = SimConfig(
                horizon=float(s.get("horizon", 1e6)),
                warmup=float(s["warmup"]) if "warmup" in s else None,
                seed=int(s.get("seed", SimConfig.seed)),
                batches=int(s.get("batches", 20)),
            )
        options = PointOptions()
        if "tol" in main:
            options.tol = float(main["tol"])
        if "max_iter" in main:
            options.max_iter = int(main["max_iter"])
        if "level_cap" in main:
            options.level_cap = int(main["level_cap"])
        panels = tuple(p.strip() for p in main.get("panels", "e_k, e_m").split(",") if p.strip())
        return SweepConfig(
            fixed=fixed,
            swept=swept,
            mode=main.get("mode", "analytic"),
            output_format=main.get("format", "csv"),
            plot=main.get("plot"),
            sim=sim,
            name=main.get("name", path.stem),
            panels=panels,
            options=options,
        )
    except (ValueError, KeyError, SimConfigError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _apply_overrides(cfg: SweepConfig, args) -> SweepConfig:
    for name, attr in zip(PARAM_NAMES, ("lam", "mu", "f", "c")):
        value = getattr(args, attr)
        if value is not None:
            cfg.swept.pop(name, None)
            cfg.fixed[name] = value
    if args.mode:
        cfg.mode = args.mode
    if args.format:
        cfg.output_format = args.format
    if args.plot:
        cfg.plot = str(args.plot)
    if any(getattr(args, k) is not None for k in ("seed", "horizon", "warmup", "batches")) or (
        cfg.mode in ("simulate", "compare") and cfg.sim is None
    ):
        cfg.sim = _sim_config(args, cfg.sim)
    cfg.options = _options(args, cfg.options)
    return cfg


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, encoding="utf-8")


def _single(args, mode: str) -> int:
    c = args.c if args.c is not None else 12.5
    params = build_params(args.lam, args.mu, args.f, c)
    sim = _sim_config(args) if mode in ("simulate", "compare") else None
    options = _options(args)
    row = run_point(params, mode, sim, options)
    _emit(render([row], mode, args.format or "csv"), args.out)
    return exit_status([row])


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "presets":
            for name, cfg in presets().items():
                print(f"{name}\t{cfg.description}")
            return EXIT_OK
        if args.command == "eval":
            return _single(args, args.mode)
        if args.command == "simulate":
            return _single(args, "simulate")
        if args.command == "oracle":
            return _single(args, "oracle")

        if args.preset:
            cfg = presets()[args.preset]
        else:
            cfg = load_config(args.config)
        cfg = _apply_overrides(cfg, args)
        cfg.validate()
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        rows = run_sweep(cfg, jobs=args.jobs)
        _emit(render(rows, cfg.mode, cfg.output_format), args.out)
        if cfg.plot:
            Path(cfg.plot).write_text(
                render_svg(rows, cfg.x_name, cfg.curve_name, cfg.panels, title=cfg.name),
                encoding="utf-8",
            )
        if args.trends and cfg.name in presets() and cfg.mode in ("analytic", "compare"):
            for trend in check_trends(cfg.name, rows):
                print(trend.line(), file=sys.stderr)
        return exit_status(rows)
    except (ConfigError, ParameterError, SimConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        log.exception("internal failure: %s", exc)
        return EXIT_NUMERIC
