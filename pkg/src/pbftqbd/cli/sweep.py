"""Parameter sweeps, per-point dispatch, row serialization and presets."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from ..errors import (
    IterationLimitError,
    ParameterError,
    SimConfigError,
    SingularSystemError,
    StabilityError,
    TruncationError,
)
from ..metrics import evaluate_all
from ..model import ModelParams, build_params, utilization
from ..oracle import oracle_metrics, truncated_stationary
from ..simulator import SimConfig, simulate
from ..solver import DEFAULT_MAX_ITER, DEFAULT_TOL

PARAM_NAMES = ("lambda", "mu", "f", "c")
MODES = ("analytic", "simulate", "oracle", "compare")
FORMATS = ("csv", "json")
# the oracle is only run for f up to this value in compare mode
ORACLE_MAX_F = 10

BASE_COLUMNS = (
    "lambda", "mu", "f", "n", "c", "rho", "stable",
    "e_k", "e_m", "gamma", "upsilon", "gamma_minus_lambda", "error_code",
)
ORACLE_COLUMNS = ("oracle_e_k", "oracle_e_m", "oracle_gamma", "oracle_upsilon", "oracle_tail_mass")
SIM_COLUMNS = (
    "sim_e_k", "sim_e_m", "sim_gamma",
    "sim_e_k_hw", "sim_e_m_hw", "sim_gamma_hw", "sim_events", "sim_seed",
)

NUMERICAL_ERRORS = ("ITERATION_LIMIT", "SINGULAR", "TRUNCATION")


def columns(mode: str) -> tuple[str, ...]:
    if mode == "analytic":
        return BASE_COLUMNS
    if mode == "oracle":
        return BASE_COLUMNS + ("oracle_tail_mass",)
    if mode == "simulate":
        return BASE_COLUMNS + SIM_COLUMNS
    if mode == "compare":
        return BASE_COLUMNS + ORACLE_COLUMNS + SIM_COLUMNS
    raise ValueError(f"unknown mode {mode!r}")


def error_code(exc: BaseException) -> str:
    if isinstance(exc, StabilityError):
        return "UNSTABLE"
    if isinstance(exc, IterationLimitError):
        return "ITERATION_LIMIT"
    if isinstance(exc, SingularSystemError):
        return "SINGULAR"
    if isinstance(exc, TruncationError):
        return "TRUNCATION"
    if isinstance(exc, (ParameterError, SimConfigError)):
        return "INVALID"
    return "INTERNAL"


@dataclass
class PointOptions:
    """Per-point solver knobs carried through a sweep."""

    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    level_cap: int | None = None
    allow_large_sim: bool = False


def _fill_metrics(row: dict, m, prefix: str = "") -> None:
    row[prefix + "e_k"] = m.e_k
    row[prefix + "e_m"] = m.e_m
    row[prefix + "gamma"] = m.gamma
    row[prefix + "upsilon"] = m.upsilon
    if not prefix:
        row["gamma_minus_lambda"] = m.gamma_minus_lambda


def _fill_sim(row: dict, est) -> None:
    row["sim_e_k"] = est.e_k_mean
    row["sim_e_m"] = est.e_m_mean
    row["sim_gamma"] = est.gamma_mean
    row["sim_e_k_hw"] = est.half_widths["e_k"]
    row["sim_e_m_hw"] = est.half_widths["e_m"]
    row["sim_gamma_hw"] = est.half_widths["gamma"]
    row["sim_events"] = est.events


def run_point(
    params: ModelParams,
    mode: str = "analytic",
    sim: SimConfig | None = None,
    options: PointOptions | None = None,
) -> dict:
    """Evaluate one grid point; failures are recorded in ``error_code``."""
    options = options or PointOptions()
    row: dict = {k: None for k in columns(mode)}
    rho = utilization(params)
    row.update(
        {"lambda": params.lam, "mu": params.mu, "f": params.f, "n": params.n,
         "c": params.c, "rho": rho, "stable": rho < 1.0}
    )
    try:
        if mode in ("analytic", "compare"):
            _fill_metrics(row, evaluate_all(params, tol=options.tol, max_iter=options.max_iter))
        elif mode == "oracle":
            sol = truncated_stationary(params, options.level_cap)
            _fill_metrics(row, oracle_metrics(sol, params))
            row["oracle_tail_mass"] = sol.tail_mass_estimate
        elif mode == "simulate":
            sim = sim or SimConfig()
            row["sim_seed"] = int(sim.seed)
            _fill_sim(row, simulate(params, sim))
    except Exception as exc:  # noqa: BLE001 - every failure becomes a row code
        row["error_code"] = error_code(exc)
        return row

    if mode == "compare":
        try:
            if params.f <= ORACLE_MAX_F:
                sol = truncated_stationary(params, options.level_cap)
                _fill_metrics(row, oracle_metrics(sol, params), prefix="oracle_")
                row["oracle_tail_mass"] = sol.tail_mass_estimate
            elif options.allow_large_sim:
                sim = sim or SimConfig()
                row["sim_seed"] = int(sim.seed)
                _fill_sim(row, simulate(params, sim))
        except Exception as exc:  # noqa: BLE001
            row["error_code"] = "CHECK_" + error_code(exc)
    return row


def _linspace(start: float, stop: float, steps: int) -> list[float]:
    return [float(x) for x in np.linspace(start, stop, int(steps))]


def parse_values(spec: str | Sequence, name: str) -> list:
    """Parse ``start:stop:steps`` or a comma separated list."""
    if isinstance(spec, (list, tuple)):
        vals = list(spec)
    else:
        text = str(spec).strip()
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ValueError(f"{name}: range must be start:stop:steps, got {text!r}")
            start, stop, steps = float(parts[0]), float(parts[1]), int(parts[2])
            if steps < 1:
                raise ValueError(f"{name}: steps must be >= 1")
            vals = _linspace(start, stop, steps)
        else:
            vals = [float(v) for v in text.split(",") if v.strip()]
    if not vals:
        raise ValueError(f"{name}: no values")
    if name == "f":
        out = []
        for v in vals:
            if float(v) != int(float(v)):
                raise ValueError(f"f must be integer, got {v!r}")
            out.append(int(float(v)))
        return out
    return [float(v) for v in vals]


@dataclass
class SweepConfig:
    """A grid over at most two parameters.

    The first swept parameter is the x-axis; the second (if any) selects
    the curve.  Rows are emitted curve by curve, x-axis innermost.
    """

    fixed: dict[str, float]
    swept: dict[str, list]
    mode: str = "analytic"
    output_format: str = "csv"
    plot: str | None = None
    sim: SimConfig | None = None
    name: str = ""
    description: str = ""
    panels: tuple[str, ...] = ("e_k", "e_m")
    options: PointOptions = field(default_factory=PointOptions)

    def validate(self) -> None:
        overlap = set(self.fixed) & set(self.swept)
        if overlap:
            raise ValueError(f"parameters both fixed and swept: {sorted(overlap)}")
        unknown = (set(self.fixed) | set(self.swept)) - set(PARAM_NAMES)
        if unknown:
            raise ValueError(f"unknown parameters: {sorted(unknown)}")
        missing = set(PARAM_NAMES) - set(self.fixed) - set(self.swept)
        if missing:
            raise ValueError(f"missing parameters: {sorted(missing)}")
        if not 1 <= len(self.swept) <= 2:
            raise ValueError("sweep one or two parameters")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.output_format not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}")
        for name, vals in self.swept.items():
            if not vals:
                raise ValueError(f"{name}: empty sweep")
        if "f" in self.fixed and float(self.fixed["f"]) != int(self.fixed["f"]):
            raise ValueError("f must be an integer")

    @property
    def x_name(self) -> str:
        return next(iter(self.swept))

    @property
    def curve_name(self) -> str | None:
        names = list(self.swept)
        return names[1] if len(names) > 1 else None

    def grid(self) -> list[dict[str, float]]:
        xs = self.swept[self.x_name]
        curves = self.swept[self.curve_name] if self.curve_name else [None]
        points = []
        for cv in curves:
            for x in xs:
                p = dict(self.fixed)
                p[self.x_name] = x
                if self.curve_name:
                    p[self.curve_name] = cv
                points.append(p)
        return points


def point_seed(base: int, index: int) -> int:
    """Deterministic per-point 64-bit seed derived from the sweep seed."""
    return int(np.random.SeedSequence([int(base), index]).generate_state(1, np.uint64)[0])


def _evaluate(args) -> dict:
    point, mode, sim, options = args
    try:
        params = build_params(point["lambda"], point["mu"], int(point["f"]), point["c"])
    except ParameterError:
        row = {k: None for k in columns(mode)}
        row.update({"lambda": point["lambda"], "mu": point["mu"], "f": point["f"],
                    "c": point["c"], "error_code": "INVALID"})
        return row
    return run_point(params, mode, sim, options)


def run_sweep(config: SweepConfig, jobs: int = 1) -> list[dict]:
    """Evaluate the full grid; rows come back in grid order regardless of ``jobs``."""
    config.validate()
    tasks = []
    for i, point in enumerate(config.grid()):
        sim = config.sim
        if config.mode in ("simulate", "compare"):
            sim = sim or SimConfig()
            sim = replace(sim, seed=point_seed(sim.seed, i))
        tasks.append((point, config.mode, sim, config.options))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_evaluate, tasks))
    return [_evaluate(t) for t in tasks]


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    return str(value)


def to_csv(rows: Iterable[dict], mode: str) -> str:
    cols = columns(mode)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in cols])
    return buf.getvalue()


def _json_value(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return None if not math.isfinite(v) else v
    return value


def to_json(rows: Iterable[dict], mode: str) -> str:
    cols = columns(mode)
    payload = [{c: _json_value(row.get(c)) for c in cols} for row in rows]
    return json.dumps({"columns": list(cols), "rows": payload}, indent=1) + "\n"


def render(rows: list[dict], mode: str, fmt: str) -> str:
    return to_csv(rows, mode) if fmt == "csv" else to_json(rows, mode)


def exit_status(rows: list[dict]) -> int:
    """3 on any numerical failure, else 2 if every point failed, else 0."""
    codes = [r.get("error_code") for r in rows]
    if any(c and c.removeprefix("CHECK_") in NUMERICAL_ERRORS for c in codes):
        return 3
    if rows and all(c and not c.startswith("CHECK_") for c in codes):
        return 2
    return 0


# -- presets -----------------------------------------------------------------

MU_GRID = _linspace(3.0, 9.0, 13)
LAMBDA_GRID = _linspace(1.0, 3.0, 11)
F_VALUES = [50, 100, 320]
REWARD = 12.5


def presets() -> dict[str, SweepConfig]:
    group_one = "lambda=1, c=12.5, mu on 13 points of [3, 9], f in {50, 100, 320}"
    group_two = "mu=9, c=12.5, lambda on 11 points of [1, 3], f in {50, 100, 320}"
    return {
        "fig3": SweepConfig(
            fixed={"lambda": 1.0, "c": REWARD}, swept={"mu": MU_GRID, "f": F_VALUES},
            name="fig3", description=f"E[K], E[M] vs mu ({group_one})", panels=("e_k", "e_m"),
        ),
        "fig4": SweepConfig(
            fixed={"lambda": 1.0, "c": REWARD}, swept={"mu": MU_GRID, "f": F_VALUES},
            name="fig4", description=f"gamma, Upsilon vs mu ({group_one})",
            panels=("gamma", "upsilon"),
        ),
        "fig5": SweepConfig(
            fixed={"mu": 9.0, "c": REWARD}, swept={"lambda": LAMBDA_GRID, "f": F_VALUES},
            name="fig5", description=f"E[K], E[M] vs lambda ({group_two})", panels=("e_k", "e_m"),
        ),
        "fig6": SweepConfig(
            fixed={"mu": 9.0, "c": REWARD}, swept={"lambda": LAMBDA_GRID, "f": F_VALUES},
            name="fig6", description=f"gamma, Upsilon vs lambda ({group_two})",
            panels=("gamma", "upsilon"),
        ),
    }


def max_preset_rho() -> float:
    worst = 0.0
    for cfg in presets().values():
        for p in cfg.grid():
            params = build_params(p["lambda"], p["mu"], int(p["f"]), p["c"])
            worst = max(worst, utilization(params))
    return worst


# -- trend checks ------------------------------------------------------------


@dataclass
class Trend:
    name: str
    required: bool
    holds: bool
    offending: list[tuple] = field(default_factory=list)

    def line(self) -> str:
        tag = "PASS" if self.holds else ("FAIL" if self.required else "NOTE")
        text = f"[{tag}] {self.name}"
        if self.offending:
            text += f" offending={self.offending[:5]}"
        return text


def _curves(rows: list[dict], x: str, curve: str) -> dict:
    out: dict = {}
    for r in rows:
        out.setdefault(r[curve], []).append(r)
    for v in out.values():
        v.sort(key=lambda r: r[x])
    return out


def _along(rows, x, curve, metric, direction, name, required) -> Trend:
    bad = []
    for cv, pts in _curves(rows, x, curve).items():
        for a, b in zip(pts, pts[1:]):
            if a[metric] is None or b[metric] is None:
                bad.append((curve, cv, x, b[x], "missing"))
            elif direction > 0 and b[metric] < a[metric]:
                bad.append((curve, cv, x, b[x], a[metric], b[metric]))
            elif direction < 0 and b[metric] > a[metric]:
                bad.append((curve, cv, x, b[x], a[metric], b[metric]))
    return Trend(name, required, not bad, bad)


def _across(rows, x, curve, metric, direction, name, required, strict=False) -> Trend:
    bad = []
    by_x: dict = {}
    for r in rows:
        by_x.setdefault(r[x], []).append(r)
    for xv, pts in by_x.items():
        pts = sorted(pts, key=lambda r: r[curve])
        for a, b in zip(pts, pts[1:]):
            if a[metric] is None or b[metric] is None:
                bad.append((x, xv, "missing"))
                continue
            d = (b[metric] - a[metric]) * direction
            if d < 0 or (strict and d == 0):
                bad.append((x, xv, curve, a[curve], b[curve], a[metric], b[metric]))
    return Trend(name, required, not bad, bad)


def check_trends(name: str, rows: list[dict]) -> list[Trend]:
    """The monotone trends stated for each figure; ``required=False`` ones are only reported."""
    if name in ("fig3", "fig4"):
        x = "mu"
    elif name in ("fig5", "fig6"):
        x = "lambda"
    else:
        raise ValueError(f"no trends for {name!r}")
    if name == "fig3":
        return [
            _along(rows, x, "f", "e_k", -1, "E[K] nonincreasing in mu", True),
            _along(rows, x, "f", "e_m", -1, "E[M] nonincreasing in mu", True),
            _across(rows, x, "f", "e_m", +1, "E[M] nondecreasing in f", True),
            _across(rows, x, "f", "e_k", -1, "E[K] nonincreasing in f", False),
        ]
    if name == "fig4":
        return [
            _across(rows, x, "f", "upsilon", -1, "Upsilon strictly decreasing in f", True, strict=True),
            _along(rows, x, "f", "gamma", +1, "gamma nondecreasing in mu", False),
            _across(rows, x, "f", "gamma", +1, "gamma nondecreasing in f", False),
        ]
    if name == "fig5":
        return [
            _along(rows, x, "f", "e_k", +1, "E[K] nondecreasing in lambda", True),
            _along(rows, x, "f", "e_m", +1, "E[M] nondecreasing in lambda", True),
            _across(rows, x, "f", "e_m", +1, "E[M] nondecreasing in f", False),
            _across(rows, x, "f", "e_k", -1, "E[K] nonincreasing in f", False),
        ]
    return [
        _along(rows, x, "f", "gamma", +1, "gamma nondecreasing in lambda", True),
        _across(rows, x, "f", "upsilon", -1, "Upsilon strictly decreasing in f", True, strict=True),
        _across(rows, x, "f", "gamma", +1, "gamma nondecreasing in f", False),
    ]
