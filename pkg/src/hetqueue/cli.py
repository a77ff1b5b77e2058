"""Command-line interface.

Exit codes: 0 ok, 1 oracle tolerance exceeded, 2 bad input,
3 an inequality failed, 4 scope guard (too many servers for enumeration).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import closed_form, ctmc, sim
from .model import ConfigError, SystemConfig

EXIT_OK = 0
EXIT_TOLERANCE = 1
EXIT_BAD_INPUT = 2
EXIT_VIOLATION = 3
EXIT_SCOPE = 4

ORACLE_TOLERANCE = 1e-8


class UsageError(Exception):
    """Bad user input; maps to exit code 2."""


def fmt(x) -> str:
    """17 significant digits, enough to round-trip a double."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def warn(message: str) -> None:
    print(f"warning: {message}", file=sys.stderr)


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"could not parse {what}: {text!r}") from None


def _range(text: str) -> tuple[float, float]:
    try:
        a, b = (float(t) for t in text.split(":"))
    except ValueError:
        raise UsageError(f"range must look like a:b, got {text!r}") from None
    if not 0 < a <= b < 1:
        raise UsageError(f"utilization range must satisfy 0 < a <= b < 1, got {text!r}")
    return a, b


def load_config_file(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must be a JSON object")
    return data


def config_from_args(args) -> SystemConfig:
    data = load_config_file(args.config) if args.config else {}
    lam = args.lam if args.lam is not None else data.get("lambda")
    mu = _floats(args.mu, "--mu") if args.mu is not None else data.get("mu")
    if lam is None or mu is None:
        raise UsageError("both an arrival rate (--lambda) and service rates (--mu) are required")
    try:
        return SystemConfig(float(lam), tuple(float(m) for m in mu))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise UsageError(f"bad config values: {exc}") from None


# --- grids -----------------------------------------------------------------


@dataclass(frozen=True)
class GridPoint:
    id: int
    config: SystemConfig


def random_configs(count: int, n: int, rho_range: tuple[float, float], ratio_max: float, seed: int):
    """Random stable configs with log-uniform rates in ``[1, ratio_max]``.

    ``lambda`` is set from a utilization drawn uniformly from ``rho_range``.
    """
    if n < 1:
        raise UsageError("--n must be at least 1")
    if ratio_max < 1:
        raise UsageError("--ratio-max must be >= 1")
    rng = np.random.default_rng(seed)
    for _ in range(count):
        mu = np.exp(rng.uniform(0.0, math.log(ratio_max), n))
        rho = rng.uniform(*rho_range)
        yield SystemConfig(float(rho * mu.sum()), tuple(mu.tolist()))


def grid_from_args(args) -> list[GridPoint]:
    points: list[SystemConfig] = []
    if args.random is not None:
        if args.random < 0:
            raise UsageError("--random must be nonnegative")
        points.extend(
            random_configs(
                args.random,
                args.n if args.n is not None else 3,
                _range(args.rho_range) if args.rho_range else (0.1, 0.9),
                args.ratio_max,
                args.seed,
            )
        )
    else:
        data = load_config_file(args.config) if args.config else {}
        grid = data.get("grid", {}) if isinstance(data.get("grid", {}), dict) else {}
        if args.mu is not None:
            mus = [_floats(args.mu, "--mu")]
        elif "mu" in grid:
            mus = grid["mu"]
        elif "mu" in data:
            mus = [data["mu"]]
        else:
            raise UsageError("a grid needs --mu, a config file, or --random N")
        lams, rhos = _load_levels(args, data, grid)
        for mu in mus:
            mu = [float(m) for m in mu]
            total = math.fsum(mu)
            levels = [(lam, None) for lam in lams] + [(None, r) for r in rhos]
            for lam, rho in levels:
                value = lam if lam is not None else rho * total
                try:
                    points.append(SystemConfig(value, tuple(mu)))
                except ConfigError as exc:
                    warn(f"skipping lambda={fmt(value)} mu={mu}: {exc}")
    return [GridPoint(i, c) for i, c in enumerate(points)]


def _load_levels(args, data: dict, grid: dict) -> tuple[list[float], list[float]]:
    lams: list[float] = []
    rhos: list[float] = []
    if args.lam is not None:
        lams = [args.lam]
    elif args.rho is not None:
        rhos = _floats(args.rho, "--rho")
    elif args.rho_range is not None:
        a, b = _range(args.rho_range)
        steps = args.steps
        if steps < 1:
            raise UsageError("--steps must be at least 1")
        rhos = [a] if steps == 1 else np.linspace(a, b, steps).tolist()
    elif "lambda" in grid or "rho" in grid:
        lams = [float(v) for v in grid.get("lambda", [])]
        rhos = [float(v) for v in grid.get("rho", [])]
    elif "lambda" in data:
        lams = [float(data["lambda"])]
    else:
        raise UsageError("a grid needs --lambda, --rho, or --rho-range")
    return lams, rhos


# --- output ----------------------------------------------------------------


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def dump_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# --- commands --------------------------------------------------------------


def cmd_analyze(args) -> int:
    config = config_from_args(args)
    report = closed_form.analyze(config)
    if args.format == "json":
        text = dump_json(report.to_dict())
    else:
        text = dump_csv(["metric", "value"], sorted(report.flat().items()))
    _emit(text, args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    config = config_from_args(args)
    if config.n > ctmc.MAX_SERVERS:
        print(f"error: oracle enumeration supports at most {ctmc.MAX_SERVERS} servers, "
              f"got {config.n}", file=sys.stderr)
        return EXIT_SCOPE
    dist = closed_form.solve(config)
    exact = closed_form.metrics(dist).flat()
    try:
        approx, generator_residual = ctmc.solve_metrics(config, args.truncation)
    except ctmc.BadTruncation as exc:
        raise UsageError(str(exc)) from None
    approx = approx.flat()
    balance = ctmc.balance_residual(config, dist)
    rows = [(k, exact[k], approx[k], abs(exact[k] - approx[k])) for k in sorted(exact)]
    max_diff = max(r[3] for r in rows)
    ok = max_diff < ORACLE_TOLERANCE
    if args.format == "json":
        text = dump_json({
            "config": config.to_dict(),
            "metrics": [
                {"metric": k, "closed_form": a, "ctmc": b, "abs_diff": d} for k, a, b, d in rows
            ],
            "max_abs_diff": max_diff,
            "balance_residual": balance,
            "generator_residual": generator_residual,
            "tolerance": ORACLE_TOLERANCE,
            "ok": ok,
        })
    else:
        text = dump_csv(["metric", "closed_form", "ctmc", "abs_diff"], rows)
        text += dump_csv(["summary", "value"], [
            ("max_abs_diff", max_diff),
            ("balance_residual", balance),
            ("generator_residual", generator_residual),
        ])
    _emit(text, args.out)
    if not ok:
        print(f"error: closed form and CTMC differ by {max_diff:.3g} "
              f"(tolerance {ORACLE_TOLERANCE:g})", file=sys.stderr)
        return EXIT_TOLERANCE
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = config_from_args(args)
    try:
        sc = sim.SimConfig(config, args.horizon, args.warmup, args.batches, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ref = sim.reference_values(config)
    if args.replications:
        report = sim.replicate(sc, args.replications)
        rows = [(k, ref[k], report.coverage[k]) for k in ref]
        if args.format == "json":
            text = dump_json({
                "config": config.to_dict(),
                "replications": report.replications,
                "coverage": report.coverage,
                "reference": ref,
            })
        else:
            text = dump_csv(["metric", "reference", "coverage"], rows)
        _emit(text, args.out)
        return EXIT_OK
    est = sim.simulate(sc)
    if not est.reliable:
        warn(f"only {est.measured_events} events after warmup; estimates are not meaningful")
    named = est.named()
    rows = [
        (k, e.mean, e.half_width, e.low, e.high, ref[k], e.covers(ref[k]))
        for k, e in named.items()
    ]
    if args.format == "json":
        text = dump_json({
            "config": config.to_dict(),
            "horizon": sc.horizon,
            "warmup_fraction": sc.warmup_fraction,
            "batches": sc.batches,
            "seed": sc.seed,
            "event_count": est.event_count,
            "measured_events": est.measured_events,
            "reliable": est.reliable,
            "metrics": [
                {"metric": k, "mean": m, "half_width": h, "low": lo, "high": hi,
                 "closed_form": r, "covered": c}
                for k, m, h, lo, hi, r, c in rows
            ],
        })
    else:
        text = dump_csv(["metric", "mean", "half_width", "low", "high", "closed_form", "covered"], rows)
    _emit(text, args.out)
    return EXIT_OK


VERIFY_HEADER = [
    "config_id", "lambda", "mu", "fast", "slow", "busy_fast", "busy_slow",
    "busy_margin", "rate_margin", "lower_margin", "upper_margin", "holds",
]


def _points_for(args) -> list[GridPoint]:
    if args.random is not None:
        return grid_from_args(args)
    if args.rho is not None or args.rho_range is not None:
        return grid_from_args(args)
    data = load_config_file(args.config) if args.config else {}
    if "grid" in data:
        return grid_from_args(args)
    return [GridPoint(0, config_from_args(args))]


def cmd_verify(args) -> int:
    points = _points_for(args)
    rows = []
    bad = []
    for p in points:
        for v in closed_form.theorem_check(closed_form.solve(p.config)):
            rows.append((
                p.id, p.config.lam, ";".join(fmt(m) for m in p.config.mu),
                v.fast, v.slow, v.busy_fast, v.busy_slow,
                v.busy_margin, v.rate_margin, v.lower_margin, v.upper_margin, v.holds,
            ))
            if not v.holds:
                bad.append((p, v))
    if args.format == "json":
        text = dump_json({
            "configs": len(points),
            "pairs": len(rows),
            "violations": len(bad),
            "verdicts": [dict(zip(VERIFY_HEADER, r)) for r in rows],
        })
    else:
        text = dump_csv(VERIFY_HEADER, rows)
    _emit(text, args.out)
    for p, v in bad:
        print(f"violation: config {p.id} {json.dumps(p.config.to_dict())} "
              f"pair fast={v.fast} slow={v.slow} margins "
              f"{fmt(v.busy_margin)} {fmt(v.rate_margin)} {fmt(v.lower_margin)}", file=sys.stderr)
    return EXIT_VIOLATION if bad else EXIT_OK


SWEEP_HEADER = [
    "config_id", "lambda", "rho", "server", "mu", "busy", "effective_rate",
    "prob_all_busy", "mean_customers", "mean_sojourn",
]


def cmd_sweep(args) -> int:
    rows = []
    for p in grid_from_args(args):
        r = closed_form.analyze(p.config)
        for s in range(p.config.n):
            rows.append((
                p.id, p.config.lam, p.config.rho, s, p.config.mu[s], r.busy[s],
                r.effective_rate[s], r.prob_all_busy, r.mean_customers, r.mean_sojourn,
            ))
    if args.format == "json":
        text = dump_json([dict(zip(SWEEP_HEADER, r)) for r in rows])
    else:
        text = dump_csv(SWEEP_HEADER, rows)
    _emit(text, args.out)
    return EXIT_OK


# --- parser ----------------------------------------------------------------


def _common(p: argparse.ArgumentParser, default_format: str = "json") -> None:
    p.add_argument("--lambda", dest="lam", type=float, help="arrival rate")
    p.add_argument("--mu", help="comma-separated service rates")
    p.add_argument("--config", help="JSON file with 'lambda' and 'mu'")
    p.add_argument("--format", choices=["json", "csv"], default=default_format)
    p.add_argument("--out", help="output path (default: stdout)")


def _grid(p: argparse.ArgumentParser) -> None:
    p.add_argument("--random", type=int, help="number of random configs")
    p.add_argument("--n", type=int, help="servers per random config")
    p.add_argument("--rho-range", help="utilization range a:b")
    p.add_argument("--rho", help="comma-separated utilizations")
    p.add_argument("--steps", type=int, default=9, help="points across --rho-range")
    p.add_argument("--ratio-max", type=float, default=10.0, help="max fast/slow rate ratio")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetqueue",
        description="Steady-state analysis of M|M|n queues with heterogeneous "
                    "servers and random routing among idle servers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="closed-form metrics")
    _common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("oracle", help="compare closed form against the CTMC solution")
    _common(p)
    p.add_argument("--truncation", type=int, help="tail depth K")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("simulate", help="discrete-event simulation with batch-means CIs")
    _common(p)
    p.add_argument("--horizon", type=float, default=1e6)
    p.add_argument("--warmup", type=float, default=0.1, help="warmup fraction of the horizon")
    p.add_argument("--batches", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replications", type=int, help="report CI coverage over this many runs")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="check the slow-server inequalities")
    _common(p, "csv")
    _grid(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="per-server metrics over a grid, long format")
    _common(p, "csv")
    _grid(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_BAD_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except ctmc.TooManyServers as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCOPE


if __name__ == "__main__":
    sys.exit(main())
