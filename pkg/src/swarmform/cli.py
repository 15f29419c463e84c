"""Command-line front end.

Exit codes: 0 success, 1 run incomplete at max_time, 2 parse/validation
error, 3 infeasible assignment, 4 no feasible trajectory, 5 internal
invariant breach.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import artifacts
from .errors import ParseError, ValidationError
from .scenario import load_scenario
from .simulator import run

EXIT_CODES = {"ok": 0, "timeout": 1, "infeasible_assignment": 3, "no_feasible_trajectory": 4,
              "internal_error": 5}
EXIT_INVALID = 2


def parse_horizon(text: str) -> float:
    text = text.strip()
    if text.lower() in ("inf", "infinity", "∞"):
        return math.inf
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"horizon must be a number or 'inf', got {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("horizon must be positive")
    return value


def parse_sweep(text: str) -> list[float]:
    return [parse_horizon(part) for part in text.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swarmform", description="Decentralized formation simulator")
    p.add_argument("--scenario", required=True, type=Path, help="scenario file")
    p.add_argument("--horizon", type=parse_horizon, default=None, help="sensing horizon h in m, or 'inf'")
    p.add_argument("--dt", type=float, default=None, help="tick length in s")
    p.add_argument("--seed", type=int, default=None, help="seed for random agent placement")
    p.add_argument("--out", type=Path, default=Path("swarmform_out"), help="output directory")
    p.add_argument("--sweep", type=str, default=None, help="comma-separated horizons, e.g. 'inf,1.3,0.75'")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run_command(scenario, horizon=None, dt=None, seed=None, out_dir="swarmform_out") -> int:
    try:
        cfg = load_scenario(scenario).with_overrides(horizon=horizon, dt=dt, seed=seed)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    result = run(cfg)
    artifacts.write_run(result, cfg, out_dir)
    sys.stdout.write(artifacts.metrics_text(result))
    if not result.ok:
        print(f"run stopped: {result.status}: {result.diagnostic}", file=sys.stderr)
    return EXIT_CODES[result.status]


def sweep_command(scenario, horizons, dt=None, seed=None, out_dir="swarmform_out") -> tuple[int, str]:
    """Run each horizon with identical seed and initial states; returns (exit code, table)."""
    try:
        base = load_scenario(scenario).with_overrides(dt=dt, seed=seed)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID, ""
    rows = []
    for k, h in enumerate(horizons):
        try:
            cfg = base.with_overrides(horizon=h)
        except ValidationError as exc:
            rows.append(artifacts.sweep_row(h, None, f"invalid: {exc}"))
            continue
        result = run(cfg)
        artifacts.write_run(result, cfg, Path(out_dir) / f"run{k}_h{artifacts.fmt(h)}")
        rows.append(artifacts.sweep_row(h, result))
    table = artifacts.sweep_table(rows)
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    (Path(out_dir) / "sweep.txt").write_text(table, encoding="latin-1")
    return 0, table


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.sweep is not None:
        try:
            horizons = parse_sweep(args.sweep)
        except argparse.ArgumentTypeError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INVALID
        code, table = sweep_command(args.scenario, horizons, args.dt, args.seed, args.out)
        sys.stdout.write(table)
        return code
    return run_command(args.scenario, args.horizon, args.dt, args.seed, args.out)


if __name__ == "__main__":
    sys.exit(main())
