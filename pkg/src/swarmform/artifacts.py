"""Run outputs: trajectory table, metrics record, event log, config echo, sweep table."""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

from .scenario import ScenarioConfig, dump_scenario
from .simulator import RunResult

TRAJECTORY_COLUMNS = ("t", "agent_id", "x", "y", "vx", "vy", "ux", "uy", "goal")
METRIC_KEYS = ("status", "min_separation", "total_energy", "t_f", "total_bans",
               "assignment_rounds", "replans", "hold_energy", "diagnostic")
SWEEP_COLUMNS = ("h", "min_separation", "energy", "t_f", "total_bans", "status")
FILES = ("trajectory.csv", "metrics.txt", "events.txt", "scenario.txt")


def fmt(value) -> str:
    """Deterministic text for a scalar, tuple or pair list."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (tuple, list)):
        return " ".join(":".join(fmt(x) for x in v) if isinstance(v, tuple) else fmt(v) for v in value)
    return str(value)


def trajectory_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAJECTORY_COLUMNS)
    for row in rows:
        writer.writerow([fmt(x) for x in row])
    return buf.getvalue()


def metrics_text(result: RunResult) -> str:
    record = {"status": result.status, **result.metrics.as_record(), "diagnostic": result.diagnostic}
    return "".join(f"{k} = {fmt(record[k])}\n" for k in METRIC_KEYS)


def events_text(events) -> str:
    blocks = []
    for ev in events:
        lines = ["[event]"] + [f"{k} = {fmt(v)}" for k, v in ev.items()]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def write_run(result: RunResult, cfg: ScenarioConfig, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    texts = (trajectory_csv(result.rows), metrics_text(result), events_text(result.events),
             dump_scenario(cfg))
    paths = []
    for name, text in zip(FILES, texts):
        path = out / name
        path.write_text(text, encoding="latin-1")
        paths.append(path)
    return paths


def sweep_row(h, result: RunResult | None, status: str | None = None) -> tuple:
    if result is None:
        return (h, math.nan, math.nan, math.nan, -1, status or "error")
    m = result.metrics
    return (h, m.min_separation, m.total_energy, m.t_f, m.total_bans, result.status)


def sweep_table(rows) -> str:
    """Fixed-width table with one row per horizon."""
    header = f"{'h':>10} {'min_separation':>16} {'energy':>14} {'t_f':>10} {'total_bans':>10} status"
    lines = [header]
    for h, sep, energy, tf, bans, status in rows:
        lines.append(f"{fmt(h):>10} {sep:>16.6g} {energy:>14.6g} {tf:>10.4g} {bans:>10d} {status}")
    return "\n".join(lines) + "\n"
