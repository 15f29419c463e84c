"""Scenario files: a small sectioned text format.

::

    # comments start with '#'
    [scenario]
    R = 0.1
    h = inf
    T = 10
    [agents]
    # id x y vx vy
    0 0.0 -2.0 0 0
    [goals]
    # index bx by [fvx fvy [ax ay freq]]
    0 0.0 1.0 0.15 0.35

Keys in ``[scenario]`` (defaults in brackets): ``R``, ``h`` [inf], ``T``,
``t0`` [0], ``initial_tf`` [t0 + T], ``dt`` [0.01], ``min_time`` [20],
``max_time`` [60], ``seed`` [0], ``v_min`` [0], ``v_max`` [inf], ``u_min``
[0], ``u_max`` [inf], ``N`` (optional count check), ``spawn_box``
(``xmin ymin xmax ymax``; places ``N`` agents at rest when ``[agents]`` is
empty).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dynamics import AgentState, Bounds
from .errors import ParseError, ValidationError
from .goals import GoalMotion, min_goal_separation

SCENARIO_KEYS = ("N", "R", "h", "T", "t0", "initial_tf", "dt", "min_time", "max_time", "seed",
                 "v_min", "v_max", "u_min", "u_max", "spawn_box")
_REQUIRED = ("R", "T")


@dataclass(frozen=True)
class ScenarioConfig:
    R: float
    h: float
    T: float
    agents: tuple  # ((id, AgentState), ...) sorted by id
    goals: tuple  # GoalMotion sorted by index
    t0: float = 0.0
    initial_tf: float = None
    dt: float = 0.01
    min_time: float = 20.0
    max_time: float = 60.0
    seed: int = 0
    bounds: Bounds = field(default_factory=Bounds)
    spawn_box: tuple = None

    def __post_init__(self):
        if self.initial_tf is None:
            object.__setattr__(self, "initial_tf", self.t0 + self.T)

    @property
    def N(self):
        return len(self.agents)

    @property
    def M(self):
        return len(self.goals)

    def agent_states(self) -> dict:
        return dict(self.agents)

    def goal_map(self) -> dict:
        return {g.goal_index: g for g in self.goals}

    def with_overrides(self, horizon=None, dt=None, seed=None):
        cfg = self
        if horizon is not None:
            cfg = replace(cfg, h=float(horizon))
        if dt is not None:
            cfg = replace(cfg, dt=float(dt))
        if seed is not None and seed != cfg.seed:
            cfg = replace(cfg, seed=int(seed))
            if cfg.spawn_box is not None:
                cfg = replace(cfg, agents=spawn_agents(cfg.N, cfg.spawn_box, cfg.R, cfg.seed))
        validate(cfg)
        return cfg


def _number(text, line, name):
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"expected a number, got {text!r}", line, name) from None


def _integer(text, line, name):
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"expected an integer, got {text!r}", line, name) from None


def spawn_agents(n, box, R, seed, min_gap_factor=3.0, max_tries=100_000):
    """Place ``n`` agents at rest in ``box`` at least ``min_gap_factor * 2R`` apart."""
    xmin, ymin, xmax, ymax = box
    rng = np.random.default_rng(seed)
    points = []
    tries = 0
    while len(points) < n:
        tries += 1
        if tries > max_tries:
            raise ValidationError(f"could not place {n} agents in spawn_box {box}")
        p = rng.uniform((xmin, ymin), (xmax, ymax))
        if all(np.linalg.norm(p - q) >= min_gap_factor * 2 * R for q in points):
            points.append(p)
    return tuple((k, AgentState(p, np.zeros(2))) for k, p in enumerate(points))


def parse_scenario(text: str) -> ScenarioConfig:
    section = None
    values: dict = {}
    agents: dict = {}
    goals: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(f"malformed section header {line!r}", lineno)
            section = line[1:-1].strip()
            if section not in ("scenario", "agents", "goals"):
                raise ParseError(f"unknown section {section!r}", lineno)
            continue
        if section is None:
            raise ParseError("content before the first section header", lineno)
        if section == "scenario":
            if "=" not in line:
                raise ParseError("expected 'key = value'", lineno)
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in SCENARIO_KEYS:
                raise ParseError("unknown key", lineno, key)
            if key in values:
                raise ParseError("duplicate key", lineno, key)
            if key in ("N", "seed"):
                values[key] = _integer(value, lineno, key)
            elif key == "spawn_box":
                parts = value.split()
                if len(parts) != 4:
                    raise ParseError("spawn_box needs xmin ymin xmax ymax", lineno, key)
                values[key] = tuple(_number(p, lineno, key) for p in parts)
            else:
                values[key] = _number(value, lineno, key)
        elif section == "agents":
            parts = line.split()
            if len(parts) != 5:
                raise ParseError(f"agent rows are 'id x y vx vy', got {len(parts)} fields", lineno)
            aid = _integer(parts[0], lineno, "id")
            if aid in agents:
                raise ParseError(f"duplicate agent id {aid}", lineno, "id")
            x, y, vx, vy = (_number(p, lineno, n) for p, n in zip(parts[1:], ("x", "y", "vx", "vy")))
            try:
                agents[aid] = AgentState((x, y), (vx, vy))
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
        else:
            parts = line.split()
            if len(parts) not in (3, 5, 8):
                raise ParseError(
                    f"goal rows are 'index bx by [fvx fvy [ax ay freq]]', got {len(parts)} fields", lineno)
            gid = _integer(parts[0], lineno, "index")
            if gid in goals:
                raise ParseError(f"duplicate goal index {gid}", lineno, "index")
            names = ("bx", "by", "fvx", "fvy", "ax", "ay", "freq")
            nums = [_number(p, lineno, n) for p, n in zip(parts[1:], names)]
            nums += [0.0] * (7 - len(nums))
            goals[gid] = GoalMotion(gid, nums[0:2], nums[2:4], nums[4:6], nums[6])

    for key in _REQUIRED:
        if key not in values:
            raise ParseError("missing required key", None, key)
    bounds_kw = {k: values.pop(k) for k in ("v_min", "v_max", "u_min", "u_max") if k in values}
    try:
        bounds = Bounds(**bounds_kw)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    n_declared = values.pop("N", None)
    cfg_kw = {k: v for k, v in values.items()}
    if "h" not in cfg_kw:
        cfg_kw["h"] = math.inf
    agent_tuple = tuple(sorted(agents.items()))
    if not agent_tuple and n_declared:
        box = cfg_kw.get("spawn_box")
        if box is None:
            raise ValidationError("no [agents] rows and no spawn_box to place N agents")
        agent_tuple = spawn_agents(n_declared, box, cfg_kw["R"], cfg_kw.get("seed", 0))
    if n_declared is not None and n_declared != len(agent_tuple):
        raise ValidationError(f"N = {n_declared} but {len(agent_tuple)} agent rows given")
    cfg = ScenarioConfig(agents=agent_tuple, goals=tuple(goals[g] for g in sorted(goals)),
                         bounds=bounds, **cfg_kw)
    validate(cfg)
    return cfg


def validate(cfg: ScenarioConfig) -> None:
    """Raise ValidationError naming the first violated invariant."""
    if cfg.N == 0:
        raise ValidationError("scenario has no agents")
    if cfg.M == 0:
        raise ValidationError("scenario has no goals")
    if cfg.N > cfg.M:
        raise ValidationError(f"N exceeds M ({cfg.N} agents, {cfg.M} goals)")
    if not cfg.R > 0:
        raise ValidationError("R must be positive")
    if not cfg.h >= 4 * cfg.R:
        raise ValidationError(f"sensing horizon h = {cfg.h} is below 4R = {4 * cfg.R}")
    if not cfg.dt > 0:
        raise ValidationError("dt must be positive")
    if not cfg.T > 0:
        raise ValidationError("T must be positive")
    if not cfg.t0 >= 0:
        raise ValidationError("t0 must be non-negative")
    if not cfg.initial_tf > cfg.t0:
        raise ValidationError("initial_tf must be after t0")
    if not cfg.max_time >= cfg.min_time:
        raise ValidationError("max_time must be at least min_time")
    positions = np.array([s.position for _, s in cfg.agents])
    for i in range(len(positions)):
        d = np.linalg.norm(positions[i + 1:] - positions[i], axis=1)
        if d.size and d.min() < 2 * cfg.R:
            raise ValidationError(f"initial agent separation {d.min():.6g} m is below 2R")
    n = int(math.floor((cfg.max_time - cfg.t0) / cfg.dt + 1e-9))
    times = cfg.t0 + cfg.dt * np.arange(n + 1)
    sep = min_goal_separation(cfg.goals, times)
    if not sep > 2 * cfg.R:
        raise ValidationError(f"goal spacing {sep:.6g} m is not greater than 2R = {2 * cfg.R:.6g} m")


def load_scenario(path) -> ScenarioConfig:
    return parse_scenario(Path(path).read_text(encoding="latin-1"))


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def dump_scenario(cfg: ScenarioConfig) -> str:
    """Text that :func:`parse_scenario` maps back to an equal config."""
    b = cfg.bounds
    lines = ["[scenario]"]
    scalars = [("N", cfg.N), ("R", cfg.R), ("h", cfg.h), ("T", cfg.T), ("t0", cfg.t0),
               ("initial_tf", cfg.initial_tf), ("dt", cfg.dt), ("min_time", cfg.min_time),
               ("max_time", cfg.max_time), ("seed", cfg.seed), ("v_min", b.v_min), ("v_max", b.v_max),
               ("u_min", b.u_min), ("u_max", b.u_max)]
    lines += [f"{k} = {_fmt(v)}" for k, v in scalars]
    if cfg.spawn_box is not None:
        lines.append("spawn_box = " + " ".join(_fmt(v) for v in cfg.spawn_box))
    lines.append("[agents]")
    lines.append("# id x y vx vy")
    for aid, s in cfg.agents:
        lines.append(" ".join([str(aid)] + [_fmt(v) for v in (*s.position, *s.velocity)]))
    lines.append("[goals]")
    lines.append("# index bx by fvx fvy ax ay freq")
    for g in cfg.goals:
        vals = (*g.base_offset, *g.formation_velocity, *g.periodic_amplitude, g.periodic_frequency)
        lines.append(" ".join([str(g.goal_index)] + [_fmt(v) for v in vals]))
    return "\n".join(lines) + "\n"
