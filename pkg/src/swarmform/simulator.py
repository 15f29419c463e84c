"""Deterministic time-stepped world.

Each tick at ``t = step * dt``:

1. agents whose deadline has come become *holding*: they ride their goal;
2. every agent senses the agents within ``h`` (inclusive);
3. agents whose neighbourhood changed re-run the assignment/ban loop;
4. if anything changed, moving agents plan in priority order against the
   holding agents and the higher-priority neighbours already planned;
5. states advance by exact evaluation of the active trajectories;
6. energy accumulates by exact integration over the tick; metrics update.

Holding agents cannot deviate from their goal, so they are treated as
obstacles by every moving agent regardless of priority.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .assignment import AssignmentBook, resolve_round, transit_cost
from .dynamics import HORIZON_EPS, AgentState, check_bounds
from .errors import InfeasibleAssignment, NoFeasibleTrajectory, SwarmFormError
from .priority import AgentSummary, priority_order
from .scenario import ScenarioConfig
from .trajectory import ActiveAfter, GoalHold, PiecewiseTrajectory, PlannerParams, first_violation, plan_trajectory

log = logging.getLogger(__name__)

ARRIVAL_SLACK = 1e-9


@dataclass
class Metrics:
    min_separation: float = math.inf
    total_energy: float = 0.0
    t_f: float = math.nan
    total_bans: int = 0
    assignment_rounds: int = 0
    replans: int = 0
    hold_energy: float = 0.0

    def as_record(self) -> dict:
        return {
            "min_separation": self.min_separation,
            "total_energy": self.total_energy,
            "t_f": self.t_f,
            "total_bans": self.total_bans,
            "assignment_rounds": self.assignment_rounds,
            "replans": self.replans,
            "hold_energy": self.hold_energy,
        }


@dataclass
class WorldState:
    """Snapshot between ticks.  ``events``, ``rows`` and ``history`` are append-only logs."""

    step: int
    time: float
    states: dict
    book: AssignmentBook
    plans: dict
    energy: dict
    hold_energy: dict
    neighborhoods: dict
    arrivals: dict
    initial_tf: dict
    metrics: Metrics
    events: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    history: dict = field(default_factory=dict)

    def holding(self, agent_id) -> bool:
        return self.book.holding.get(agent_id) is not None


@dataclass
class RunResult:
    metrics: Metrics
    rows: list
    events: list
    status: str
    world: WorldState
    diagnostic: str = ""

    @property
    def ok(self):
        return self.status == "ok"


def sense_neighborhood(world: WorldState, agent_id, h: float) -> frozenset:
    """Ids within Euclidean distance ``h`` of ``agent_id`` (inclusive), itself included."""
    p = world.states[agent_id].position
    return frozenset(k for k, s in world.states.items()
                     if k == agent_id or float(np.linalg.norm(s.position - p)) <= h)


def _sense_all(world, h):
    return {i: sense_neighborhood(world, i, h) for i in sorted(world.states)}


def initial_world(cfg: ScenarioConfig) -> WorldState:
    states = cfg.agent_states()
    ids = sorted(states)
    step0 = int(round(cfg.t0 / cfg.dt))
    book = AssignmentBook(deadlines={i: cfg.initial_tf for i in ids},
                          bans={i: frozenset() for i in ids},
                          holding={i: None for i in ids})
    zero = {i: 0.0 for i in ids}
    return WorldState(step=step0, time=step0 * cfg.dt, states=states, book=book,
                      plans={i: None for i in ids}, energy=dict(zero), hold_energy=dict(zero),
                      neighborhoods={}, arrivals={}, initial_tf={i: cfg.initial_tf for i in ids},
                      metrics=Metrics(), history={i: [] for i in ids})


def _event(world, kind, **fields):
    world.events.append({"kind": kind, "time": world.time, **fields})


def _mark_arrivals(world: WorldState) -> list:
    arrived = []
    for i in sorted(world.states):
        if world.holding(i):
            continue
        plan = world.plans[i]
        deadline = world.book.deadlines[i]
        if plan is not None and world.time >= deadline - ARRIVAL_SLACK:
            goal = world.book.prescriptions[i]
            world.book.holding[i] = goal
            world.arrivals[i] = deadline
            arrived.append(i)
            _event(world, "arrival", agent=i, goal=goal, deadline=deadline)
    return arrived


def _copy_world(world: WorldState) -> WorldState:
    return replace(world, states=dict(world.states), book=world.book.copy(), plans=dict(world.plans),
                   energy=dict(world.energy), hold_energy=dict(world.hold_energy),
                   arrivals=dict(world.arrivals), metrics=replace(world.metrics))


def _planner_params(cfg):
    return PlannerParams(R=cfg.R, check_dt=cfg.dt / 10)


def _priority_summaries(world, goals, neighborhoods):
    out = {}
    for i in sorted(world.states):
        if world.holding(i):
            energy = 0.0
        else:
            deadline = world.book.deadlines[i]
            g = goals[world.book.prescriptions[i]]
            energy = (transit_cost(world.states[i], world.time, g, deadline)
                      if deadline - world.time > HORIZON_EPS else 0.0)
        out[i] = AgentSummary(i, len(neighborhoods[i]), energy)
    return out


def _plan_sweep(world, cfg, goals, neighborhoods, dirty):
    params = _planner_params(cfg)
    summaries = _priority_summaries(world, goals, neighborhoods)
    order = priority_order(summaries.values())
    published = {i: world.plans[i] for i in order if world.holding(i)}
    now = world.time
    for i in order:
        if world.holding(i):
            continue
        deadline = world.book.deadlines[i]
        leaders = {}
        for j in sorted(neighborhoods[i]):
            if j == i:
                continue
            if j in published:
                leaders[j] = published[j]
            else:
                # lower priority: it steers around us, but cannot once parked on its goal
                tf_j = world.book.deadlines[j]
                leaders[j] = ActiveAfter(GoalHold(goals[world.book.prescriptions[j]], tf_j), tf_j)
        plan = world.plans[i]
        reason = None
        if plan is None:
            reason = "initial"
        elif i in dirty:
            reason = "assignment"
        else:
            hit = first_violation(plan, leaders, now, deadline, params) if leaders else None
            if hit is not None:
                reason = f"conflict:{hit.leader_id}"
        if reason is not None:
            goal = goals[world.book.prescriptions[i]]
            p, v, _ = goal.sample(deadline)
            try:
                traj = plan_trajectory(world.states[i], now, AgentState(p[0], v[0]), deadline, leaders, params)
            except NoFeasibleTrajectory as exc:
                _event(world, "halt", agent=i, error="NoFeasibleTrajectory", detail=str(exc))
                raise
            plan = PiecewiseTrajectory(traj.segments + (GoalHold(goal, deadline),), traj.junctions)
            world.plans[i] = plan
            world.metrics.replans += 1
            _event(world, "replan", agent=i, reason=reason, goal=world.book.prescriptions[i],
                   deadline=deadline, leaders=tuple(sorted(leaders)), arcs=len(traj.junctions))
            for js in traj.junctions:
                _event(world, "junction", agent=i, leader=js.leader_id, t1=js.t1, t2=js.t2,
                       entry_angle=js.entry_angle, relative_speed=js.relative_speed,
                       rotation_sign=js.rotation_sign, energy=js.energy)
            violations = check_bounds(traj, cfg.bounds, params.check_dt)
            if violations:
                kinds = sorted({v.kind for v in violations})
                worst = max(violations, key=lambda v: v.magnitude)
                _event(world, "bound_violation", agent=i, count=len(violations), kinds=tuple(kinds),
                       first_time=violations[0].time, worst_kind=worst.kind, worst_magnitude=worst.magnitude)
        published[i] = plan


def _record_rows(world, goals):
    t = world.time
    for i in sorted(world.states):
        p, v, u = world.plans[i].sample(t) if world.plans[i] is not None else (
            world.states[i].position[None], world.states[i].velocity[None], np.zeros((1, 2)))
        goal = world.book.prescriptions.get(i, -1)
        world.rows.append((t, i, float(p[0, 0]), float(p[0, 1]), float(v[0, 0]), float(v[0, 1]),
                           float(u[0, 0]), float(u[0, 1]), goal))


def _min_pairwise(states) -> float:
    ids = sorted(states)
    if len(ids) < 2:
        return math.inf
    P = np.array([states[i].position for i in ids])
    best = math.inf
    for k in range(len(ids) - 1):
        best = min(best, float(np.linalg.norm(P[k + 1:] - P[k], axis=1).min()))
    return best


def tick(world: WorldState, cfg: ScenarioConfig) -> WorldState:
    """Advance the world by one ``dt``; raises on infeasible assignment or planning."""
    world = _copy_world(world)
    goals = cfg.goal_map()
    first = not world.neighborhoods
    old_book = world.book.copy()
    arrived = _mark_arrivals(world)

    neighborhoods = _sense_all(world, cfg.h)
    changed = [i for i in sorted(neighborhoods) if world.neighborhoods.get(i) != neighborhoods[i]]
    dirty = set()
    if changed:
        try:
            book, report = resolve_round(world.states, neighborhoods, goals, world.time, world.book,
                                         cfg.T, to_solve=changed)
        except InfeasibleAssignment as exc:
            _event(world, "halt", error="InfeasibleAssignment", detail=str(exc))
            raise
        world.book = book
        world.metrics.assignment_rounds += report.rounds
        _event(world, "assignment", rounds=report.rounds, solvers=tuple(changed),
               prescriptions=tuple(sorted(book.prescriptions.items())))
        for ban in report.bans:
            _event(world, "ban", agent=ban.agent_id, goal=ban.goal_index, round=ban.round,
                   deadline=book.deadlines[ban.agent_id])
        world.metrics.total_bans = book.total_bans()
        for i in sorted(world.states):
            if (book.prescriptions.get(i) != old_book.prescriptions.get(i)
                    or book.deadlines[i] != old_book.deadlines[i]
                    or (old_book.holding.get(i) is not None and book.holding.get(i) is None)):
                dirty.add(i)
        for i in dirty:
            if book.holding.get(i) is None:
                world.arrivals.pop(i, None)
    world.neighborhoods = neighborhoods

    if first or changed or dirty or arrived:
        _plan_sweep(world, cfg, goals, neighborhoods, dirty)

    _record_rows(world, goals)

    t, t_next = world.time, (world.step + 1) * cfg.dt
    for i in sorted(world.states):
        plan = world.plans[i]
        p, v, _ = plan.sample(t_next)
        world.states[i] = AgentState(p[0], v[0])
        transit = plan.transit_energy_between(t, t_next)
        hold = plan.hold_energy_between(t, t_next)
        world.energy[i] += transit
        world.hold_energy[i] += hold
        hist = world.history[i]
        if hist and hist[-1][0] is plan and hist[-1][2] == t:
            hist[-1] = (plan, hist[-1][1], t_next)
        else:
            hist.append((plan, t, t_next))
    world.step += 1
    world.time = t_next

    m = world.metrics
    m.min_separation = min(m.min_separation, _min_pairwise(world.states))
    m.total_energy = float(sum(world.energy[i] for i in sorted(world.energy)))
    m.hold_energy = float(sum(world.hold_energy[i] for i in sorted(world.hold_energy)))
    if world.arrivals:
        m.t_f = max(world.arrivals.values())
    return world


def dense_min_separation(world: WorldState, sub_dt: float, t_end: float | None = None) -> float:
    """Minimum pairwise distance over the flown plans, sampled every ``sub_dt``."""
    ids = sorted(world.history)
    if len(ids) < 2:
        return math.inf
    t_start = min(h[0][1] for h in world.history.values() if h)
    t_end = world.time if t_end is None else t_end
    n = int(math.floor((t_end - t_start) / sub_dt + 1e-9))
    ts = t_start + sub_dt * np.arange(n + 1)
    P = np.empty((len(ids), ts.size, 2))
    for r, i in enumerate(ids):
        for plan, ta, tb in world.history[i]:
            mask = (ts >= ta - 1e-12) & (ts <= tb + 1e-12)
            if np.any(mask):
                P[r, mask] = plan.sample(ts[mask])[0]
    best = math.inf
    for r in range(len(ids) - 1):
        best = min(best, float(np.linalg.norm(P[r + 1:] - P[r], axis=2).min()))
    return best


def _finished(world, cfg):
    all_held = all(world.holding(i) for i in world.states)
    return all_held and world.time >= cfg.min_time - ARRIVAL_SLACK


def run(cfg: ScenarioConfig) -> RunResult:
    """Run until every agent holds its goal and ``min_time`` has passed, or ``max_time``."""
    world = initial_world(cfg)
    status, diagnostic = "ok", ""
    try:
        while True:
            _mark_arrivals(world)
            if _finished(world, cfg):
                break
            if world.time >= cfg.max_time - ARRIVAL_SLACK:
                status = "timeout"
                diagnostic = "agents still moving at max_time: " + ",".join(
                    str(i) for i in sorted(world.states) if not world.holding(i))
                break
            world = tick(world, cfg)
    except InfeasibleAssignment as exc:
        status, diagnostic = "infeasible_assignment", str(exc)
    except NoFeasibleTrajectory as exc:
        status, diagnostic = "no_feasible_trajectory", str(exc)
    except SwarmFormError as exc:
        status, diagnostic = "internal_error", f"{type(exc).__name__}: {exc}"
    if world.history and any(world.history.values()):
        world.metrics.min_separation = min(world.metrics.min_separation,
                                           dense_min_separation(world, cfg.dt / 10))
    if world.arrivals:
        world.metrics.t_f = max(world.arrivals.values())
    if world.plans and all(p is not None for p in world.plans.values()):
        _record_rows(world, cfg.goal_map())
    for i in sorted(world.arrivals):
        bound = world.initial_tf[i] + cfg.M * cfg.T
        if world.arrivals[i] > bound + ARRIVAL_SLACK:
            _event(world, "completion_bound_breach", agent=i, t_f=world.arrivals[i], bound=bound)
            if status == "ok":
                status, diagnostic = "internal_error", f"agent {i} arrived after {bound}"
    _event(world, "end", status=status)
    return RunResult(world.metrics, world.rows, world.events, status, world, diagnostic)
