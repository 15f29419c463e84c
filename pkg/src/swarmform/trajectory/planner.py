"""Collision-aware energy-optimal planning for one agent against higher-priority agents.

The planner starts from the unconstrained cubic.  If that breaches 2R
against a leader it splices in a contact arc: unconstrained arc up to the
entry time ``t1``, a constant-relative-speed arc around the leader until
``t2``, then a fresh unconstrained arc to the goal.  Entry state is built on
the contact circle with tangential relative velocity, so state continuity
holds by construction; the junction parameters are found by a grid-seeded
Nelder-Mead search on total energy with a feasibility barrier.  Exits that
hit another leader are handled recursively.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.optimize import brentq, minimize

from ..dynamics import AgentState, solve_unconstrained_bvp
from ..errors import DegenerateHorizon, NoFeasibleTrajectory
from .segments import ConstrainedArc, PiecewiseTrajectory

log = logging.getLogger(__name__)

_BIG_PREFIX = 1e12
_BIG_EXIT = 1e9
_REJECT = 1e30


@dataclass(frozen=True)
class PlannerParams:
    R: float
    check_dt: float = 1e-3
    # separations down to 2R - contact_tol count as touching, not colliding
    contact_tol: float = 1e-7
    clearance: float = 1e-4
    search_samples: int = 200
    max_arcs: int = 3
    nm_starts: int = 2
    nm_maxfev: int = 200
    min_piece: float = 1e-3


@dataclass(frozen=True)
class JunctionSolve:
    leader_id: int
    t1: float
    t2: float
    entry_angle: float
    relative_speed: float
    rotation_sign: int
    energy: float
    alternatives: tuple = field(default=(), compare=False)


@dataclass(frozen=True)
class Violation:
    leader_id: int
    time: float
    t_min: float
    min_distance: float


class ActiveAfter:
    """A motion that only counts as an obstacle from ``active_from`` on.

    Used for the goal a lower-priority neighbour will occupy once it arrives:
    the arriving agent cannot steer any more, so higher-priority agents must
    keep clear of that spot from its deadline onwards.
    """

    def __init__(self, motion, active_from):
        self.motion = motion
        self.active_from = float(active_from)

    def sample(self, ts):
        return self.motion.sample(ts)

    def breakpoints(self, ta, tb):
        fn = getattr(self.motion, "breakpoints", None)
        return [] if fn is None else fn(ta, tb)


def _active_from(motion):
    return getattr(motion, "active_from", -math.inf)


def _grid(t0, t1, step):
    n = max(1, int(math.ceil((t1 - t0) / step - 1e-9)))
    return np.linspace(t0, t1, n + 1)


def separations(motion, leaders: Mapping, ts):
    P = motion.sample(ts)[0]
    return {k: np.linalg.norm(m.sample(ts)[0] - P, axis=1) for k, m in leaders.items()}


def first_violation(motion, leaders: Mapping, t_start, t_end, params: PlannerParams):
    """Earliest breach of 2R (less the contact tolerance) on a dense grid, root-refined."""
    if not leaders or t_end <= t_start:
        return None
    ts = _grid(t_start, t_end, params.check_dt)
    limit = 2 * params.R - params.contact_tol
    best = None
    for k in sorted(leaders):
        d = np.linalg.norm(leaders[k].sample(ts)[0] - motion.sample(ts)[0], axis=1)
        d[ts < _active_from(leaders[k])] = np.inf
        bad = np.flatnonzero(d < limit)
        if bad.size == 0:
            continue
        i = int(bad[0])
        if best is None or ts[i] < best[1]:
            best = (k, ts[i], i, d)
    if best is None:
        return None
    k, _, i, d = best
    leader = leaders[k]
    if i == 0 or ts[i - 1] < _active_from(leader):
        t_v = float(ts[i])
    else:
        def gap(t):
            return float(np.linalg.norm(leader.sample(t)[0][0] - motion.sample(t)[0][0])) - limit
        t_v = brentq(gap, ts[i - 1], ts[i], xtol=1e-9)
    j = i
    while j + 1 < len(d) and d[j + 1] < limit:
        j += 1
    m = i + int(np.argmin(d[i:j + 1]))
    return Violation(k, t_v, float(ts[m]), float(d[m]))


def _bvp(start, t0, end, tf):
    return solve_unconstrained_bvp(start, t0, end, tf)


class _ArcSearch:
    """Objective over junction parameters for one leader."""

    def __init__(self, state, t, goal_end, deadline, leaders, j, params, continuation=None):
        self.state, self.t, self.goal_end, self.deadline = state, t, goal_end, deadline
        self.leaders, self.j, self.params = leaders, j, params
        self.leader = leaders[j]
        self.continuation = continuation
        self.grid = np.linspace(t, deadline, params.search_samples)
        self.leader_grid = {k: m.sample(self.grid)[0] for k, m in leaders.items()}

    def entry_state(self, t1, theta, a, sigma):
        pj, vj, _ = self.leader.sample(t1)
        e = np.array([math.cos(theta), math.sin(theta)])
        e_perp = np.array([-e[1], e[0]])
        return AgentState(pj[0] - 2 * self.params.R * e, vj[0] - sigma * a * e_perp)

    def build(self, t1, theta, a, t2, sigma):
        R = self.params.R
        pieces = []
        if self.continuation is None:
            entry = self.entry_state(t1, theta, a, sigma)
            pieces.append(_bvp(self.state, self.t, entry, t1))
        arc = ConstrainedArc(self.j, self.leader, t1, t2, theta, a, sigma, R)
        pieces.append(arc)
        pe, ve, _ = arc.sample(t2)
        exit_arc = _bvp(AgentState(pe[0], ve[0]), t2, self.goal_end, self.deadline)
        return pieces, exit_arc

    def _violation(self, pieces, exit_arc, t1, t2):
        R, p = self.params.R, self.params
        prefix = PiecewiseTrajectory(pieces)
        near = p.check_dt * np.array([1, 2, 4, 8, 16])
        extra = np.concatenate([t1 - near, t2 + near])
        extra = extra[(extra > self.t) & (extra < self.deadline)]
        ts = np.concatenate([self.grid, extra])
        in_prefix = ts <= t2
        P = np.empty((ts.size, 2))
        if in_prefix.any():
            P[in_prefix] = prefix.sample(ts[in_prefix])[0]
        if (~in_prefix).any():
            P[~in_prefix] = exit_arc.sample(ts[~in_prefix])[0]
        v_pre = v_exit = 0.0
        n = self.grid.size
        for k, m in self.leaders.items():
            Lk = np.concatenate([self.leader_grid[k], m.sample(extra)[0]]) if extra.size else self.leader_grid[k]
            d = np.linalg.norm(Lk - P, axis=1)
            req = 2 * R - 0.1 * p.contact_tol if k == self.j else 2 * R + p.clearance
            short = np.maximum(req - d, 0.0)
            short[ts < _active_from(m)] = 0.0
            v_pre += float(short[in_prefix].sum())
            v_exit += float(short[~in_prefix].sum())
        return v_pre, v_exit

    def objective(self, t1, theta, a, t2, sigma):
        p = self.params
        lo = self.t if self.continuation is not None else self.t + p.min_piece
        if not (lo <= t1 and t1 + p.min_piece <= t2 <= self.deadline - p.min_piece and 0 <= a):
            return _REJECT, None
        try:
            pieces, exit_arc = self.build(t1, theta, a, t2, sigma)
        except DegenerateHorizon:
            return _REJECT, None
        energy = sum(pc.energy_between(pc.t0, pc.tf) for pc in pieces) + exit_arc.energy_between(t2, self.deadline)
        v_pre, v_exit = self._violation(pieces, exit_arc, t1, t2)
        f = energy
        if v_pre > 0:
            f += _BIG_PREFIX * (1 + v_pre)
        if v_exit > 0:
            f += _BIG_EXIT * (1 + v_exit)
        return f, (pieces, exit_arc, energy, v_pre, v_exit)


def _seed_geometry(base, leader, t, t_hit, t_min, R):
    pb, vb, _ = base.sample(t_min)
    pj, vj, _ = leader.sample(t_min)
    s = pj[0] - pb[0]
    rel_v = vj[0] - vb[0]
    if np.linalg.norm(s) > 1e-9:
        theta_c = math.atan2(s[1], s[0])
    elif np.linalg.norm(rel_v) > 1e-12:
        theta_c = math.atan2(rel_v[0], -rel_v[1])
    else:
        theta_c = 0.0
    a0 = float(np.linalg.norm(rel_v))
    return theta_c, a0


def _search_arc(state, t, goal_end, deadline, leaders, violation, params, base, continuation):
    R = params.R
    j = violation.leader_id
    leader = leaders[j]
    theta_c, a0 = _seed_geometry(base, leader, t, violation.time, violation.t_min, R)
    horizon = deadline - t
    a_floor = 4 * R / horizon
    a_base = max(a0, a_floor)
    a_cap = 20 * a_base + 1.0
    results = []

    def run(search, sigma, seeds, to_x, from_x, steps):
        scored = []
        for seed in seeds:
            f, _ = search.objective(*seed[:4], sigma)
            scored.append((f, seed))
        scored.sort(key=lambda z: z[0])
        for f0, seed in scored[:params.nm_starts]:
            if f0 >= _REJECT:
                continue
            x0 = to_x(seed)
            simplex = [x0] + [x0 + np.eye(len(x0))[i] * steps[i] for i in range(len(x0))]

            def fun(x):
                args = from_x(x)
                if args[2] > a_cap:
                    return _REJECT
                return search.objective(*args, sigma)[0]

            res = minimize(fun, x0, method="Nelder-Mead",
                           options={"initial_simplex": np.array(simplex), "maxfev": params.nm_maxfev,
                                    "xatol": 1e-7, "fatol": 1e-10})
            best_x, best_f = (res.x, res.fun) if res.fun <= f0 else (x0, f0)
            args = from_x(best_x)
            f, info = search.objective(*args, sigma)
            if info is not None:
                results.append((f, args, sigma, info))

    if continuation is not None:
        theta0, a_c, sigma_c = continuation
        search = _ArcSearch(state, t, goal_end, deadline, leaders, j, params, continuation)
        w = max(a_c, 1e-9) / (2 * R)
        spans = [phi / w for phi in (math.pi / 8, math.pi / 4, math.pi / 2, math.pi)] if a_c > 1e-9 else []
        spans += [f * horizon for f in (0.05, 0.1, 0.2, 0.4)]
        seeds = [(t, theta0, a_c, t + d) for d in spans if t + d < deadline - params.min_piece]
        run(search, sigma_c, seeds, lambda s: np.array([s[3]]),
            lambda x: (t, theta0, a_c, float(x[0])), [0.1 * horizon])

    t_hit = max(violation.time, t + 4 * params.min_piece)
    search = _ArcSearch(state, t, goal_end, deadline, leaders, j, params)
    for sigma in (1, -1):
        seeds = []
        for frac in (0.6, 0.9):
            t1 = t + frac * (t_hit - t)
            for k in range(8):
                theta = theta_c + k * math.pi / 4
                for a in (a_base,):
                    w = a / (2 * R)
                    for phi in (math.pi / 4, math.pi / 2):
                        t2 = min(t1 + phi / w, t1 + 0.9 * (deadline - t1))
                        seeds.append((t1, theta, a, t2))
        d_t1 = 0.1 * max(t_hit - t, params.min_piece)
        run(search, sigma, seeds,
            lambda s: np.array([s[0], s[1], s[2], s[3] - s[0]]),
            lambda x: (float(x[0]), float(x[1]), float(x[2]), float(x[0] + x[3])),
            [d_t1, 0.3, 0.2 * a_base, 0.2 * (deadline - t_hit) / 4])
    results.sort(key=lambda z: z[0])
    return results


def _contact_state(state, t, leader, params):
    pj, vj, _ = leader.sample(t)
    s = pj[0] - state.position
    sd = vj[0] - state.velocity
    r = float(np.linalg.norm(s))
    if abs(r - 2 * params.R) > 1e-6 or abs(float(s @ sd)) > 1e-6 * 2 * params.R:
        return None
    sigma = 1 if float(s[0] * sd[1] - s[1] * sd[0]) >= 0 else -1
    return math.atan2(s[1], s[0]), float(np.linalg.norm(sd)), sigma


def _plan_from(state, t, goal_end, deadline, leaders, params, depth, junctions):
    base = _bvp(state, t, goal_end, deadline)
    violation = first_violation(base, leaders, t, deadline, params)
    if violation is None:
        return [base]
    if depth >= params.max_arcs:
        raise NoFeasibleTrajectory(f"more than {params.max_arcs} contact arcs needed")
    leader = leaders[violation.leader_id]
    continuation = _contact_state(state, t, leader, params)
    p0 = leader.sample(t)[0][0]
    if (continuation is None and t >= _active_from(leader)
            and np.linalg.norm(p0 - state.position) < 2 * params.R - 1e-6):
        raise NoFeasibleTrajectory(f"already within 2R of agent {violation.leader_id} at t={t}")
    results = _search_arc(state, t, goal_end, deadline, leaders, violation, params, base, continuation)
    alternatives = tuple((float(f), tuple(map(float, args)), sigma) for f, args, sigma, _ in results[:5])
    for f, args, sigma, (pieces, exit_arc, energy, v_pre, v_exit) in results[:3]:
        if v_pre > 0:
            break
        prefix = PiecewiseTrajectory(pieces)
        t2 = args[3]
        if first_violation(prefix, leaders, t, t2, params) is not None:
            continue
        pe, ve, _ = prefix.sample(t2)
        tail_junctions = []
        try:
            tail = _plan_from(AgentState(pe[0], ve[0]), t2, goal_end, deadline, leaders, params,
                              depth + 1, tail_junctions)
        except NoFeasibleTrajectory:
            continue
        arc = pieces[-1]
        junctions.append(JunctionSolve(violation.leader_id, arc.t1, arc.t2, arc.entry_angle,
                                       arc.relative_speed, arc.rotation_sign, energy, alternatives))
        junctions.extend(tail_junctions)
        return list(pieces) + tail
    raise NoFeasibleTrajectory(
        f"no safe junction found around agent {violation.leader_id} (violation at t={violation.time:.4f})")


def plan_trajectory(start: AgentState, now: float, goal_end: AgentState, deadline: float,
                    leaders: Mapping, params: PlannerParams) -> PiecewiseTrajectory:
    """Energy-minimal trajectory to ``goal_end`` at ``deadline`` that keeps 2R from every leader.

    ``leaders`` maps agent id to a motion (``sample``) covering [now, deadline].
    The result carries ``junctions`` describing each contact arc.
    """
    junctions: list = []
    segments = _plan_from(start, now, goal_end, deadline, dict(leaders), params, 0, junctions)
    plan = PiecewiseTrajectory(segments, junctions)
    final = first_violation(plan, leaders, now, deadline, params)
    if final is not None:
        raise NoFeasibleTrajectory(
            f"planned trajectory breaches 2R against agent {final.leader_id} at t={final.time:.4f}")
    if junctions:
        log.debug("planned %d contact arc(s) from t=%.3f", len(junctions), now)
    return plan
