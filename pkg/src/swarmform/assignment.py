"""Decentralised goal assignment with permanent banning.

Every agent solves a small binary program over its own neighbourhood, keeps
the goal it assigned to itself, and conflicts between neighbours that picked
the same goal are settled by the interaction-dynamics priority: each agent
that does not beat every competitor for its goal is banned from that goal
forever and gets a fresh deadline.  Rounds repeat until no two neighbours
share a goal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .dynamics import AgentState, energy_to_go, solve_unconstrained_bvp
from .errors import DegenerateHorizon, InfeasibleAssignment, NonTermination
from .priority import AgentSummary, has_priority

INFEASIBLE = math.inf


@dataclass(frozen=True)
class AgentRecord:
    """What an agent broadcasts to its neighbours."""

    agent_id: int
    state: AgentState
    deadline: float
    banned: frozenset = frozenset()
    holding: Optional[int] = None  # goal occupied after arrival, if any


@dataclass(frozen=True, eq=False)
class CostMatrix:
    rows: tuple
    cols: tuple
    cost: np.ndarray

    def __post_init__(self):
        cost = np.asarray(self.cost, dtype=float)
        if cost.shape != (len(self.rows), len(self.cols)):
            raise ValueError("cost shape does not match rows/cols")
        finite = cost[np.isfinite(cost)]
        if np.any(finite < 0) or np.any(np.isnan(cost)):
            raise ValueError("costs must be non-negative or INFEASIBLE")
        object.__setattr__(self, "rows", tuple(self.rows))
        object.__setattr__(self, "cols", tuple(self.cols))
        object.__setattr__(self, "cost", cost)

    def entry(self, agent_id, goal_index):
        return float(self.cost[self.rows.index(agent_id), self.cols.index(goal_index)])


@dataclass(frozen=True, eq=False)
class AssignmentMatrix:
    rows: tuple
    cols: tuple
    matrix: np.ndarray
    total_cost: float

    def goal_of(self, agent_id) -> int:
        r = self.rows.index(agent_id)
        return self.cols[int(np.argmax(self.matrix[r]))]

    def mapping(self) -> dict:
        return {a: self.goal_of(a) for a in self.rows}


@dataclass(frozen=True)
class PrescribedGoal:
    agent_id: int
    goal_index: int
    deadline: float


@dataclass(frozen=True)
class ConflictSet:
    anchor: int
    members: frozenset
    goal_index: int


def transit_cost(state: AgentState, now: float, goal, deadline: float) -> float:
    """Unconstrained energy to reach ``goal`` with matched velocity at ``deadline``."""
    p, v, _ = goal.sample(deadline)
    traj = solve_unconstrained_bvp(state, now, AgentState(p[0], v[0]), deadline)
    return energy_to_go(traj, now)


def build_cost_matrix(views, goals: Mapping, now: float, deadlines: Mapping | None = None,
                      cache: dict | None = None) -> CostMatrix:
    """Energy-to-go of every neighbour to every goal; banned pairs are INFEASIBLE.

    ``views`` is an iterable of :class:`AgentRecord`.  Agents already holding
    a goal keep it: their row is zero there and INFEASIBLE elsewhere.
    """
    records = sorted(views, key=lambda r: r.agent_id)
    cols = tuple(sorted(goals))
    cost = np.empty((len(records), len(cols)))
    for r, rec in enumerate(records):
        deadline = rec.deadline if deadlines is None else deadlines.get(rec.agent_id, rec.deadline)
        for c, g in enumerate(cols):
            if g in rec.banned:
                cost[r, c] = INFEASIBLE
            elif rec.holding is not None:
                cost[r, c] = 0.0 if g == rec.holding else INFEASIBLE
            else:
                key = (rec.agent_id, g)
                if cache is not None and key in cache:
                    cost[r, c] = cache[key]
                    continue
                if not deadline - now > 0:
                    raise DegenerateHorizon(f"agent {rec.agent_id}: deadline {deadline} not after {now}")
                cost[r, c] = transit_cost(rec.state, now, goals[g], deadline)
                if cache is not None:
                    cache[key] = cost[r, c]
    return CostMatrix(tuple(r.agent_id for r in records), cols, cost)


def _has_perfect_matching(feasible: np.ndarray) -> bool:
    n_rows = feasible.shape[0]
    if n_rows == 0:
        return True
    match = maximum_bipartite_matching(csr_matrix(feasible.astype(np.int8)), perm_type="column")
    return int(np.count_nonzero(match >= 0)) == n_rows


def _optimum(cost: np.ndarray, rows, cols, big: float) -> float:
    """Minimum total over a row/col subset, or inf if no feasible matching."""
    if len(rows) == 0:
        return 0.0
    sub = cost[np.ix_(rows, cols)]
    if sub.shape[0] > sub.shape[1]:
        return math.inf
    work = np.where(np.isfinite(sub), sub, big)
    r, c = linear_sum_assignment(work)
    picked = sub[r, c]
    if not np.all(np.isfinite(picked)):
        return math.inf
    return float(picked.sum())


def solve_local_assignment(costs: CostMatrix) -> AssignmentMatrix:
    """Minimum-cost assignment of every row to a distinct, non-banned goal.

    Among optimal assignments the one chosen gives the lowest agent id the
    lowest goal index that keeps the total optimal, then the next agent, etc.
    """
    cost = costs.cost
    n_rows, n_cols = cost.shape
    feasible = np.isfinite(cost)
    if n_rows > n_cols or not _has_perfect_matching(feasible):
        raise InfeasibleAssignment(
            f"no feasible assignment for agents {costs.rows} under the current bans")
    finite = cost[feasible]
    big = (float(finite.max()) if finite.size else 0.0) * (n_rows + 1) + 1.0
    rows_left = list(range(n_rows))
    cols_left = list(range(n_cols))
    target = _optimum(cost, rows_left, cols_left, big)
    matrix = np.zeros((n_rows, n_cols), dtype=np.int8)
    for r in range(n_rows):
        rest_rows = [x for x in rows_left if x != r]
        chosen = None
        for c in cols_left:
            if not feasible[r, c]:
                continue
            rest = _optimum(cost, rest_rows, [x for x in cols_left if x != c], big)
            if cost[r, c] + rest <= target + 1e-12 * max(1.0, abs(target)):
                chosen, target = c, rest
                break
        if chosen is None:  # pragma: no cover - guarded by the matching check
            raise InfeasibleAssignment("tie-break failed to recover an optimal assignment")
        matrix[r, chosen] = 1
        rows_left = rest_rows
        cols_left.remove(chosen)
    total = float(cost[matrix.astype(bool)].sum())
    return AssignmentMatrix(costs.rows, costs.cols, matrix, total)


def detect_conflicts(prescribed) -> list[ConflictSet]:
    """Group agents by claimed goal; every agent lands in exactly one set."""
    by_goal: dict[int, set] = {}
    for pg in prescribed:
        by_goal.setdefault(pg.goal_index, set()).add(pg.agent_id)
    out = [ConflictSet(min(ids), frozenset(ids), g) for g, ids in by_goal.items()]
    return sorted(out, key=lambda cs: (cs.goal_index, cs.anchor))


def competing_agents(agent_id, neighborhood, prescriptions: Mapping) -> frozenset:
    """Neighbours (including the agent) whose prescribed goal equals the agent's."""
    goal = prescriptions[agent_id]
    return frozenset(k for k in neighborhood if prescriptions.get(k) == goal)


@dataclass(frozen=True)
class BanEvent:
    agent_id: int
    goal_index: int
    round: int
    time: float


@dataclass
class AssignmentBook:
    """Mutable protocol state carried between ticks."""

    prescriptions: dict = field(default_factory=dict)
    bans: dict = field(default_factory=dict)
    deadlines: dict = field(default_factory=dict)
    holding: dict = field(default_factory=dict)

    def copy(self):
        return AssignmentBook(dict(self.prescriptions), dict(self.bans),
                              dict(self.deadlines), dict(self.holding))

    def record(self, agent_id, state) -> AgentRecord:
        return AgentRecord(agent_id, state, self.deadlines[agent_id],
                           frozenset(self.bans.get(agent_id, ())), self.holding.get(agent_id))

    def total_bans(self) -> int:
        return sum(len(b) for b in self.bans.values())


@dataclass
class RoundReport:
    time: float
    rounds: int = 1
    solves: list = field(default_factory=list)
    bans: list = field(default_factory=list)
    energies: dict = field(default_factory=dict)


def resolve_round(states: Mapping, neighborhoods: Mapping, goals: Mapping, now: float,
                  book: AssignmentBook, T: float, to_solve=None):
    """Iterate local solves and banning to the no-shared-goal fixed point.

    Parameters
    ----------
    states : agent id -> AgentState at ``now``
    neighborhoods : agent id -> ids within sensing range (including itself)
    goals : goal index -> GoalMotion
    book : current prescriptions, bans, deadlines and holding goals (not mutated)
    T : deadline extension granted on a new ban
    to_solve : agents that re-solve their local program first; default all

    Returns the updated book and a :class:`RoundReport`.
    """
    book = book.copy()
    ids = sorted(states)
    pending = set(ids if to_solve is None else to_solve)
    report = RoundReport(time=now)
    max_rounds = max(1, len(ids) - 1)
    ban_rounds = 0
    while True:
        cache: dict = {}
        for i in sorted(pending):
            if book.holding.get(i) is not None:
                book.prescriptions[i] = book.holding[i]
                continue
            views = [book.record(k, states[k]) for k in neighborhoods[i]]
            costs = build_cost_matrix(views, goals, now, cache=cache)
            result = solve_local_assignment(costs)
            book.prescriptions[i] = result.goal_of(i)
            report.solves.append((i, book.prescriptions[i]))
        pending = set()

        energies = {}
        for i in ids:
            if book.holding.get(i) is not None:
                energies[i] = 0.0
            else:
                g = book.prescriptions[i]
                energies[i] = cache.get((i, g))
                if energies[i] is None:
                    energies[i] = transit_cost(states[i], now, goals[g], book.deadlines[i])
        summaries = {i: AgentSummary(i, len(neighborhoods[i]), energies[i]) for i in ids}
        report.energies = energies

        losers = []
        for i in ids:
            competitors = competing_agents(i, neighborhoods[i], book.prescriptions)
            if len(competitors) < 2:
                continue
            if not all(has_priority(summaries[i], summaries[k]) for k in competitors if k != i):
                losers.append(i)
        if not losers:
            break
        ban_rounds += 1
        if ban_rounds > max_rounds:
            raise NonTermination(f"ban loop exceeded {max_rounds} rounds at t={now}")
        for i in losers:
            g = book.prescriptions[i]
            book.bans[i] = frozenset(book.bans.get(i, frozenset()) | {g})
            book.deadlines[i] = now + T
            book.holding[i] = None
            pending.add(i)
            report.bans.append(BanEvent(i, g, ban_rounds, now))
    report.rounds = max(1, ban_rounds)
    return book, report
