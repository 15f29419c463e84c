"""Trajectory pieces and their piecewise composition.

Every piece exposes ``t0``, ``tf``, ``kind``, ``sample(ts) -> (P, V, U)``,
``energy_between(ta, tb)`` and ``breakpoints(ta, tb)`` (times inside the
interval where the control may jump).  Leaders are anything with ``sample``
and ``breakpoints``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..dynamics import AgentState, PolyTrajectory, DOMAIN_SLACK
from ..errors import OutOfDomain
from .geometry import multi_contact_kinematics

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_PANEL = 0.1


def leader_breakpoints(motion, ta, tb):
    fn = getattr(motion, "breakpoints", None)
    return [] if fn is None else fn(ta, tb)


def integrate_control_sq(sampler, ta, tb, cuts=()):
    """Composite Gauss-Legendre integral of ||u||^2, split at ``cuts``."""
    if tb <= ta:
        return 0.0
    edges = sorted({ta, tb, *[c for c in cuts if ta < c < tb]})
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        n_panels = max(1, int(math.ceil((hi - lo) / _PANEL)))
        bounds = np.linspace(lo, hi, n_panels + 1)
        half = np.diff(bounds) / 2
        mid = (bounds[:-1] + bounds[1:]) / 2
        nodes.append((mid[:, None] + half[:, None] * _GL_X).ravel())
        weights.append((half[:, None] * _GL_W).ravel())
    ts = np.concatenate(nodes)
    w = np.concatenate(weights)
    _, _, u = sampler(ts)
    return float(np.sum(w * np.einsum("ij,ij->i", u, u)))


@dataclass(frozen=True, eq=False)
class ConstrainedArc:
    """Contact arc holding ||s|| = 2R at constant relative speed.

    ``s = p_leader - p_follower`` starts at angle ``entry_angle`` and rotates
    at ``rotation_sign * relative_speed / (2R)`` rad/s.  A zero relative speed
    is the matched-velocity case: the follower copies the leader's control.
    """

    leader_id: int
    leader: object
    t1: float
    t2: float
    entry_angle: float
    relative_speed: float
    rotation_sign: int
    R: float

    def __post_init__(self):
        if not self.t1 < self.t2:
            raise ValueError("constrained arc needs t1 < t2")
        if self.relative_speed < 0:
            raise ValueError("relative speed must be non-negative")
        if self.rotation_sign not in (1, -1):
            raise ValueError("rotation_sign must be +1 or -1")

    @property
    def t0(self):
        return self.t1

    @property
    def tf(self):
        return self.t2

    @property
    def kind(self):
        return "matched" if self.relative_speed == 0 else "constrained"

    @property
    def omega(self):
        return self.rotation_sign * self.relative_speed / (2 * self.R)

    def relative(self, ts):
        """(s, s_dot, s_ddot) of shape (n, 2)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        th = self.entry_angle + self.omega * (ts - self.t1)
        c, s = np.cos(th), np.sin(th)
        rad = 2 * self.R
        sv = rad * np.stack([c, s], axis=1)
        sd = rad * self.omega * np.stack([-s, c], axis=1)
        sdd = -self.omega ** 2 * sv
        return sv, sd, sdd

    def sample(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        pj, vj, uj = self.leader.sample(ts)
        s, sd, sdd = self.relative(ts)
        return pj - s, vj - sd, uj - sdd

    def breakpoints(self, ta, tb):
        return leader_breakpoints(self.leader, ta, tb)

    def energy_between(self, ta, tb):
        return integrate_control_sq(self.sample, ta, tb, self.breakpoints(ta, tb))


def constrained_arc_eval(arc: ConstrainedArc, leader, t):
    """Follower (position, velocity, control) on ``arc`` at ``t``; ``leader`` may override the arc's."""
    if t < arc.t1 - DOMAIN_SLACK or t > arc.t2 + DOMAIN_SLACK:
        raise OutOfDomain(f"t={t} outside arc [{arc.t1}, {arc.t2}]")
    if leader is not None and leader is not arc.leader:
        arc = ConstrainedArc(arc.leader_id, leader, arc.t1, arc.t2, arc.entry_angle,
                             arc.relative_speed, arc.rotation_sign, arc.R)
    p, v, u = arc.sample(t)
    return p[0], v[0], u[0]


@dataclass(frozen=True, eq=False)
class MultiContactSegment:
    """Follower pinned at distance 2R from two leaders (apex of an isosceles triangle)."""

    leader_ids: tuple
    leaders: tuple
    t0: float
    tf: float
    R: float
    side: int
    kind: str = field(default="multi_contact", init=False)

    def sample(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        a = self.leaders[0].sample(ts)
        b = self.leaders[1].sample(ts)
        return multi_contact_kinematics(a, b, self.R, self.side)

    def breakpoints(self, ta, tb):
        return sorted(set(leader_breakpoints(self.leaders[0], ta, tb))
                      | set(leader_breakpoints(self.leaders[1], ta, tb)))

    def energy_between(self, ta, tb):
        return integrate_control_sq(self.sample, ta, tb, self.breakpoints(ta, tb))


@dataclass(frozen=True, eq=False)
class GoalHold:
    """Formation keeping: the agent rides its goal exactly from ``t0`` on."""

    goal: object
    t0: float
    tf: float = math.inf
    kind: str = field(default="hold", init=False)

    def sample(self, ts):
        return self.goal.sample(ts)

    def breakpoints(self, ta, tb):
        return []

    def energy_between(self, ta, tb):
        return self.goal.energy_between(ta, tb)


class PiecewiseTrajectory:
    """Time-ordered, abutting pieces; queries before ``t0`` extrapolate the first piece."""

    def __init__(self, segments, junctions=()):
        segments = tuple(segments)
        if not segments:
            raise ValueError("piecewise trajectory needs at least one segment")
        for prev, nxt in zip(segments[:-1], segments[1:]):
            if abs(prev.tf - nxt.t0) > 1e-9:
                raise ValueError(f"segments do not abut: {prev.tf} vs {nxt.t0}")
        self.segments = segments
        self.junctions = tuple(junctions)
        self._starts = np.array([s.t0 for s in segments])

    @property
    def t0(self):
        return self.segments[0].t0

    @property
    def tf(self):
        return self.segments[-1].tf

    @property
    def kind(self):
        return "piecewise"

    def arcs(self):
        return [s for s in self.segments if isinstance(s, (ConstrainedArc, MultiContactSegment))]

    def is_unconstrained(self):
        return all(s.kind in ("unconstrained", "hold") for s in self.segments)

    def motion_end(self):
        """End time of the last non-hold piece."""
        ends = [s.tf for s in self.segments if s.kind != "hold"]
        return ends[-1] if ends else self.t0

    def segment_index(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        idx = np.searchsorted(self._starts, ts, side="right") - 1
        return np.clip(idx, 0, len(self.segments) - 1)

    def sample(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if len(self.segments) == 1:
            return self.segments[0].sample(ts)
        idx = self.segment_index(ts)
        P = np.empty((ts.size, 2))
        V = np.empty((ts.size, 2))
        U = np.empty((ts.size, 2))
        for k in np.unique(idx):
            mask = idx == k
            p, v, u = self.segments[k].sample(ts[mask])
            P[mask], V[mask], U[mask] = p, v, u
        return P, V, U

    def eval(self, t):
        if t < self.t0 - DOMAIN_SLACK or t > self.tf + DOMAIN_SLACK:
            raise OutOfDomain(f"t={t} outside [{self.t0}, {self.tf}]")
        p, v, u = self.sample(t)
        return p[0], v[0], u[0]

    def state_at(self, t) -> AgentState:
        p, v, _ = self.sample(t)
        return AgentState(p[0], v[0])

    def breakpoints(self, ta, tb):
        out = set()
        for seg in self.segments:
            if seg.tf <= ta or seg.t0 >= tb:
                continue
            if ta < seg.t0 < tb:
                out.add(seg.t0)
            out.update(seg.breakpoints(max(ta, seg.t0), min(tb, seg.tf)))
        return sorted(out)

    def _split(self, ta, tb, kinds=None):
        for seg in self.segments:
            lo, hi = max(ta, seg.t0), min(tb, seg.tf)
            if hi > lo and (kinds is None or seg.kind in kinds):
                yield seg, lo, hi

    def energy_between(self, ta, tb, kinds=None):
        return float(sum(seg.energy_between(lo, hi) for seg, lo, hi in self._split(ta, tb, kinds)))

    def transit_energy_between(self, ta, tb):
        return self.energy_between(ta, tb, kinds=("unconstrained", "constrained", "matched", "multi_contact"))

    def hold_energy_between(self, ta, tb):
        return self.energy_between(ta, tb, kinds=("hold",))

    def __repr__(self):
        kinds = ", ".join(f"{s.kind}[{s.t0:.3f},{s.tf:.3f}]" for s in self.segments)
        return f"PiecewiseTrajectory({kinds})"


def as_piecewise(motion):
    if isinstance(motion, PiecewiseTrajectory):
        return motion
    return PiecewiseTrajectory([motion])
