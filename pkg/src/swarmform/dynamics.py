"""Double-integrator states and the unconstrained minimum-energy solution.

An unconstrained energy-optimal arc between two fixed states is a cubic in
time.  ``PolyTrajectory`` stores that cubic with its constants measured from
the arc's start time ``t0`` so that evaluation stays well conditioned late in
a run; :meth:`PolyTrajectory.absolute_coefficients` gives the same law in
absolute time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DegenerateHorizon, OutOfDomain

HORIZON_EPS = 1e-6
# slack on [t0, tf] membership so that k*dt grids landing on tf are accepted
DOMAIN_SLACK = 1e-9


def vec2(x, y=None) -> np.ndarray:
    if y is None:
        arr = np.asarray(x, dtype=float).reshape(2)
    else:
        arr = np.array([x, y], dtype=float)
    return arr


@dataclass(frozen=True)
class AgentState:
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", vec2(self.position))
        object.__setattr__(self, "velocity", vec2(self.velocity))
        if not (np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.velocity))):
            raise ValueError("agent state must be finite")

    @classmethod
    def at_rest(cls, x, y):
        return cls(vec2(x, y), np.zeros(2))

    def __eq__(self, other):
        if not isinstance(other, AgentState):
            return NotImplemented
        return (np.array_equal(self.position, other.position)
                and np.array_equal(self.velocity, other.velocity))

    def __hash__(self):
        return hash((tuple(self.position), tuple(self.velocity)))


@dataclass(frozen=True)
class Bounds:
    v_min: float = 0.0
    v_max: float = math.inf
    u_min: float = 0.0
    u_max: float = math.inf

    def __post_init__(self):
        if not (0.0 <= self.v_min <= self.v_max):
            raise ValueError("bounds require 0 <= v_min <= v_max")
        if not (0.0 <= self.u_min <= self.u_max):
            raise ValueError("bounds require 0 <= u_min <= u_max")


@dataclass(frozen=True, eq=False)
class PolyTrajectory:
    """Cubic position law ``p = a/6 s^3 + b/2 s^2 + c s + d`` with ``s = t - t0``.

    ``u = a s + b`` and ``v = a/2 s^2 + b s + c``.  Use
    :meth:`absolute_coefficients` for the same constants expressed in
    absolute time.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    t0: float
    tf: float
    kind: str = field(default="unconstrained", init=False)

    def __post_init__(self):
        for name in "abcd":
            object.__setattr__(self, name, vec2(getattr(self, name)))
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "tf", float(self.tf))
        if not self.t0 < self.tf:
            raise DegenerateHorizon(f"t0={self.t0} must precede tf={self.tf}")

    def absolute_coefficients(self):
        """Return ``(a, b, c, d)`` with ``u(t) = a t + b`` in absolute time."""
        a, b, c, d, t0 = self.a, self.b, self.c, self.d, self.t0
        B = b - a * t0
        C = a * t0 ** 2 / 2 - b * t0 + c
        D = -a * t0 ** 3 / 6 + b * t0 ** 2 / 2 - c * t0 + d
        return a.copy(), B, C, D

    def sample(self, t):
        """Vectorised evaluation without a domain check; returns (P, V, U) of shape (n, 2)."""
        s = (np.atleast_1d(np.asarray(t, dtype=float)) - self.t0)[:, None]
        a, b, c, d = self.a, self.b, self.c, self.d
        u = a * s + b
        v = (a / 2 * s + b) * s + c
        p = ((a / 6 * s + b / 2) * s + c) * s + d
        return p, v, u

    def energy_between(self, ta: float, tb: float) -> float:
        """Closed-form integral of ||u||^2 over [ta, tb]."""
        sa, sb = ta - self.t0, tb - self.t0
        aa = float(self.a @ self.a)
        ab = float(self.a @ self.b)
        bb = float(self.b @ self.b)
        return aa * (sb ** 3 - sa ** 3) / 3 + ab * (sb ** 2 - sa ** 2) + bb * (sb - sa)

    def breakpoints(self, ta, tb):
        return []

    def state_at(self, t: float) -> AgentState:
        p, v, _ = eval_trajectory(self, t)
        return AgentState(p, v)


def solve_unconstrained_bvp(start: AgentState, t0: float, end: AgentState, tf: float) -> PolyTrajectory:
    """Minimum-energy cubic joining ``start`` at ``t0`` to ``end`` at ``tf``."""
    horizon = float(tf) - float(t0)
    if not horizon > HORIZON_EPS:
        raise DegenerateHorizon(f"horizon {horizon!r} s is below {HORIZON_EPS} s")
    p0, v0 = start.position, start.velocity
    dp = end.position - p0 - v0 * horizon
    dv = end.velocity - v0
    a = (6.0 * dv * horizon - 12.0 * dp) / horizon ** 3
    b = (6.0 * dp - 2.0 * dv * horizon) / horizon ** 2
    return PolyTrajectory(a, b, v0.copy(), p0.copy(), t0, tf)


def _check_domain(traj, t):
    if t < traj.t0 - DOMAIN_SLACK or t > traj.tf + DOMAIN_SLACK:
        raise OutOfDomain(f"t={t} outside [{traj.t0}, {traj.tf}]")


def eval_trajectory(traj: PolyTrajectory, t: float):
    """Return ``(position, velocity, control)`` at time ``t``."""
    _check_domain(traj, t)
    p, v, u = traj.sample(t)
    return p[0], v[0], u[0]


def energy_to_go(traj: PolyTrajectory, t):
    """Integral of ||u||^2 from ``t`` to the end of the arc; ``t`` may be an array."""
    ts = np.asarray(t, dtype=float)
    if ts.ndim == 0:
        _check_domain(traj, float(ts))
        t = min(max(float(ts), traj.t0), traj.tf)
        return max(traj.energy_between(t, traj.tf), 0.0)
    if ts.size:
        _check_domain(traj, float(ts.min()))
        _check_domain(traj, float(ts.max()))
    ts = np.clip(ts, traj.t0, traj.tf)
    return np.maximum(traj.energy_between(ts, traj.tf), 0.0)


class BoundViolation(NamedTuple):
    time: float
    kind: str
    magnitude: float


def check_bounds(traj, bounds: Bounds, sample_dt: float) -> list[BoundViolation]:
    """Sample speed and control magnitude and report every bound breach.

    Works on anything exposing ``t0``, ``tf`` and ``sample``.
    """
    if not sample_dt > 0:
        raise ValueError("sample_dt must be positive")
    n = int(math.floor((traj.tf - traj.t0) / sample_dt + 1e-9))
    ts = traj.t0 + sample_dt * np.arange(n + 1)
    if ts[-1] < traj.tf - 1e-12:
        ts = np.append(ts, traj.tf)
    _, v, u = traj.sample(ts)
    speed = np.linalg.norm(v, axis=1)
    accel = np.linalg.norm(u, axis=1)
    out = []
    for k, t in enumerate(ts):
        if speed[k] > bounds.v_max:
            out.append(BoundViolation(float(t), "v_max", float(speed[k])))
        if speed[k] < bounds.v_min:
            out.append(BoundViolation(float(t), "v_min", float(speed[k])))
        if accel[k] > bounds.u_max:
            out.append(BoundViolation(float(t), "u_max", float(accel[k])))
        if accel[k] < bounds.u_min:
            out.append(BoundViolation(float(t), "u_min", float(accel[k])))
    return out
