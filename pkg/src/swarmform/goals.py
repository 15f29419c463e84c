"""Moving formation goals."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import vec2


@dataclass(frozen=True, eq=False)
class GoalMotion:
    """Goal drifting with the formation plus an optional sinusoidal velocity term.

    velocity(t) = formation_velocity + periodic_amplitude * cos(periodic_frequency * t)
    """

    goal_index: int
    base_offset: np.ndarray
    formation_velocity: np.ndarray = None
    periodic_amplitude: np.ndarray = None
    periodic_frequency: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "goal_index", int(self.goal_index))
        object.__setattr__(self, "base_offset", vec2(self.base_offset))
        for name in ("formation_velocity", "periodic_amplitude"):
            value = getattr(self, name)
            object.__setattr__(self, name, np.zeros(2) if value is None else vec2(value))
        object.__setattr__(self, "periodic_frequency", float(self.periodic_frequency))

    def __eq__(self, other):
        if not isinstance(other, GoalMotion):
            return NotImplemented
        return (self.goal_index == other.goal_index
                and np.array_equal(self.base_offset, other.base_offset)
                and np.array_equal(self.formation_velocity, other.formation_velocity)
                and np.array_equal(self.periodic_amplitude, other.periodic_amplitude)
                and self.periodic_frequency == other.periodic_frequency)

    __hash__ = None

    def sample(self, t):
        """Vectorised (P, V, U) at times ``t``; U is the goal's acceleration."""
        t = np.atleast_1d(np.asarray(t, dtype=float))[:, None]
        w = self.periodic_frequency
        amp = self.periodic_amplitude
        if w == 0.0:
            osc_p = amp * t
            osc_v = np.broadcast_to(amp, (t.shape[0], 2))
            osc_u = np.zeros((t.shape[0], 2))
        else:
            osc_p = amp / w * np.sin(w * t)
            osc_v = amp * np.cos(w * t)
            osc_u = -amp * w * np.sin(w * t)
        p = self.base_offset + self.formation_velocity * t + osc_p
        v = self.formation_velocity + osc_v
        return p, v, osc_u

    def energy_between(self, ta: float, tb: float) -> float:
        w = self.periodic_frequency
        amp2 = float(self.periodic_amplitude @ self.periodic_amplitude)
        if w == 0.0 or amp2 == 0.0:
            return 0.0
        # integral of amp^2 w^2 sin^2(w t)
        def prim(t):
            return amp2 * w ** 2 * (t / 2 - math.sin(2 * w * t) / (4 * w))
        return prim(tb) - prim(ta)


def goal_state(motion: GoalMotion, t: float):
    """Return ``(position, velocity)`` of a goal at time ``t``."""
    if t < 0:
        raise ValueError("goal_state is defined for t >= 0")
    p, v, _ = motion.sample(t)
    return p[0], v[0]


def min_goal_separation(goals, times) -> float:
    """Smallest pairwise goal distance over the sampled times."""
    goals = list(goals)
    if len(goals) < 2:
        return math.inf
    pos = np.stack([g.sample(times)[0] for g in goals])  # (M, n, 2)
    best = math.inf
    for i in range(len(goals)):
        d = np.linalg.norm(pos[i + 1:] - pos[i], axis=2)
        if d.size:
            best = min(best, float(d.min()))
    return best
