"""Pairwise interaction dynamics that rank agents from observable quantities."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .errors import IdentityComparison


@dataclass(frozen=True)
class AgentSummary:
    agent_id: int
    neighborhood_size: int
    energy_to_go: float

    def key(self):
        return (self.neighborhood_size, self.energy_to_go, self.agent_id)


def _gt(x, y) -> int:
    return 1 if x > y else 0


def has_priority(i: AgentSummary, j: AgentSummary) -> bool:
    """Composite indicator: neighbourhood size, then energy-to-go, then index."""
    if i.agent_id == j.agent_id:
        raise IdentityComparison(f"agent {i.agent_id} compared with itself")
    n_ij = _gt(i.neighborhood_size, j.neighborhood_size)
    n_ji = _gt(j.neighborhood_size, i.neighborhood_size)
    e_ij = _gt(i.energy_to_go, j.energy_to_go)
    e_ji = _gt(j.energy_to_go, i.energy_to_go)
    a_ij = _gt(i.agent_id, j.agent_id)
    value = n_ij + (1 - n_ij) * (1 - n_ji) * (e_ij + (1 - e_ij) * (1 - e_ji) * a_ij)
    return value == 1


def priority_winner(candidates: Iterable[AgentSummary]) -> int:
    """Id of the member that has priority over every other member."""
    pool = list(candidates)
    if not pool:
        raise ValueError("priority_winner needs at least one candidate")
    best = pool[0]
    for other in pool[1:]:
        if has_priority(other, best):
            best = other
    return best.agent_id


def priority_order(summaries: Iterable[AgentSummary]) -> list[int]:
    """Agent ids sorted from highest to lowest priority."""
    return [s.agent_id for s in sorted(summaries, key=AgentSummary.key, reverse=True)]
