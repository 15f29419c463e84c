"""Collision-aware trajectory generation."""
from .geometry import (ContactBasis, contact_basis, multi_contact_point,
                       multi_contact_segment, tangency)
from .segments import (ConstrainedArc, GoalHold, constrained_arc_eval, MultiContactSegment,
                       PiecewiseTrajectory, as_piecewise)
from .diagnostics import JumpDiagnostics, jump_diagnostics
from .planner import (ActiveAfter, JunctionSolve, PlannerParams, first_violation,
                      plan_trajectory, separations)

__all__ = [
    "ContactBasis", "contact_basis", "multi_contact_point", "multi_contact_segment", "tangency",
    "JumpDiagnostics", "jump_diagnostics",
    "ConstrainedArc", "constrained_arc_eval", "GoalHold", "MultiContactSegment", "PiecewiseTrajectory", "as_piecewise",
    "ActiveAfter", "JunctionSolve", "PlannerParams", "first_violation", "plan_trajectory", "separations",
]
