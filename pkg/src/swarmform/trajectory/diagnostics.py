"""Junction residuals for planned contact arcs.

The constant-relative-speed arc is only locally optimal, so the costate and
Hamiltonian jump conditions are reported rather than enforced.  Costates on
an unconstrained cubic follow from the optimality condition with no active
constraint: ``lambda_v = -u`` and ``lambda_p = -d(lambda_v)/dt = du/dt``.
On the arc the multiplier ``mu`` is seeded from the velocity-costate jump at
entry and propagated with the arc's first-order multiplier equation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from ..dynamics import PolyTrajectory
from ..errors import SingularNu
from .segments import ConstrainedArc

NU_EPS = 1e-12
_FD = 1e-4


@dataclass(frozen=True)
class JumpDiagnostics:
    leader_id: int
    t1: float
    t2: float
    nu: Optional[np.ndarray]
    state_residual_t1: Optional[float]
    state_residual_t2: Optional[float]
    costate_jump_residual_t1: Optional[float]
    hamiltonian_mismatch_t1: Optional[float]
    hamiltonian_mismatch_t2: Optional[float]
    costate_residual_t2: Optional[float]
    mu_t1: Optional[float]
    multiplier_ode_residual: Optional[float]
    tangential_ode_residual: Optional[float]


def _leader_derivs(leader, ts):
    """Leader control and its first two time derivatives by central differences."""
    ts = np.atleast_1d(ts)
    u0 = leader.sample(ts)[2]
    up = leader.sample(ts + _FD)[2]
    um = leader.sample(ts - _FD)[2]
    return u0, (up - um) / (2 * _FD), (up - 2 * u0 + um) / _FD ** 2


def _state(seg, t):
    p, v, u = seg.sample(t)
    return p[0], v[0], u[0]


def _hamiltonian(u, v, lam_p, lam_v):
    return 0.5 * float(u @ u) + float(lam_p @ v) + float(lam_v @ u)


def _poly_costates(poly: PolyTrajectory, t):
    _, _, u = _state(poly, t)
    return poly.a.copy(), -u


def _arc_basis(arc: ConstrainedArc, t):
    s, sd, _ = arc.relative(t)
    s, sd = s[0], sd[0]
    p_hat = s / (2 * arc.R)
    a = arc.relative_speed
    q_hat = sd / a if a > 0 else np.array([-p_hat[1], p_hat[0]])
    return s, p_hat, q_hat


def _arc_lambda_p(arc, t, mu_dot):
    """Position costate on the arc from its p-hat / q-hat projections."""
    R, a = arc.R, arc.relative_speed
    _, p_hat, q_hat = _arc_basis(arc, t)
    _, du_j, _ = _leader_derivs(arc.leader, t)
    lp_p = 2 * R * mu_dot + float(du_j[0] @ p_hat)
    lp_q = float(du_j[0] @ q_hat) + a ** 3 / (4 * R ** 2)
    return lp_p * p_hat + lp_q * q_hat


def _mu_rate(arc, t, mu):
    R, a = arc.R, arc.relative_speed
    _, p_hat, _ = _arc_basis(arc, t)
    _, _, dd_u = _leader_derivs(arc.leader, t)
    return ((a ** 2 / (2 * R)) * mu + a ** 4 / (8 * R ** 3) - float(dd_u[0] @ p_hat)) / (2 * R)


def _diagnose_arc(prev, arc: ConstrainedArc, nxt, n_samples=64):
    R = arc.R
    t1, t2 = arc.t1, arc.t2
    nu = mu1 = res_x1 = res_l1 = res_h1 = None
    p1, v1, u1 = _state(arc, t1)
    pj, vj, _ = _state(arc.leader, t1)
    if isinstance(prev, PolyTrajectory):
        pm, vm, um = _state(prev, t1)
        res_x1 = float(max(np.linalg.norm(pm - p1), np.linalg.norm(vm - v1)))
        s = pj - pm
        sv = float(s @ vm)
        if abs(sv) < NU_EPS:
            raise SingularNu(f"s.v = {sv:.3g} at t1 = {t1}")
        nu1 = -float(um @ um) / (2 * sv)
        nu = np.array([nu1, 0.0])
        lp_m, lv_m = _poly_costates(prev, t1)
        lp_plus = lp_m - nu1 * 2 * s
        lv_plus = lv_m
        s_arc, p_hat, q_hat = _arc_basis(arc, t1)
        w = lv_plus + u1
        mu1 = -float(w @ p_hat) / (2 * R)
        mu_dot1 = _mu_rate(arc, t1, mu1)
        lp_pred = _arc_lambda_p(arc, t1, mu_dot1)
        res_l1 = float(np.hypot(np.linalg.norm(lp_plus - lp_pred), float(w @ q_hat)))
        dN_dt = -2 * float(s @ vj)
        h_minus = _hamiltonian(um, vm, lp_m, lv_m)
        h_plus = _hamiltonian(u1, v1, lp_plus, lv_plus)
        res_h1 = h_minus - h_plus - nu1 * dN_dt

    res_x2 = res_l2 = res_h2 = ode58 = ode59 = None
    if mu1 is not None:
        sol = solve_ivp(lambda t, y: [_mu_rate(arc, t, y[0])], (t1, t2), [mu1],
                        dense_output=True, rtol=1e-10, atol=1e-12)
        ts = np.linspace(t1, t2, n_samples)
        mus = sol.sol(ts)[0]
        a = arc.relative_speed
        rates = np.array([_mu_rate(arc, t, m) for t, m in zip(ts, mus)])
        num_rates = np.gradient(mus, ts) if len(ts) > 2 and t2 - t1 > 0 else rates
        ode58 = float(np.max(np.abs(2 * R * (num_rates - rates)))) if n_samples > 2 else 0.0
        _, _, dd_u = _leader_derivs(arc.leader, ts)
        q_dots = np.array([float(dd_u[k] @ _arc_basis(arc, t)[2]) for k, t in enumerate(ts)])
        ode59 = float(np.max(np.abs(a * rates + q_dots)))
        mu2 = float(mus[-1])
        if isinstance(nxt, PolyTrajectory):
            p2m, v2m, u2m = _state(arc, t2)
            p2p, v2p, u2p = _state(nxt, t2)
            res_x2 = float(max(np.linalg.norm(p2m - p2p), np.linalg.norm(v2m - v2p)))
            s2, _, _ = _arc_basis(arc, t2)
            lv_minus = -u2m - mu2 * s2
            lp_minus = _arc_lambda_p(arc, t2, float(rates[-1]))
            lp_plus, lv_plus = _poly_costates(nxt, t2)
            res_l2 = float(np.hypot(np.linalg.norm(lp_minus - lp_plus), np.linalg.norm(lv_minus - lv_plus)))
            res_h2 = _hamiltonian(u2m, v2m, lp_minus, lv_minus) - _hamiltonian(u2p, v2p, lp_plus, lv_plus)
    elif isinstance(nxt, PolyTrajectory):
        p2m, v2m, _ = _state(arc, t2)
        p2p, v2p, _ = _state(nxt, t2)
        res_x2 = float(max(np.linalg.norm(p2m - p2p), np.linalg.norm(v2m - v2p)))

    return JumpDiagnostics(arc.leader_id, t1, t2, nu, res_x1, res_x2, res_l1, res_h1, res_h2,
                           res_l2, mu1, ode58, ode59)


def jump_diagnostics(pieces) -> list[JumpDiagnostics]:
    """One record per contact arc; empty for a purely unconstrained trajectory."""
    segs = list(getattr(pieces, "segments", pieces))
    out = []
    for k, seg in enumerate(segs):
        if not isinstance(seg, ConstrainedArc):
            continue
        prev = segs[k - 1] if k > 0 else None
        nxt = segs[k + 1] if k + 1 < len(segs) else None
        out.append(_diagnose_arc(prev, seg, nxt))
    return out
