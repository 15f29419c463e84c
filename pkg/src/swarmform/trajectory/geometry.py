"""Contact geometry for the 2R separation constraint.

``s`` always denotes the separation ``p_leader - p_follower``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dynamics import vec2
from ..errors import ContactBroken, ZeroRelativeSpeed

SPEED_EPS = 1e-9
CONTACT_TOL = 1e-6


def tangency(s, s_dot, s_ddot, R):
    """Squared-form safety constraint and its first two time derivatives (all <= 0 when safe)."""
    s, s_dot, s_ddot = vec2(s), vec2(s_dot), vec2(s_ddot)
    return (
        4 * R ** 2 - float(s @ s),
        -float(s @ s_dot),
        -float(s @ s_ddot) - float(s_dot @ s_dot),
    )


@dataclass(frozen=True, eq=False)
class ContactBasis:
    p_hat: np.ndarray
    q_hat: np.ndarray


def contact_basis(s, s_dot, R, tol=CONTACT_TOL) -> ContactBasis:
    s, s_dot = vec2(s), vec2(s_dot)
    if abs(np.linalg.norm(s) - 2 * R) > tol:
        raise ValueError(f"|s| = {np.linalg.norm(s)} is not in contact at 2R = {2 * R}")
    speed = float(np.linalg.norm(s_dot))
    if speed < SPEED_EPS:
        raise ZeroRelativeSpeed("relative speed vanishes; follow the leader's control instead")
    return ContactBasis(s / (2 * R), s_dot / speed)


def _perp(x):
    return np.stack([-x[..., 1], x[..., 0]], axis=-1)


def multi_contact_point(p_j, p_k, R, reference):
    """Apex at distance 2R from both leaders, on the side of ``reference``.

    Returns ``(point, side)`` with ``side`` = +1 if the apex lies to the left
    of ``p_k - p_j``.
    """
    p_j, p_k, reference = vec2(p_j), vec2(p_k), vec2(reference)
    base = p_k - p_j
    d = float(np.linalg.norm(base))
    if d > 4 * R + CONTACT_TOL:
        raise ContactBroken(f"leaders {d:.6g} m apart exceed 4R = {4 * R:.6g} m")
    if d == 0.0:
        raise ContactBroken("leaders coincide; apex undefined")
    n = _perp(base) / d
    side = 1 if float((reference - (p_j + p_k) / 2) @ n) >= 0 else -1
    h = np.sqrt(max(4 * R ** 2 - d * d / 4, 0.0))
    return (p_j + p_k) / 2 + side * h * n, side


def multi_contact_kinematics(leader_a, leader_b, R, side):
    """Vectorised apex position, velocity and control from two leader samples.

    Velocity and control come from differentiating ``|p - p_leader|^2 = 4R^2``
    for both leaders and solving the resulting 2x2 systems.
    """
    pa, va, ua = leader_a
    pb, vb, ub = leader_b
    base = pb - pa
    d = np.linalg.norm(base, axis=1)
    if np.any(d > 4 * R + CONTACT_TOL):
        raise ContactBroken(f"leaders separate to {d.max():.6g} m > 4R")
    n = _perp(base) / d[:, None]
    h = np.sqrt(np.maximum(4 * R ** 2 - d * d / 4, 0.0))
    p = (pa + pb) / 2 + side * h[:, None] * n
    sa, sb = p - pa, p - pb
    A = np.stack([sa, sb], axis=1)  # (n, 2, 2)
    rhs_v = np.stack([np.einsum("ij,ij->i", sa, va), np.einsum("ij,ij->i", sb, vb)], axis=1)
    v = _solve_batch(A, rhs_v)
    rva, rvb = v - va, v - vb
    rhs_u = np.stack([
        np.einsum("ij,ij->i", sa, ua) - np.einsum("ij,ij->i", rva, rva),
        np.einsum("ij,ij->i", sb, ub) - np.einsum("ij,ij->i", rvb, rvb),
    ], axis=1)
    u = _solve_batch(A, rhs_u)
    return p, v, u


def _solve_batch(A, rhs):
    det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    out = np.empty_like(rhs)
    ok = np.abs(det) > 1e-14
    if np.any(ok):
        out[ok] = np.linalg.solve(A[ok], rhs[ok][..., None])[..., 0]
    for k in np.flatnonzero(~ok):
        out[k] = np.linalg.lstsq(A[k], rhs[k], rcond=None)[0]
    return out


def multi_contact_segment(reference, leaders, t, R):
    """Follower kinematics while touching two leaders at time ``t``.

    ``leaders`` holds two motions with ``sample``; ``reference`` is the
    follower's entry position, used to pick the apex side.
    """
    if len(leaders) < 2:
        raise ValueError("multi-contact needs at least two leaders")
    a = leaders[0].sample(t)
    b = leaders[1].sample(t)
    _, side = multi_contact_point(a[0][0], b[0][0], R, reference)
    p, v, u = multi_contact_kinematics(a, b, R, side)
    return p[0], v[0], u[0]
