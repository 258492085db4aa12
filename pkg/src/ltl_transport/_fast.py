"""Compiled inner loops: navigation-field evaluation and the closed-loop
right-hand side for planar mobile manipulators.

These mirror :mod:`ltl_transport.navfield` and :mod:`ltl_transport.dynamics`
term by term; the test-suite checks them against those references.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def field_points(qt, fixed, rot, owner):
    """Point positions and their derivatives with respect to the owner's theta."""
    n = fixed.shape[0]
    ndof = qt.shape[0]
    P = np.empty((n, 3))
    D = np.empty((n, 3))
    for k in range(n):
        o = owner[k]
        if o < ndof:
            x, y, th = qt[o], qt[o + 1], qt[o + 2]
        else:
            x, y, th = 0.0, 0.0, 0.0
        c, s = math.cos(th), math.sin(th)
        a, b, z = rot[k, 0], rot[k, 1], rot[k, 2]
        P[k, 0] = fixed[k, 0] + c * a - s * z + x
        P[k, 1] = fixed[k, 1] + b + y
        P[k, 2] = fixed[k, 2] + s * a + c * z
        D[k, 0] = -s * a - c * z
        D[k, 1] = 0.0
        D[k, 2] = c * a - s * z
    return P, D


@njit(cache=True)
def _add_point_grad(out, o, ndof, w, ux, uy, uz, D, k):
    if o < ndof:
        out[o] += w * ux
        out[o + 1] += w * uy
        out[o + 2] += w * (ux * D[k, 0] + uy * D[k, 1] + uz * D[k, 2])


@njit(cache=True)
def field_components(qt, fixed, rot, owner, ia, ib, rsum, pair_radius, tags, goal_idx, targets,
                     delta_idx, delta_r2, center, want_grad):
    """gamma, its gradient, log of obstacle*boundary, its gradient, zero flag, min gaps.

    Gaps: smallest collision-pair gap (tag 0) and forbidden-region gap (tag 1).
    """
    ndof = qt.shape[0]
    P, D = field_points(qt, fixed, rot, owner)
    gamma = 0.0
    ggrad = np.zeros(ndof)
    for m in range(goal_idx.shape[0]):
        k = goal_idx[m]
        ex = P[k, 0] - targets[m, 0]
        ey = P[k, 1] - targets[m, 1]
        ez = P[k, 2] - targets[m, 2]
        gamma += ex * ex + ey * ey + ez * ez
        if want_grad:
            _add_point_grad(ggrad, owner[k], ndof, 2.0, ex, ey, ez, D, k)
    logF = 0.0
    glog = np.zeros(ndof)
    zero = False
    gap_c = np.inf
    gap_r = np.inf
    for p in range(ia.shape[0]):
        a, b = ia[p], ib[p]
        dx = P[a, 0] - P[b, 0]
        dy = P[a, 1] - P[b, 1]
        dz = P[a, 2] - P[b, 2]
        dist = math.sqrt(dx * dx + dy * dy + dz * dz)
        d = dist - rsum[p]
        if tags[p] == 0 and d < gap_c:
            gap_c = d
        elif tags[p] == 1 and d < gap_r:
            gap_r = d
        if d <= 0.0:
            zero = True
            continue
        R = pair_radius[p]
        s = d / R
        if s >= 1.0:
            continue
        bval = s * (2.0 - s)
        logF += math.log(bval)
        if want_grad:
            w = (2.0 - 2.0 * s) / R / bval / max(dist, 1e-300)
            _add_point_grad(glog, owner[a], ndof, w, dx, dy, dz, D, a)
            _add_point_grad(glog, owner[b], ndof, -w, dx, dy, dz, D, b)
    for m in range(delta_idx.shape[0]):
        k = delta_idx[m]
        wx = P[k, 0] - center[0]
        wy = P[k, 1] - center[1]
        wz = P[k, 2] - center[2]
        dl = delta_r2[m] - (wx * wx + wy * wy + wz * wz)
        if dl <= 0.0:
            zero = True
            continue
        logF += math.log(dl)
        if want_grad:
            _add_point_grad(glog, owner[k], ndof, -2.0 / dl, wx, wy, wz, D, k)
    return gamma, ggrad, logF, glog, zero, gap_c, gap_r


@njit(cache=True)
def nav_phi_grad(kappa, gamma, ggrad, logF, glog):
    """phi = gamma / (gamma^kappa + F)^(1/kappa) and its gradient, in log space."""
    n = ggrad.shape[0]
    if gamma <= 0.0:
        return 0.0, np.zeros(n), np.zeros(n)
    lg = math.log(gamma)
    a = kappa * lg
    hi = max(a, logF)
    logD = hi + math.log(math.exp(a - hi) + math.exp(logF - hi))
    phi = math.exp(lg - logD / kappa)
    wg = math.exp(a - logD)
    wf = math.exp(logF - logD)
    attract = phi * (1.0 - wg) * ggrad / gamma
    grad = attract - phi * wf * glog / kappa
    return phi, grad, attract


# -- planar mobile manipulator ---------------------------------------------

@njit(cache=True)
def _link2(th):
    c, s = math.cos(th), math.sin(th)
    R = np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])
    dR = np.array([[-s, 0.0, -c], [0.0, 0.0, 0.0], [c, 0.0, -s]])
    ddR = np.array([[-c, 0.0, s], [0.0, 0.0, 0.0], [-s, 0.0, -c]])
    return R, dR, ddR


@njit(cache=True)
def _skew(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


@njit(cache=True)
def agent_terms(q, qd, p):
    """B, N, g of the agent; ``p = [m_base, m1, m2, base_size, l1, l2, gravity]``."""
    M = p[0] + p[1] + p[2]
    m2, l2, grav = p[2], p[5], p[6]
    c, s = math.cos(q[2]), math.sin(q[2])
    B = np.zeros((3, 3))
    B[0, 0] = M
    B[1, 1] = M
    B[0, 2] = -m2 * 0.5 * l2 * c
    B[2, 0] = B[0, 2]
    B[2, 2] = m2 * l2 * l2 / 3.0
    dB = np.zeros((3, 3, 3))
    dB[0, 2, 2] = m2 * 0.5 * l2 * s
    dB[2, 0, 2] = dB[0, 2, 2]
    N = np.zeros((3, 3))
    for k in range(3):
        for j in range(3):
            acc = 0.0
            for i in range(3):
                acc += 0.5 * (dB[k, j, i] + dB[k, i, j] - dB[i, j, k]) * qd[i]
            N[k, j] = acc
    g = np.array([0.0, 0.0, -m2 * grav * 0.5 * l2 * s])
    return B, N, g


@njit(cache=True)
def coupled_terms(q, qd, p, gpos, grot, omass, oinertia, ograv):
    B, N, g = agent_terms(q, qd, p)
    if omass == 0.0:
        return B, N, g
    l2 = p[5]
    R, dR, ddR = _link2(q[2])
    J = np.zeros((6, 3))
    J[0, 0] = 1.0
    J[1, 1] = 1.0
    Jd = np.zeros((6, 3))
    for r in range(3):
        J[r, 2] = dR[r, 2] * l2
        Jd[r, 2] = ddR[r, 2] * l2 * qd[2]
    J[4, 2] = -1.0
    lever = R @ gpos
    omega = np.array([0.0, -qd[2], 0.0])
    G = np.eye(6)
    G[3:, :3] = _skew(lever)
    GdT = np.zeros((6, 6))
    GdT[:3, 3:] = -_skew(np.cross(omega, lever))
    Gbar = G.T @ J
    Gbar_dot = GdT @ J + G.T @ Jd
    Ro = R @ grot
    Iw = Ro @ oinertia @ Ro.T
    Mo = np.zeros((6, 6))
    for r in range(3):
        Mo[r, r] = omass
    Mo[3:, 3:] = Iw
    Sw = _skew(omega)
    Co = np.zeros((6, 6))
    Co[3:, 3:] = 0.5 * (Sw @ Iw - Iw @ Sw - _skew(Iw @ omega))
    Bb = B + Gbar.T @ Mo @ Gbar
    Nb = N + Gbar.T @ Mo @ Gbar_dot + Gbar.T @ Co @ Gbar
    wo = np.array([0.0, 0.0, omass * ograv, 0.0, 0.0, 0.0])
    gb = g + Gbar.T @ wo
    return Bb, Nb, gb


@njit(cache=True)
def solve_spd3(B, rhs):
    """Cholesky solve for a 3x3 symmetric positive definite system."""
    L00 = math.sqrt(B[0, 0])
    L10 = B[1, 0] / L00
    L20 = B[2, 0] / L00
    L11 = math.sqrt(B[1, 1] - L10 * L10)
    L21 = (B[2, 1] - L20 * L10) / L11
    L22 = math.sqrt(B[2, 2] - L20 * L20 - L21 * L21)
    y0 = rhs[0] / L00
    y1 = (rhs[1] - L10 * y0) / L11
    y2 = (rhs[2] - L20 * y0 - L21 * y1) / L22
    x2 = y2 / L22
    x1 = (y1 - L21 * x2) / L11
    x0 = (y0 - L10 * x1 - L20 * x2) / L00
    return np.array([x0, x1, x2])


@njit(cache=True)
def closed_loop(x, model, field, gain, kappa):
    """State derivative of all agents under navigation or hold control.

    ``model`` packs per-agent arrays ``(params, damping, grasped, gpos, grot,
    omass, oinertia, ograv, mover_dof, q_index)``; ``field`` is
    :meth:`NavigationField.tables`. Returns ``(xdot, phi, grad, kinetic energy
    of movers, collision gap, region gap, singular)``.
    """
    params, damping, grasped, gpos, grot, omass, oinertia, ograv, mover_dof, q_index = model
    fixed, rot, owner, ia, ib, rsum, pair_radius, tags, goal_idx, targets, delta_idx, delta_r2, center = field
    n_agents = params.shape[0]
    nq = 3 * n_agents
    xdot = np.empty_like(x)
    ndof = q_index.shape[0]
    phi = 0.0
    grad = np.zeros(ndof)
    gap_c = np.inf
    gap_r = np.inf
    if ndof > 0:
        qt = np.empty(ndof)
        for k in range(ndof):
            qt[k] = x[q_index[k]]
        gamma, ggrad, logF, glog, zero, gap_c, gap_r = field_components(
            qt, fixed, rot, owner, ia, ib, rsum, pair_radius, tags, goal_idx, targets,
            delta_idx, delta_r2, center, True)
        if zero:
            return xdot, 1.0, grad, 0.0, gap_c, gap_r, True
        phi, grad, _ = nav_phi_grad(kappa, gamma, ggrad, logF, glog)
    ke = 0.0
    for i in range(n_agents):
        q = x[3 * i: 3 * i + 3].copy()
        qd = x[nq + 3 * i: nq + 3 * i + 3].copy()
        if grasped[i]:
            B, N, g = coupled_terms(q, qd, params[i], gpos[i], grot[i], omass[i], oinertia[i], ograv[i])
        else:
            B, N, g = agent_terms(q, qd, params[i])
        tau = g - damping[i] * qd
        d0 = mover_dof[i]
        if d0 >= 0:
            for r in range(3):
                tau[r] -= gain * grad[d0 + r]
            ke += 0.5 * (qd @ (B @ qd))
        acc = solve_spd3(B, tau - N @ qd - g)
        for r in range(3):
            xdot[3 * i + r] = qd[r]
            xdot[nq + 3 * i + r] = acc[r]
    return xdot, phi, grad, ke, gap_c, gap_r, False


@njit(cache=True)
def _rk4(x, k1, h, model, field, gain, kappa):
    k2, _, _, _, _, _, s2 = closed_loop(x + 0.5 * h * k1, model, field, gain, kappa)
    if s2:
        return x, False
    k3, _, _, _, _, _, s3 = closed_loop(x + 0.5 * h * k2, model, field, gain, kappa)
    if s3:
        return x, False
    k4, _, _, _, _, _, s4 = closed_loop(x + h * k3, model, field, gain, kappa)
    if s4:
        return x, False
    return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), True


@njit(cache=True)
def advance(x, dt, model, field, gain, kappa, v_tol, max_halvings):
    """Advance the closed loop by ``dt`` with classical RK4, halving the step where needed.

    A step of length ``h`` is kept when no stage hits a zero of the obstacle
    term, the end point has ``phi < 1`` and positive clearance, and
    ``gain * phi + kinetic energy`` rises by at most ``v_tol * h / dt``.

    Returns ``(x_new, phi, grad, ke, gap, status, refinements)`` with the
    diagnostics taken at ``x``. Status 0 is success, 1 means ``x`` itself is
    singular and 2 means no admissible step down to ``dt / 2**max_halvings``.
    """
    k1, phi0, grad0, ke0, gap0, _, singular = closed_loop(x, model, field, gain, kappa)
    if singular:
        return x, phi0, grad0, ke0, gap0, 1, 0
    has_field = model[9].shape[0] > 0
    cur, kcur = x, k1
    v_cur = gain * phi0 + ke0
    done = 0.0
    h = dt
    h_min = dt / 2.0 ** max_halvings
    refinements = 0
    while dt - done > 1e-12 * dt:
        h = min(h, dt - done)
        xn, ok = _rk4(cur, kcur, h, model, field, gain, kappa)
        if ok:
            kn, phin, _, ken, gapn, _, sing_n = closed_loop(xn, model, field, gain, kappa)
            ok = not sing_n
            if ok and has_field:
                ok = phin < 1.0 and gapn > 0.0 and gain * phin + ken <= v_cur + v_tol * h / dt
        if ok:
            cur, kcur = xn, kn
            if has_field:
                v_cur = gain * phin + ken
            done += h
            continue
        h *= 0.5
        refinements += 1
        if h < h_min:
            return x, phi0, grad0, ke0, gap0, 2, refinements
    return cur, phi0, grad0, ke0, gap0, 0, refinements
