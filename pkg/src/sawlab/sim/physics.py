"""Articulated planar dynamics with penalty contact (numba kernels).

Equations of motion are assembled per evaluation from body Jacobians::

    M(q) qdd = sum_b J_b^T m_b (g - Jdot_b qd) + tau + sum_c J_c^T F_c + J_p^T F_push

and integrated with velocity Verlet (kick-drift-kick). External push forces
are held constant over whole physics intervals so that the delivered impulse
equals ``F * n * dt`` exactly.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# diag layout
D_MIN_FN = 0
D_MAX_FRICTION_EXCESS = 1
D_POS_WORK = 2
D_STATUS = 3
D_PUSH_IMPULSE = 4
D_SIZE = 5


@njit(cache=True)
def kinematics(q, qd, parent, dof, anchor, phi, omega, apos, avel, abias):
    for b in range(parent.shape[0]):
        p = parent[b]
        if p < 0:
            phi[b] = q[dof[b]]
            omega[b] = qd[dof[b]]
            apos[b, 0] = q[0]
            apos[b, 1] = q[1]
            avel[b, 0] = qd[0]
            avel[b, 1] = qd[1]
            abias[b, 0] = 0.0
            abias[b, 1] = 0.0
        else:
            c = math.cos(phi[p])
            s = math.sin(phi[p])
            rx = anchor[b, 0] * c + anchor[b, 1] * s
            rz = -anchor[b, 0] * s + anchor[b, 1] * c
            w = omega[p]
            apos[b, 0] = apos[p, 0] + rx
            apos[b, 1] = apos[p, 1] + rz
            avel[b, 0] = avel[p, 0] + w * rz
            avel[b, 1] = avel[p, 1] - w * rx
            abias[b, 0] = abias[p, 0] - w * w * rx
            abias[b, 1] = abias[p, 1] - w * w * rz
            phi[b] = phi[p] + q[dof[b]]
            omega[b] = omega[p] + qd[dof[b]]


@njit(cache=True)
def point_state(b, lx, lz, phi, omega, apos, avel, abias, out):
    """out = [px, pz, vx, vz, bias_x, bias_z] for a body-fixed point."""
    c = math.cos(phi[b])
    s = math.sin(phi[b])
    wx = lx * c + lz * s
    wz = -lx * s + lz * c
    w = omega[b]
    out[0] = apos[b, 0] + wx
    out[1] = apos[b, 1] + wz
    out[2] = avel[b, 0] + w * wz
    out[3] = avel[b, 1] - w * wx
    out[4] = abias[b, 0] - w * w * wx
    out[5] = abias[b, 1] - w * w * wz


@njit(cache=True)
def point_jacobian(b, px, pz, parent, dof, apos, J):
    J[:, :] = 0.0
    J[0, 0] = 1.0
    J[1, 1] = 1.0
    a = b
    while a >= 0:
        j = dof[a]
        J[0, j] = pz - apos[a, 1]
        J[1, j] = -(px - apos[a, 0])
        a = parent[a]


@njit(cache=True)
def _add_point_force(b, px, pz, fx, fz, parent, dof, apos, Q):
    Q[0] += fx
    Q[1] += fz
    a = b
    while a >= 0:
        j = dof[a]
        Q[j] += (pz - apos[a, 1]) * fx - (px - apos[a, 0]) * fz
        a = parent[a]


@njit(cache=True)
def evaluate(q, qd, setpoint, push_on, push_fx, params, model_arrays, contact_state,
             acc, tau_out, cp_fn, diag):
    """One dynamics evaluation: fills ``acc`` and ``tau_out``; updates the
    tangential contact anchors in ``contact_state``."""
    (parent, dof, anchor, com, mass, inertia, chain, cp_body, cp_local,
     kp, kd, tmax, q_lo, q_hi, push_body, push_local) = model_arrays
    (gravity, k_n, c_n, k_t, c_t, mu, damping, k_lim, d_lim) = (
        params[0], params[1], params[2], params[3], params[4], params[5], params[6],
        params[7], params[8])
    anchors, active = contact_state
    nb = parent.shape[0]
    n = q.shape[0]
    phi = np.empty(nb)
    omega = np.empty(nb)
    apos = np.empty((nb, 2))
    avel = np.empty((nb, 2))
    abias = np.empty((nb, 2))
    kinematics(q, qd, parent, dof, anchor, phi, omega, apos, avel, abias)

    M = np.zeros((n, n))
    Q = np.zeros(n)
    J = np.zeros((2, n))
    ps = np.empty(6)
    for b in range(nb):
        point_state(b, com[b, 0], com[b, 1], phi, omega, apos, avel, abias, ps)
        point_jacobian(b, ps[0], ps[1], parent, dof, apos, J)
        m = mass[b]
        for i in range(n):
            ji0 = J[0, i]
            ji1 = J[1, i]
            if ji0 == 0.0 and ji1 == 0.0 and chain[b, i] == 0.0:
                continue
            for k in range(n):
                M[i, k] += m * (ji0 * J[0, k] + ji1 * J[1, k]) + inertia[b] * chain[b, i] * chain[b, k]
            Q[i] += m * (ji0 * (-ps[4]) + ji1 * (-gravity - ps[5]))

    for i in range(n - 3):
        j = 3 + i
        t = kp[i] * (setpoint[i] - q[j]) - kd[i] * qd[j]
        if t > tmax[i]:
            t = tmax[i]
        elif t < -tmax[i]:
            t = -tmax[i]
        tau_out[i] = t
        extra = -damping * qd[j]
        if q[j] > q_hi[i]:
            extra += -k_lim * (q[j] - q_hi[i]) - d_lim * qd[j]
        elif q[j] < q_lo[i]:
            extra += -k_lim * (q[j] - q_lo[i]) - d_lim * qd[j]
        Q[j] += t + extra

    for c in range(cp_body.shape[0]):
        b = cp_body[c]
        point_state(b, cp_local[c, 0], cp_local[c, 1], phi, omega, apos, avel, abias, ps)
        pen = -ps[1]
        if pen > 0.0:
            fn = k_n * pen - c_n * ps[3]
            if fn < 0.0:
                fn = 0.0
            if active[c] == 0:
                anchors[c] = ps[0]
                active[c] = 1
            ft = -k_t * (ps[0] - anchors[c]) - c_t * ps[2]
            lim = mu * fn
            if ft > lim:
                ft = lim
                anchors[c] = ps[0] + ft / k_t
            elif ft < -lim:
                ft = -lim
                anchors[c] = ps[0] + ft / k_t
            if fn < diag[D_MIN_FN]:
                diag[D_MIN_FN] = fn
            excess = abs(ft) - lim
            if excess > diag[D_MAX_FRICTION_EXCESS]:
                diag[D_MAX_FRICTION_EXCESS] = excess
            cp_fn[c] = fn
            _add_point_force(b, ps[0], ps[1], ft, fn, parent, dof, apos, Q)
        else:
            active[c] = 0
            cp_fn[c] = 0.0

    if push_on:
        point_state(push_body, push_local[0], push_local[1], phi, omega, apos, avel, abias, ps)
        _add_point_force(push_body, ps[0], ps[1], push_fx, 0.0, parent, dof, apos, Q)

    sol = np.linalg.solve(M, Q)
    for i in range(n):
        acc[i] = sol[i]


@njit(cache=True)
def advance(q, qd, acc, setpoint, nsub, dt, step0, push_n0, push_n1, push_fx,
            params, model_arrays, contact_state, tau_mean, cp_fn, diag, blowup):
    """Advance ``nsub`` physics steps holding ``setpoint``.

    ``acc`` must be fresh for the current state and inputs on entry (pass a
    NaN first element to force re-evaluation). Returns 0, or the 1-based
    substep index at which the state blew up.
    """
    n = q.shape[0]
    na = n - 3
    tau = np.empty(na)
    for i in range(na):
        tau_mean[i] = 0.0
    on_prev = (step0 >= push_n0) and (step0 < push_n1)
    if math.isnan(acc[0]):
        evaluate(q, qd, setpoint, on_prev, push_fx, params, model_arrays, contact_state,
                 acc, tau, cp_fn, diag)
    half = np.empty(n)
    for s in range(nsub):
        step = step0 + s
        on = (step >= push_n0) and (step < push_n1)
        if on != on_prev:
            evaluate(q, qd, setpoint, on, push_fx, params, model_arrays, contact_state,
                     acc, tau, cp_fn, diag)
            on_prev = on
        for i in range(n):
            half[i] = qd[i] + 0.5 * dt * acc[i]
            q[i] += dt * half[i]
        evaluate(q, half, setpoint, on, push_fx, params, model_arrays, contact_state,
                 acc, tau, cp_fn, diag)
        bad = False
        for i in range(n):
            qd[i] = half[i] + 0.5 * dt * acc[i]
            if not (abs(q[i]) < blowup and abs(qd[i]) < 10.0 * blowup):
                bad = True
        for i in range(na):
            tau_mean[i] += tau[i] / nsub
            p = tau[i] * half[3 + i]
            if p > 0.0:
                diag[D_POS_WORK] += p * dt
        if on:
            diag[D_PUSH_IMPULSE] += push_fx * dt
        if bad:
            return s + 1
    return 0


@njit(cache=True)
def mechanical_energy(q, qd, params, model_arrays, contact_state):
    """Kinetic + gravitational + contact-spring + joint-limit-spring energy."""
    (parent, dof, anchor, com, mass, inertia, chain, cp_body, cp_local,
     kp, kd, tmax, q_lo, q_hi, push_body, push_local) = model_arrays
    gravity, k_n, k_t, k_lim = params[0], params[1], params[3], params[7]
    anchors, active = contact_state
    nb = parent.shape[0]
    phi = np.empty(nb)
    omega = np.empty(nb)
    apos = np.empty((nb, 2))
    avel = np.empty((nb, 2))
    abias = np.empty((nb, 2))
    kinematics(q, qd, parent, dof, anchor, phi, omega, apos, avel, abias)
    ps = np.empty(6)
    e = 0.0
    for b in range(nb):
        point_state(b, com[b, 0], com[b, 1], phi, omega, apos, avel, abias, ps)
        e += 0.5 * mass[b] * (ps[2] * ps[2] + ps[3] * ps[3]) + 0.5 * inertia[b] * omega[b] ** 2
        e += mass[b] * gravity * ps[1]
    for c in range(cp_body.shape[0]):
        point_state(cp_body[c], cp_local[c, 0], cp_local[c, 1], phi, omega, apos, avel, abias, ps)
        if ps[1] < 0.0:
            e += 0.5 * k_n * ps[1] * ps[1]
            if active[c] != 0:
                d = ps[0] - anchors[c]
                e += 0.5 * k_t * d * d
    for i in range(q.shape[0] - 3):
        x = q[3 + i]
        if x > q_hi[i]:
            e += 0.5 * k_lim * (x - q_hi[i]) ** 2
        elif x < q_lo[i]:
            e += 0.5 * k_lim * (x - q_lo[i]) ** 2
    return e


@njit(cache=True)
def linear_momentum(q, qd, parent, dof, anchor, com, mass):
    nb = parent.shape[0]
    phi = np.empty(nb)
    omega = np.empty(nb)
    apos = np.empty((nb, 2))
    avel = np.empty((nb, 2))
    abias = np.empty((nb, 2))
    kinematics(q, qd, parent, dof, anchor, phi, omega, apos, avel, abias)
    ps = np.empty(6)
    p = np.zeros(2)
    for b in range(nb):
        point_state(b, com[b, 0], com[b, 1], phi, omega, apos, avel, abias, ps)
        p[0] += mass[b] * ps[2]
        p[1] += mass[b] * ps[3]
    return p


@njit(cache=True)
def body_frames(q, qd, parent, dof, anchor):
    nb = parent.shape[0]
    phi = np.empty(nb)
    omega = np.empty(nb)
    apos = np.empty((nb, 2))
    avel = np.empty((nb, 2))
    abias = np.empty((nb, 2))
    kinematics(q, qd, parent, dof, anchor, phi, omega, apos, avel, abias)
    return phi, omega, apos, avel


@njit(cache=True)
def point_positions(q, parent, dof, anchor, cp_body, cp_local):
    nb = parent.shape[0]
    qd = np.zeros(q.shape[0])
    phi = np.empty(nb)
    omega = np.empty(nb)
    apos = np.empty((nb, 2))
    avel = np.empty((nb, 2))
    abias = np.empty((nb, 2))
    kinematics(q, qd, parent, dof, anchor, phi, omega, apos, avel, abias)
    out = np.empty((cp_body.shape[0], 2))
    ps = np.empty(6)
    for c in range(cp_body.shape[0]):
        point_state(cp_body[c], cp_local[c, 0], cp_local[c, 1], phi, omega, apos, avel, abias, ps)
        out[c, 0] = ps[0]
        out[c, 1] = ps[1]
    return out
