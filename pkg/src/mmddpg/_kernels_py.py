"""Pure-numpy dynamics kernels (fallback for the compiled ``_kernels`` module).

All arrays are ``(N, 2)`` float64; rows are independent episodes. Inputs are
never modified. Near-singular mass matrices yield NaN rows, which callers
turn into faults.
"""

import numpy as np


def point_mass_step(pos, vel, target, action, dist, mass, damping, gear, gear_scale,
                    damping_scale, dt, action_bound, dist_bound, action_penalty,
                    cost_offset):
    a = np.clip(action, -action_bound, action_bound)
    w = np.clip(dist, -dist_bound, dist_bound)
    force = gear * gear_scale * a + w - damping_scale * damping * vel
    new_vel = vel + dt * force / mass
    new_pos = pos + dt * new_vel
    err = new_pos - target
    cost = (err[:, 0] * err[:, 0] + err[:, 1] * err[:, 1]
            + action_penalty * (a[:, 0] * a[:, 0] + a[:, 1] * a[:, 1]) + cost_offset)
    return new_pos, new_vel, cost


def _inertia(m1, m2, l1, l2):
    lc1 = 0.5 * l1
    lc2 = 0.5 * l2
    i1 = m1 * l1 * l1 / 12.0
    i2 = m2 * l2 * l2 / 12.0
    k0 = i1 + i2 + m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2)
    k1 = m2 * l1 * lc2
    k2 = i2 + m2 * lc2 * lc2
    return k0, k1, k2


def two_link_mass_matrix(q, m1, m2, l1, l2):
    """Per-row entries ``(M11, M12, M22)`` of the joint-space inertia."""
    k0, k1, k2 = _inertia(m1, m2, l1, l2)
    c2 = np.cos(q[:, 1])
    return k0 + 2.0 * k1 * c2, k2 + k1 * c2, np.full(q.shape[0], k2)


def two_link_fk(q, l1, l2):
    q1 = q[:, 0]
    q12 = q[:, 0] + q[:, 1]
    out = np.empty_like(q)
    out[:, 0] = l1 * np.cos(q1) + l2 * np.cos(q12)
    out[:, 1] = l1 * np.sin(q1) + l2 * np.sin(q12)
    return out


def two_link_step(q, qd, target, action, dist, m1, m2, l1, l2, damping, gear,
                  gear_scale, damping_scale, dt, action_bound, dist_bound,
                  action_penalty, cost_offset):
    a = np.clip(action, -action_bound, action_bound)
    w = np.clip(dist, -dist_bound, dist_bound)
    k0, k1, k2 = _inertia(m1, m2, l1, l2)
    s1 = np.sin(q[:, 0])
    c1 = np.cos(q[:, 0])
    s2 = np.sin(q[:, 1])
    c2 = np.cos(q[:, 1])
    s12 = np.sin(q[:, 0] + q[:, 1])
    c12 = np.cos(q[:, 0] + q[:, 1])
    m11 = k0 + 2.0 * k1 * c2
    m12 = k2 + k1 * c2
    m22 = k2
    d1 = qd[:, 0]
    d2 = qd[:, 1]
    j11 = -l1 * s1 - l2 * s12
    j12 = -l2 * s12
    j21 = l1 * c1 + l2 * c12
    j22 = l2 * c12
    h = k1 * s2
    g = gear * gear_scale
    damp = damping_scale * damping
    tau1 = g * a[:, 0] + (j11 * w[:, 0] + j21 * w[:, 1]) - damp * d1 + h * (2.0 * d1 * d2 + d2 * d2)
    tau2 = g * a[:, 1] + (j12 * w[:, 0] + j22 * w[:, 1]) - damp * d2 - h * d1 * d1
    det = m11 * m22 - m12 * m12
    bad = det <= 1e-12 * m11 * m22
    det = np.where(bad, np.nan, det)
    acc1 = (m22 * tau1 - m12 * tau2) / det
    acc2 = (m11 * tau2 - m12 * tau1) / det
    new_qd = np.empty_like(qd)
    new_qd[:, 0] = d1 + dt * acc1
    new_qd[:, 1] = d2 + dt * acc2
    new_q = q + dt * new_qd
    tip = two_link_fk(new_q, l1, l2)
    err = tip - target
    cost = (err[:, 0] * err[:, 0] + err[:, 1] * err[:, 1]
            + action_penalty * (a[:, 0] * a[:, 0] + a[:, 1] * a[:, 1]) + cost_offset)
    return new_q, new_qd, cost


def adam_update(p, g, m, v, lr, b1, b2, eps, c1, c2):
    """Fused bias-corrected Adam descent over flat arrays, in place."""
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def lerp_inplace(t, o, tau):
    """``t <- tau * o + (1 - tau) * t`` in place."""
    t *= 1.0 - tau
    t += tau * o
