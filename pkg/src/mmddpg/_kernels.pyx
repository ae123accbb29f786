# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled dynamics kernels. Same signatures and semantics as ``_kernels_py``."""

import numpy as np
from libc.math cimport sin, cos, sqrt, NAN


cdef inline double _clip(double x, double lim) nogil:
    if x > lim:
        return lim
    if x < -lim:
        return -lim
    return x


cdef tuple _inertia(double m1, double m2, double l1, double l2):
    cdef double lc1 = 0.5 * l1
    cdef double lc2 = 0.5 * l2
    cdef double i1 = m1 * l1 * l1 / 12.0
    cdef double i2 = m2 * l2 * l2 / 12.0
    return (i1 + i2 + m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2),
            m2 * l1 * lc2,
            i2 + m2 * lc2 * lc2)


def point_mass_step(const double[:, ::1] pos, const double[:, ::1] vel,
                    const double[:, ::1] target, const double[:, ::1] action,
                    const double[:, ::1] dist, double mass, double damping, double gear,
                    double gear_scale, double damping_scale, double dt,
                    double action_bound, double dist_bound, double action_penalty,
                    double cost_offset):
    cdef Py_ssize_t n = pos.shape[0], i, k
    new_pos_arr = np.empty((n, 2))
    new_vel_arr = np.empty((n, 2))
    cost_arr = np.empty(n)
    cdef double[:, ::1] new_pos = new_pos_arr
    cdef double[:, ::1] new_vel = new_vel_arr
    cdef double[::1] cost = cost_arr
    cdef double a, w, force, v, p, err, acc_err, acc_a
    with nogil:
        for i in range(n):
            acc_err = 0.0
            acc_a = 0.0
            for k in range(2):
                a = _clip(action[i, k], action_bound)
                w = _clip(dist[i, k], dist_bound)
                force = gear * gear_scale * a + w - damping_scale * damping * vel[i, k]
                v = vel[i, k] + dt * force / mass
                p = pos[i, k] + dt * v
                new_vel[i, k] = v
                new_pos[i, k] = p
                err = p - target[i, k]
                acc_err = acc_err + err * err
                acc_a = acc_a + a * a
            cost[i] = acc_err + action_penalty * acc_a + cost_offset
    return new_pos_arr, new_vel_arr, cost_arr


def two_link_fk(const double[:, ::1] q, double l1, double l2):
    cdef Py_ssize_t n = q.shape[0], i
    out_arr = np.empty((n, 2))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            out[i, 0] = l1 * cos(q[i, 0]) + l2 * cos(q[i, 0] + q[i, 1])
            out[i, 1] = l1 * sin(q[i, 0]) + l2 * sin(q[i, 0] + q[i, 1])
    return out_arr


def two_link_mass_matrix(const double[:, ::1] q, double m1, double m2, double l1, double l2):
    cdef Py_ssize_t n = q.shape[0], i
    cdef double k0, k1, k2, c2
    k0, k1, k2 = _inertia(m1, m2, l1, l2)
    m11_arr = np.empty(n)
    m12_arr = np.empty(n)
    m22_arr = np.full(n, k2)
    cdef double[::1] m11 = m11_arr
    cdef double[::1] m12 = m12_arr
    for i in range(n):
        c2 = cos(q[i, 1])
        m11[i] = k0 + 2.0 * k1 * c2
        m12[i] = k2 + k1 * c2
    return m11_arr, m12_arr, m22_arr


def two_link_step(const double[:, ::1] q, const double[:, ::1] qd,
                  const double[:, ::1] target, const double[:, ::1] action,
                  const double[:, ::1] dist, double m1, double m2, double l1, double l2,
                  double damping, double gear, double gear_scale, double damping_scale,
                  double dt, double action_bound, double dist_bound,
                  double action_penalty, double cost_offset):
    cdef Py_ssize_t n = q.shape[0], i
    cdef double k0, k1, k2
    k0, k1, k2 = _inertia(m1, m2, l1, l2)
    new_q_arr = np.empty((n, 2))
    new_qd_arr = np.empty((n, 2))
    cost_arr = np.empty(n)
    cdef double[:, ::1] new_q = new_q_arr
    cdef double[:, ::1] new_qd = new_qd_arr
    cdef double[::1] cost = cost_arr
    cdef double a1, a2, w1, w2, s1, c1, s2, c2, s12, c12, m11, m12, m22
    cdef double d1, d2, j11, j12, j21, j22, h, g, damp, tau1, tau2, det
    cdef double acc1, acc2, nd1, nd2, nq1, nq2, ex, ey
    g = gear * gear_scale
    damp = damping_scale * damping
    with nogil:
        for i in range(n):
            a1 = _clip(action[i, 0], action_bound)
            a2 = _clip(action[i, 1], action_bound)
            w1 = _clip(dist[i, 0], dist_bound)
            w2 = _clip(dist[i, 1], dist_bound)
            s1 = sin(q[i, 0])
            c1 = cos(q[i, 0])
            s2 = sin(q[i, 1])
            c2 = cos(q[i, 1])
            s12 = sin(q[i, 0] + q[i, 1])
            c12 = cos(q[i, 0] + q[i, 1])
            m11 = k0 + 2.0 * k1 * c2
            m12 = k2 + k1 * c2
            m22 = k2
            d1 = qd[i, 0]
            d2 = qd[i, 1]
            j11 = -l1 * s1 - l2 * s12
            j12 = -l2 * s12
            j21 = l1 * c1 + l2 * c12
            j22 = l2 * c12
            h = k1 * s2
            tau1 = g * a1 + (j11 * w1 + j21 * w2) - damp * d1 + h * (2.0 * d1 * d2 + d2 * d2)
            tau2 = g * a2 + (j12 * w1 + j22 * w2) - damp * d2 - h * d1 * d1
            det = m11 * m22 - m12 * m12
            if det <= 1e-12 * m11 * m22:
                det = NAN
            acc1 = (m22 * tau1 - m12 * tau2) / det
            acc2 = (m11 * tau2 - m12 * tau1) / det
            nd1 = d1 + dt * acc1
            nd2 = d2 + dt * acc2
            nq1 = q[i, 0] + dt * nd1
            nq2 = q[i, 1] + dt * nd2
            new_qd[i, 0] = nd1
            new_qd[i, 1] = nd2
            new_q[i, 0] = nq1
            new_q[i, 1] = nq2
            ex = l1 * cos(nq1) + l2 * cos(nq1 + nq2) - target[i, 0]
            ey = l1 * sin(nq1) + l2 * sin(nq1 + nq2) - target[i, 1]
            cost[i] = ex * ex + ey * ey + action_penalty * (a1 * a1 + a2 * a2) + cost_offset
    return new_q_arr, new_qd_arr, cost_arr


def adam_update(double[::1] p, const double[::1] g, double[::1] m, double[::1] v,
                double lr, double b1, double b2, double eps, double c1, double c2):
    """Fused bias-corrected Adam descent over flat arrays, in place."""
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double gi
    with nogil:
        for i in range(n):
            gi = g[i]
            m[i] = b1 * m[i] + (1.0 - b1) * gi
            v[i] = b2 * v[i] + (1.0 - b2) * (gi * gi)
            p[i] = p[i] - lr * (m[i] / c1) / (sqrt(v[i] / c2) + eps)


def lerp_inplace(double[::1] t, const double[::1] o, double tau):
    """``t <- tau * o + (1 - tau) * t`` in place."""
    cdef Py_ssize_t i, n = t.shape[0]
    cdef double keep = 1.0 - tau
    with nogil:
        for i in range(n):
            t[i] = tau * o[i] + keep * t[i]
