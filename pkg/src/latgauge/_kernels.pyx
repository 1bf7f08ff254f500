# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled sweep kernels.

Line-by-line counterparts of ``_kernels_py``; see that module for the
argument conventions. Keep the two in sync: the test suite checks that both
produce identical chains.
"""
from libc.math cimport cos, exp, fmod, sqrt, M_PI

cdef double TWO_PI = 2.0 * M_PI
cdef long RENORM_EVERY = 1 << 20


def sweep_cyclic(long[::1] values, const Py_ssize_t[::1] order, const Py_ssize_t[::1] inc_ptr,
                 const Py_ssize_t[::1] inc_plaq, const Py_ssize_t[::1] inc_pos,
                 const Py_ssize_t[:, ::1] plaq_edges, const Py_ssize_t[:, ::1] plaq_signs,
                 int n, double beta, const double[::1] costab, const double[::1] uniforms,
                 int n_sweeps):
    cdef Py_ssize_t iu = 0, i, e, k, p, pos, j, m
    cdef int sw, g, new
    cdef long t, x
    cdef long ss[64]
    cdef long ts[64]
    cdef double logw[64]
    cdef double w[64]
    cdef double mx, acc, tot, u, c
    if n > 64:
        raise ValueError("n must be at most 64")
    with nogil:
        for sw in range(n_sweeps):
            for i in range(order.shape[0]):
                e = order[i]
                m = 0
                for k in range(inc_ptr[e], inc_ptr[e + 1]):
                    p = inc_plaq[k]
                    pos = inc_pos[k]
                    t = 0
                    for j in range(4):
                        if j != pos:
                            t = t + plaq_signs[p, j] * values[plaq_edges[p, j]]
                    ss[m] = plaq_signs[p, pos]
                    ts[m] = t
                    m = m + 1
                mx = -1e300
                for g in range(n):
                    acc = 0.0
                    for k in range(m):
                        x = (ss[k] * g + ts[k]) % n
                        if x < 0:
                            x = x + n
                        acc = acc + costab[x]
                    logw[g] = beta * acc
                    if logw[g] > mx:
                        mx = logw[g]
                tot = 0.0
                for g in range(n):
                    w[g] = exp(logw[g] - mx)
                    tot = tot + w[g]
                u = uniforms[iu] * tot
                iu = iu + 1
                c = 0.0
                new = n - 1
                for g in range(n):
                    c = c + w[g]
                    if u < c:
                        new = g
                        break
                values[e] = new
    return iu


cdef inline double _wrap(double x) nogil:
    x = fmod(x, TWO_PI)
    if x < 0.0:
        x = x + TWO_PI
    if x >= TWO_PI:
        x = x - TWO_PI
    return x


def sweep_circle(double[::1] theta, const Py_ssize_t[::1] order, const Py_ssize_t[::1] inc_ptr,
                 const Py_ssize_t[::1] inc_plaq, const Py_ssize_t[::1] inc_pos,
                 const Py_ssize_t[:, ::1] plaq_edges, const Py_ssize_t[:, ::1] plaq_signs,
                 double beta, double width, const double[::1] uniforms, int n_sweeps):
    cdef Py_ssize_t iu = 0, i, e, k, p, pos, j, m
    cdef int sw
    cdef long accepted = 0
    cdef long ss[64]
    cdef double ts[64]
    cdef double t, old, new, s_old, s_new, ds
    with nogil:
        for sw in range(n_sweeps):
            for i in range(order.shape[0]):
                e = order[i]
                m = 0
                for k in range(inc_ptr[e], inc_ptr[e + 1]):
                    p = inc_plaq[k]
                    pos = inc_pos[k]
                    t = 0.0
                    for j in range(4):
                        if j != pos:
                            t = t + plaq_signs[p, j] * theta[plaq_edges[p, j]]
                    ss[m] = plaq_signs[p, pos]
                    ts[m] = t
                    m = m + 1
                old = theta[e]
                new = _wrap(old + width * (2.0 * uniforms[iu] - 1.0))
                s_old = 0.0
                s_new = 0.0
                for k in range(m):
                    s_old = s_old + cos(ss[k] * old + ts[k])
                    s_new = s_new + cos(ss[k] * new + ts[k])
                ds = beta * (s_new - s_old)
                if ds >= 0.0 or uniforms[iu + 1] < exp(ds):
                    theta[e] = new
                    accepted = accepted + 1
                iu = iu + 2
    return accepted


def sweep_su2(double[:, ::1] q, const Py_ssize_t[::1] order, const Py_ssize_t[::1] inc_ptr,
              const Py_ssize_t[::1] inc_plaq, const Py_ssize_t[::1] inc_pos,
              const Py_ssize_t[:, ::1] plaq_edges, const Py_ssize_t[:, ::1] plaq_signs,
              double beta, double width, const double[::1] uniforms, int n_sweeps, long counter):
    cdef Py_ssize_t iu = 0, i, e, k, p, pos, j, r, f
    cdef int sw
    cdef long accepted = 0
    cdef double sg, a0, a1, a2, a3, b0, b1, b2, b3, c0, c1, c2, c3
    cdef double Q0, Q1, Q2, Q3, g0, g1, g2, g3, h0, h1, h2, h3
    cdef double r1, r2, r3, nr, s_old, s_new, ds, nn
    with nogil:
        for sw in range(n_sweeps):
            for i in range(order.shape[0]):
                e = order[i]
                Q0 = 0.0
                Q1 = 0.0
                Q2 = 0.0
                Q3 = 0.0
                for k in range(inc_ptr[e], inc_ptr[e + 1]):
                    p = inc_plaq[k]
                    pos = inc_pos[k]
                    a0 = 1.0
                    a1 = 0.0
                    a2 = 0.0
                    a3 = 0.0
                    for r in range(1, 4):
                        j = (pos + r) % 4
                        f = plaq_edges[p, j]
                        sg = plaq_signs[p, j]
                        b0 = q[f, 0]
                        b1 = sg * q[f, 1]
                        b2 = sg * q[f, 2]
                        b3 = sg * q[f, 3]
                        c0 = a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3
                        c1 = a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2
                        c2 = a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1
                        c3 = a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0
                        a0 = c0
                        a1 = c1
                        a2 = c2
                        a3 = c3
                    if plaq_signs[p, pos] < 0:
                        a1 = -a1
                        a2 = -a2
                        a3 = -a3
                    Q0 = Q0 + a0
                    Q1 = Q1 + a1
                    Q2 = Q2 + a2
                    Q3 = Q3 + a3
                g0 = q[e, 0]
                g1 = q[e, 1]
                g2 = q[e, 2]
                g3 = q[e, 3]
                r1 = width * (2.0 * uniforms[iu] - 1.0)
                r2 = width * (2.0 * uniforms[iu + 1] - 1.0)
                r3 = width * (2.0 * uniforms[iu + 2] - 1.0)
                nr = sqrt(1.0 + r1 * r1 + r2 * r2 + r3 * r3)
                a0 = 1.0 / nr
                a1 = r1 / nr
                a2 = r2 / nr
                a3 = r3 / nr
                h0 = a0 * g0 - a1 * g1 - a2 * g2 - a3 * g3
                h1 = a0 * g1 + a1 * g0 + a2 * g3 - a3 * g2
                h2 = a0 * g2 - a1 * g3 + a2 * g0 + a3 * g1
                h3 = a0 * g3 + a1 * g2 - a2 * g1 + a3 * g0
                counter = counter + 1
                s_old = 2.0 * (g0 * Q0 - g1 * Q1 - g2 * Q2 - g3 * Q3)
                s_new = 2.0 * (h0 * Q0 - h1 * Q1 - h2 * Q2 - h3 * Q3)
                ds = beta * (s_new - s_old)
                if ds >= 0.0 or uniforms[iu + 3] < exp(ds):
                    q[e, 0] = h0
                    q[e, 1] = h1
                    q[e, 2] = h2
                    q[e, 3] = h3
                    accepted = accepted + 1
                iu = iu + 4
                if counter >= RENORM_EVERY:
                    for f in range(q.shape[0]):
                        nn = sqrt(q[f, 0] * q[f, 0] + q[f, 1] * q[f, 1]
                                  + q[f, 2] * q[f, 2] + q[f, 3] * q[f, 3])
                        q[f, 0] = q[f, 0] / nn
                        q[f, 1] = q[f, 1] / nn
                        q[f, 2] = q[f, 2] / nn
                        q[f, 3] = q[f, 3] / nn
                    counter = 0
    return accepted, counter
