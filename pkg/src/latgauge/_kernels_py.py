"""Pure-Python sweep kernels.

These mirror ``_kernels.pyx`` operation for operation: same loop order, same
floating-point expression order and the same libm calls, so both backends
produce bit-identical chains from the same uniforms.

Common arguments:
    order: edges to update, in sweep order.
    inc_ptr, inc_plaq, inc_pos: CSR incidence of plaquettes on edges.
    plaq_edges, plaq_signs: ``(P, 4)`` plaquette edges and orientations.
    uniforms: pre-drawn U[0,1) numbers, consumed sequentially.
"""
import math

TWO_PI = 2.0 * math.pi
RENORM_EVERY = 1 << 20


def sweep_cyclic(values, order, inc_ptr, inc_plaq, inc_pos, plaq_edges, plaq_signs,
                 n, beta, costab, uniforms, n_sweeps):
    """Heat-bath sweeps for Z_n; one uniform per edge update."""
    iu = 0
    n_order = len(order)
    logw = [0.0] * n
    w = [0.0] * n
    for _ in range(n_sweeps):
        for i in range(n_order):
            e = order[i]
            ss = []
            ts = []
            for k in range(inc_ptr[e], inc_ptr[e + 1]):
                p = inc_plaq[k]
                pos = inc_pos[k]
                t = 0
                for j in range(4):
                    if j != pos:
                        t += plaq_signs[p, j] * values[plaq_edges[p, j]]
                ss.append(plaq_signs[p, pos])
                ts.append(t)
            mx = -1e300
            for g in range(n):
                acc = 0.0
                for k in range(len(ss)):
                    acc += costab[(ss[k] * g + ts[k]) % n]
                logw[g] = beta * acc
                if logw[g] > mx:
                    mx = logw[g]
            tot = 0.0
            for g in range(n):
                w[g] = math.exp(logw[g] - mx)
                tot += w[g]
            u = uniforms[iu] * tot
            iu += 1
            c = 0.0
            new = n - 1
            for g in range(n):
                c += w[g]
                if u < c:
                    new = g
                    break
            values[e] = new
    return iu


def _wrap(x):
    x = math.fmod(x, TWO_PI)
    if x < 0.0:
        x += TWO_PI
    if x >= TWO_PI:
        x -= TWO_PI
    return x


def sweep_circle(theta, order, inc_ptr, inc_plaq, inc_pos, plaq_edges, plaq_signs,
                 beta, width, uniforms, n_sweeps):
    """Metropolis sweeps for U(1); two uniforms per edge update."""
    iu = 0
    accepted = 0
    n_order = len(order)
    for _ in range(n_sweeps):
        for i in range(n_order):
            e = order[i]
            ss = []
            ts = []
            for k in range(inc_ptr[e], inc_ptr[e + 1]):
                p = inc_plaq[k]
                pos = inc_pos[k]
                t = 0.0
                for j in range(4):
                    if j != pos:
                        t += plaq_signs[p, j] * theta[plaq_edges[p, j]]
                ss.append(plaq_signs[p, pos])
                ts.append(t)
            old = theta[e]
            new = _wrap(old + width * (2.0 * uniforms[iu] - 1.0))
            s_old = 0.0
            s_new = 0.0
            for k in range(len(ss)):
                s_old += math.cos(ss[k] * old + ts[k])
                s_new += math.cos(ss[k] * new + ts[k])
            ds = beta * (s_new - s_old)
            if ds >= 0.0 or uniforms[iu + 1] < math.exp(ds):
                theta[e] = new
                accepted += 1
            iu += 2
    return accepted


def _qmul(a0, a1, a2, a3, b0, b1, b2, b3):
    return (a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0)


def sweep_su2(q, order, inc_ptr, inc_plaq, inc_pos, plaq_edges, plaq_signs,
              beta, width, uniforms, n_sweeps, counter):
    """Metropolis sweeps for SU(2); four uniforms per edge update.

    Returns ``(accepted, counter)``; every ``RENORM_EVERY`` multiplications
    all links are projected back to unit norm.
    """
    iu = 0
    accepted = 0
    n_order = len(order)
    n_edges = q.shape[0]
    for _ in range(n_sweeps):
        for i in range(n_order):
            e = order[i]
            Q0 = Q1 = Q2 = Q3 = 0.0
            for k in range(inc_ptr[e], inc_ptr[e + 1]):
                p = inc_plaq[k]
                pos = inc_pos[k]
                a0, a1, a2, a3 = 1.0, 0.0, 0.0, 0.0
                for r in range(1, 4):
                    j = (pos + r) % 4
                    f = plaq_edges[p, j]
                    sg = plaq_signs[p, j]
                    a0, a1, a2, a3 = _qmul(a0, a1, a2, a3,
                                           q[f, 0], sg * q[f, 1], sg * q[f, 2], sg * q[f, 3])
                if plaq_signs[p, pos] < 0:
                    a1, a2, a3 = -a1, -a2, -a3
                Q0 += a0
                Q1 += a1
                Q2 += a2
                Q3 += a3
            g0, g1, g2, g3 = q[e, 0], q[e, 1], q[e, 2], q[e, 3]
            r1 = width * (2.0 * uniforms[iu] - 1.0)
            r2 = width * (2.0 * uniforms[iu + 1] - 1.0)
            r3 = width * (2.0 * uniforms[iu + 2] - 1.0)
            nr = math.sqrt(1.0 + r1 * r1 + r2 * r2 + r3 * r3)
            h0, h1, h2, h3 = _qmul(1.0 / nr, r1 / nr, r2 / nr, r3 / nr, g0, g1, g2, g3)
            counter += 1
            s_old = 2.0 * (g0 * Q0 - g1 * Q1 - g2 * Q2 - g3 * Q3)
            s_new = 2.0 * (h0 * Q0 - h1 * Q1 - h2 * Q2 - h3 * Q3)
            ds = beta * (s_new - s_old)
            if ds >= 0.0 or uniforms[iu + 3] < math.exp(ds):
                q[e, 0] = h0
                q[e, 1] = h1
                q[e, 2] = h2
                q[e, 3] = h3
                accepted += 1
            iu += 4
            if counter >= RENORM_EVERY:
                for f in range(n_edges):
                    nn = math.sqrt(q[f, 0] * q[f, 0] + q[f, 1] * q[f, 1]
                                   + q[f, 2] * q[f, 2] + q[f, 3] * q[f, 3])
                    q[f, 0] /= nn
                    q[f, 1] /= nn
                    q[f, 2] /= nn
                    q[f, 3] /= nn
                counter = 0
    return accepted, counter
