"""numba kernels for the fixed-step trapezoidal integrator."""

import numpy as np
from numba import njit


@njit(cache=True)
def _lu_factor(a, piv):
    n = a.shape[0]
    for k in range(n):
        p = k
        best = abs(a[k, k])
        for i in range(k + 1, n):
            if abs(a[i, k]) > best:
                best = abs(a[i, k])
                p = i
        piv[k] = p
        if p != k:
            for j in range(n):
                tmp = a[k, j]
                a[k, j] = a[p, j]
                a[p, j] = tmp
        d = a[k, k]
        if d == 0.0:
            return False
        for i in range(k + 1, n):
            a[i, k] /= d
            f = a[i, k]
            if f != 0.0:
                for j in range(k + 1, n):
                    a[i, j] -= f * a[k, j]
    return True


@njit(cache=True)
def _lu_solve(lu, piv, b):
    n = lu.shape[0]
    for k in range(n):
        p = piv[k]
        if p != k:
            tmp = b[k]
            b[k] = b[p]
            b[p] = tmp
    for i in range(n):
        s = b[i]
        for j in range(i):
            s -= lu[i, j] * b[j]
        b[i] = s
    for i in range(n - 1, -1, -1):
        s = b[i]
        for j in range(i + 1, n):
            s -= lu[i, j] * b[j]
        b[i] = s / lu[i, i]


@njit(cache=True)
def trapezoid_period(x0, q_lti, g_lti, inc, cmod, gmod, bvec, src, h, out):
    """Integrate one common period.

    d/dt(Q(t) x) + G(t) x = bvec * src(t), with
    Q(t) = q_lti + sum_m cmod[n, m] inc_m inc_m^T, G likewise with gmod.
    ``cmod``, ``gmod``, ``src`` are sampled at the period's grid points
    (index taken modulo their length); out[0] = x0, out[n] = x(t_n).
    Returns False if a step matrix is singular.
    """
    ns = cmod.shape[0]
    nx = x0.shape[0]
    nm = inc.shape[0]
    lu = np.empty((nx, nx))
    piv = np.empty(nx, dtype=np.int64)
    rhs = np.empty(nx)
    have = False
    last_c = np.empty(nm)
    last_g = np.empty(nm)
    for i in range(nx):
        out[0, i] = x0[i]
    for n in range(ns):
        n1 = (n + 1) % ns
        # rhs = (Q_n - h/2 G_n) x_n + h/2 (b_n + b_{n+1})
        xn = out[n]
        for i in range(nx):
            s = 0.0
            for j in range(nx):
                s += (q_lti[i, j] - 0.5 * h * g_lti[i, j]) * xn[j]
            rhs[i] = s + 0.5 * h * bvec[i] * (src[n] + src[n1])
        for m in range(nm):
            dv = 0.0
            for j in range(nx):
                dv += inc[m, j] * xn[j]
            coef = (cmod[n, m] - 0.5 * h * gmod[n, m]) * dv
            for i in range(nx):
                rhs[i] += coef * inc[m, i]
        same = have
        if same:
            for m in range(nm):
                if cmod[n1, m] != last_c[m] or gmod[n1, m] != last_g[m]:
                    same = False
                    break
        if not same:
            for i in range(nx):
                for j in range(nx):
                    lu[i, j] = q_lti[i, j] + 0.5 * h * g_lti[i, j]
            for m in range(nm):
                w = cmod[n1, m] + 0.5 * h * gmod[n1, m]
                last_c[m] = cmod[n1, m]
                last_g[m] = gmod[n1, m]
                for i in range(nx):
                    if inc[m, i] != 0.0:
                        for j in range(nx):
                            lu[i, j] += w * inc[m, i] * inc[m, j]
            if not _lu_factor(lu, piv):
                return False
            have = True
        _lu_solve(lu, piv, rhs)
        for i in range(nx):
            out[n + 1, i] = rhs[i]
    return True
