# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: heat-bath sweeps and exhaustive integer-field sums.

Every routine mirrors ``_kernels_py`` operation for operation so that both
backends produce bit-identical output for the same uniforms.
"""
import numpy as np

from libc.math cimport exp, sqrt, floor, ceil, M_PI

TRUNC_SD = 12.0


def iv_sweep(long long[::1] m, long long[::1] ptr, long long[::1] nbr, double[::1] mult,
             long long[::1] order, double beta, double[::1] u):
    """One heat-bath pass over ``order`` for the integer field, in place."""
    cdef Py_ssize_t t, p, j, i
    cdef double deg, s, mu, prec, sd, tot, target, acc, x
    cdef long long lo, hi, c
    for t in range(order.shape[0]):
        j = order[t]
        deg = 0.0
        s = 0.0
        for p in range(ptr[j], ptr[j + 1]):
            deg = deg + mult[p]
            s = s + mult[p] * m[nbr[p]]
        mu = s / deg
        prec = beta * deg
        sd = 1.0 / sqrt(prec)
        lo = <long long> ceil(mu - TRUNC_SD * sd)
        hi = <long long> floor(mu + TRUNC_SD * sd)
        c = <long long> floor(mu + 0.5)
        if lo > c:
            lo = c
        if hi < c:
            hi = c
        tot = 0.0
        for i in range(lo, hi + 1):
            x = i - mu
            tot = tot + exp(-0.5 * prec * x * x)
        target = u[t] * tot
        acc = 0.0
        m[j] = hi
        for i in range(lo, hi + 1):
            x = i - mu
            acc = acc + exp(-0.5 * prec * x * x)
            if acc > target:
                m[j] = i
                break


def villain_sweep(double[::1] theta, long long[::1] ptr, long long[::1] nbr, double[::1] mult,
                  long long[::1] order, double[::1] logw, long long grid,
                  double[::1] u1, double[::1] u2, double[::1] buf):
    """Heat-bath pass for the angle field with a binned inverse CDF on ``grid`` points.

    ``logw`` is tabulated on the same ``grid`` points of ``[-pi, pi)`` and is
    interpolated linearly; bin centres are shifted by the same fraction of a
    cell for every bin, so one base index per neighbour suffices.
    """
    cdef Py_ssize_t t, p, j, g
    cdef double h = 2.0 * M_PI / grid
    cdef double y0, fl, fr, wt, top, tot, target, acc
    cdef long long i0, i, pick
    for t in range(order.shape[0]):
        j = order[t]
        for g in range(grid):
            buf[g] = 0.0
        for p in range(ptr[j], ptr[j + 1]):
            y0 = (0.5 * h - theta[nbr[p]]) / h
            fl = floor(y0)
            fr = y0 - fl
            i0 = (<long long> fl) % grid
            if i0 < 0:
                i0 = i0 + grid
            wt = mult[p]
            for g in range(grid):
                i = i0 + g
                if i >= grid:
                    i = i - grid
                if i + 1 < grid:
                    buf[g] = buf[g] + wt * ((1.0 - fr) * logw[i] + fr * logw[i + 1])
                else:
                    buf[g] = buf[g] + wt * ((1.0 - fr) * logw[i] + fr * logw[0])
        top = buf[0]
        for g in range(grid):
            if buf[g] > top:
                top = buf[g]
        tot = 0.0
        for g in range(grid):
            buf[g] = exp(buf[g] - top)
            tot = tot + buf[g]
        target = u1[t] * tot
        acc = 0.0
        pick = grid - 1
        for g in range(grid):
            acc = acc + buf[g]
            if acc > target:
                pick = g
                break
        theta[j] = -M_PI + (pick + u2[t]) * h


def iv_exhaustive(long long[:, ::1] edges, double[::1] coupling, double[::1] f, long long K):
    """Sums over all of ``{-K..K}^d``: returns ``(Z, sum w e^X, sum w X^2)``.

    ``edges`` holds free-variable indices, ``-1`` standing for the pinned vertex;
    ``coupling`` is ``beta * mult / 2`` per edge and ``X = <m, f>``.
    """
    cdef Py_ssize_t d = f.shape[0]
    cdef Py_ssize_t E = edges.shape[0]
    cdef Py_ssize_t e, k
    cdef long long[::1] m = np.full(d, -K, dtype=np.int64)
    cdef double Z = 0.0, Zf = 0.0, S2 = 0.0, en, X, w, a, b
    while True:
        en = 0.0
        for e in range(E):
            a = m[edges[e, 0]] if edges[e, 0] >= 0 else 0.0
            b = m[edges[e, 1]] if edges[e, 1] >= 0 else 0.0
            en = en + coupling[e] * (a - b) * (a - b)
        X = 0.0
        for k in range(d):
            X = X + f[k] * m[k]
        w = exp(-en)
        Z = Z + w
        Zf = Zf + w * exp(X)
        S2 = S2 + w * X * X
        k = 0
        while k < d:
            if m[k] < K:
                m[k] = m[k] + 1
                break
            m[k] = -K
            k = k + 1
        if k == d:
            break
    return Z, Zf, S2
