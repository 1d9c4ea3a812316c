"""Pure-Python versions of the compiled kernels, same arithmetic in the same order."""
import math


TRUNC_SD = 12.0


def iv_sweep(m, ptr, nbr, mult, order, beta, u):
    for t in range(len(order)):
        j = order[t]
        deg = 0.0
        s = 0.0
        for p in range(ptr[j], ptr[j + 1]):
            deg = deg + mult[p]
            s = s + mult[p] * m[nbr[p]]
        mu = s / deg
        prec = beta * deg
        sd = 1.0 / math.sqrt(prec)
        lo = math.ceil(mu - TRUNC_SD * sd)
        hi = math.floor(mu + TRUNC_SD * sd)
        c = math.floor(mu + 0.5)
        lo = min(lo, c)
        hi = max(hi, c)
        tot = 0.0
        for i in range(lo, hi + 1):
            x = i - mu
            tot = tot + math.exp(-0.5 * prec * x * x)
        target = u[t] * tot
        acc = 0.0
        m[j] = hi
        for i in range(lo, hi + 1):
            x = i - mu
            acc = acc + math.exp(-0.5 * prec * x * x)
            if acc > target:
                m[j] = i
                break


def villain_sweep(theta, ptr, nbr, mult, order, logw, grid, u1, u2, buf):
    h = 2.0 * math.pi / grid
    for t in range(len(order)):
        j = order[t]
        for g in range(grid):
            buf[g] = 0.0
        for p in range(ptr[j], ptr[j + 1]):
            y0 = (0.5 * h - theta[nbr[p]]) / h
            fl = math.floor(y0)
            fr = y0 - fl
            i0 = int(fl) % grid
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
            buf[g] = math.exp(buf[g] - top)
            tot = tot + buf[g]
        target = u1[t] * tot
        acc = 0.0
        pick = grid - 1
        for g in range(grid):
            acc = acc + buf[g]
            if acc > target:
                pick = g
                break
        theta[j] = -math.pi + (pick + u2[t]) * h


def iv_exhaustive(edges, coupling, f, K):
    d = len(f)
    E = len(edges)
    m = [-K] * d
    Z = Zf = S2 = 0.0
    edges = [(int(a), int(b)) for a, b in edges]
    while True:
        en = 0.0
        for e in range(E):
            a = m[edges[e][0]] if edges[e][0] >= 0 else 0.0
            b = m[edges[e][1]] if edges[e][1] >= 0 else 0.0
            en = en + coupling[e] * (a - b) * (a - b)
        X = 0.0
        for k in range(d):
            X = X + f[k] * m[k]
        w = math.exp(-en)
        Z = Z + w
        Zf = Zf + w * math.exp(X)
        S2 = S2 + w * X * X
        k = 0
        while k < d:
            if m[k] < K:
                m[k] += 1
                break
            m[k] = -K
            k += 1
        if k == d:
            break
    return Z, Zf, S2
