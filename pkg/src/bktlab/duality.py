"""Villain model on the wired square versus the integer height field on its planar dual.

The dual of the zero-boundary domain of side ``L`` is the free domain of side
``L + 1``; dual vertex ``(p - 1/2, q - 1/2)`` is stored as free site ``(p, q)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigInvalid, StateSpaceTooLarge
from .fields import (
    ModelParams,
    batch_means,
    contract,
    enumerate_iv,
    iv_mcmc,
    rng_stream,
    villain_estimate,
    villain_log_weight,
    villain_quadrature,
)
from .lattice import Kind, build_domain


@dataclass
class DualLattice:
    """Planar edges of the wired square with orientations and their dual edges.

    ``tail[e] -> head[e]`` is the orientation of primal edge ``e`` (indices of
    the zero domain, the wired vertex last).  ``right[e]`` and ``left[e]`` are the
    dual vertices (indices of the free domain of side ``L + 1``) on either side
    of the oriented edge; the dual edge points from right to left.
    """

    L: int
    tail: np.ndarray
    head: np.ndarray
    right: np.ndarray
    left: np.ndarray

    @property
    def primal(self):
        return build_domain(Kind.ZERO, self.L)

    @property
    def dual(self):
        return build_domain(Kind.FREE, self.L + 1)

    @property
    def n_edges(self) -> int:
        return len(self.tail)


def dual_lattice(L: int) -> DualLattice:
    """Orient every planar edge and attach its crossing dual edge.

    Horizontal edges point to smaller first coordinate, vertical edges to
    smaller second coordinate, and every edge at the wired vertex points from
    the wired vertex into the square.
    """
    if L <= 1:
        raise ConfigInvalid("need L > 1")
    zero = build_domain(Kind.ZERO, L)
    free = build_domain(Kind.FREE, L + 1)
    z = zero.z_index
    tails, heads, rights, lefts = [], [], [], []

    def add(k, l, pk, pl):
        # pk, pl: plane positions of tail and head
        mid = ((pk[0] + pl[0]) / 2, (pk[1] + pl[1]) / 2)
        dx, dy = pl[0] - pk[0], pl[1] - pk[1]
        r = (mid[0] + dy / 2 + 0.5, mid[1] - dx / 2 + 0.5)
        lf = (mid[0] - dy / 2 + 0.5, mid[1] + dx / 2 + 0.5)
        tails.append(k)
        heads.append(l)
        rights.append(free.idx((int(round(r[0])), int(round(r[1])))))
        lefts.append(free.idx((int(round(lf[0])), int(round(lf[1])))))

    for a in range(L):
        for b in range(L):
            if a + 1 < L:
                add(zero.idx((a + 1, b)), zero.idx((a, b)), (a + 1, b), (a, b))
            if b + 1 < L:
                add(zero.idx((a, b + 1)), zero.idx((a, b)), (a, b + 1), (a, b))
    for b in range(L):
        add(z, zero.idx((0, b)), (-1, b), (0, b))
        add(z, zero.idx((L - 1, b)), (L, b), (L - 1, b))
    for a in range(L):
        add(z, zero.idx((a, 0)), (a, -1), (a, 0))
        add(z, zero.idx((a, L - 1)), (a, L), (a, L - 1))
    arr = lambda x: np.array(x, dtype=np.int64)
    return DualLattice(L, arr(tails), arr(heads), arr(rights), arr(lefts))


def check_isomorphism(dl: DualLattice) -> dict:
    """Dual edges are exactly the free edges of side ``L + 1``, each crossed once."""
    free = dl.dual
    pairs = np.sort(np.stack([dl.right, dl.left], axis=1), axis=1)
    mine = sorted(map(tuple, pairs.tolist()))
    ref = sorted(map(tuple, free.edges.tolist()))
    zero = dl.primal
    prim = np.sort(np.stack([dl.tail, dl.head], axis=1), axis=1)
    keys, counts = np.unique(prim, axis=0, return_counts=True)
    mult = {tuple(k): c for k, c in zip(keys.tolist(), counts)}
    ref_mult = {tuple(e): m for e, m in zip(zero.edges.tolist(), zero.mult.tolist())}
    return {
        "n_dual_vertices": free.n,
        "edges_match": mine == ref,
        "bijective": len(set(mine)) == len(mine),
        "primal_multiplicities_match": mult == ref_mult,
    }


def chi(dl: DualLattice, x) -> np.ndarray:
    """Indicator of the oriented edges on the horizontal path from ``x`` to the wired vertex."""
    zero = dl.primal
    x0, x1 = int(x[0]), int(x[1])
    out = np.zeros(dl.n_edges, dtype=np.int64)
    for j in range(x0, dl.L - 1):
        k, l = zero.idx((j + 1, x1)), zero.idx((j, x1))
        out[(dl.tail == k) & (dl.head == l)] = 1
    # corner sites have two wired edges; the path leaves across the far side
    out[_far_side_edge(dl, x1)] = 1
    return out


def _far_side_edge(dl: DualLattice, x1: int) -> int:
    """Index of the wired edge leaving ``(L - 1, x1)`` across the side ``a = L - 1/2``."""
    L = dl.L
    free = dl.dual
    target = {free.idx((L, x1)), free.idx((L, x1 + 1))}
    for e in range(dl.n_edges):
        if {int(dl.right[e]), int(dl.left[e])} == target:
            return e
    raise AssertionError("missing boundary edge")


def divergence(dl: DualLattice, n) -> np.ndarray:
    """``(delta n)_k``: outgoing minus incoming flow at every primal vertex; ``n`` has shape (..., E)."""
    n = np.asarray(n)
    out = np.zeros(n.shape[:-1] + (dl.primal.n,), dtype=n.dtype)
    for e in range(dl.n_edges):
        out[..., dl.tail[e]] += n[..., e]
        out[..., dl.head[e]] -= n[..., e]
    return out


def dual_gradient(dl: DualLattice, m) -> np.ndarray:
    """``n_e = m_right - m_left`` for dual heights ``m`` of shape (..., n_dual)."""
    m = np.asarray(m)
    return m[..., dl.right] - m[..., dl.left]


def integrate_flow(dl: DualLattice, n, v: int = 0):
    """Heights with ``m_v = 0`` along a spanning tree, and whether ``n`` is their gradient."""
    n = np.asarray(n)
    nd = dl.dual.n
    adj = {i: [] for i in range(nd)}
    for e in range(dl.n_edges):
        r, l = int(dl.right[e]), int(dl.left[e])
        adj[l].append((r, e, 1))
        adj[r].append((l, e, -1))
    m = np.zeros(n.shape[:-1] + (nd,), dtype=n.dtype)
    seen = {v}
    queue = [v]
    while queue:
        p = queue.pop(0)
        for q, e, s in adj[p]:
            if q not in seen:
                # n_e = m_r - m_l
                m[..., q] = m[..., p] + s * n[..., e]
                seen.add(q)
                queue.append(q)
    ok = np.all(dual_gradient(dl, m) == n, axis=-1)
    return m, ok


def flow_gradient_equivalence(L: int = 2, values=(-1, 0, 1), chunk: int = 100_000) -> dict:
    """Exhaustive check that zero divergence is equivalent to being a dual gradient."""
    dl = dual_lattice(L)
    E = dl.n_edges
    vals = np.array(values, dtype=np.int64)
    total = len(vals) ** E
    agree = 0
    n_div_free = 0
    idx = np.arange(total, dtype=np.int64)
    for start in range(0, total, chunk):
        block = idx[start:start + chunk]
        digits = (block[:, None] // (len(vals) ** np.arange(E))[None, :]) % len(vals)
        n = vals[digits]
        div0 = np.all(divergence(dl, n) == 0, axis=1)
        _, grad = integrate_flow(dl, n)
        agree += int(np.sum(div0 == grad))
        n_div_free += int(div0.sum())
    return {"configurations": total, "agree": agree, "divergence_free": n_div_free, "ok": agree == total}


def fourier_edge_weight(theta: float, beta: float, chi_value: float, n_cut: int = 20):
    """Both sides of the Poisson identity for the shifted wrapped Gaussian.

    ``lhs = sum_m exp(-(beta/2)(theta + 2 pi m)^2 - i chi theta)`` and
    ``rhs = (2 pi beta)^{-1/2} sum_n exp(-(n + chi)^2 / (2 beta)) exp(i n theta)``,
    both truncated at ``n_cut``.  The identity holds for integer ``chi``.
    Returns ``(lhs, rhs, tail_bound)``.
    """
    if n_cut < 1:
        raise ConfigInvalid("n_cut must be at least 1")
    m = np.arange(-n_cut, n_cut + 1)
    lhs = np.sum(np.exp(-0.5 * beta * (theta + 2 * np.pi * m) ** 2)) * np.exp(-1j * chi_value * theta)
    rhs = np.sum(np.exp(-((m + chi_value) ** 2) / (2 * beta)) * np.exp(1j * m * theta)) / math.sqrt(2 * math.pi * beta)
    far = np.arange(n_cut + 1, n_cut + 400)
    t1 = 2 * np.exp(-0.5 * beta * (2 * np.pi * far - abs(theta)) ** 2).sum()
    t2 = 2 * np.exp(-((far - abs(chi_value)) ** 2) / (2 * beta)).sum() / math.sqrt(2 * math.pi * beta)
    return complex(lhs), complex(rhs), float(t1 + t2)


def observable_tilt(dl: DualLattice, x, beta: float):
    """Write the dual observable as ``exp(-c) exp(<m, g>)``; returns ``(g, c)``.

    The observable is ``exp(-(1/beta) sum_path (n_e + 1/2))`` over the path edges.
    """
    path = np.flatnonzero(chi(dl, x))
    g = np.zeros(dl.dual.n)
    for e in path:
        g[dl.right[e]] -= 1.0 / beta
        g[dl.left[e]] += 1.0 / beta
    return g, len(path) / (2.0 * beta)


def iv_side(L: int, beta: float, x, K: int = 8, method: str = "auto"):
    """Exact dual expectation at inverse temperature ``1/beta``; returns ``(value, IVResult)``."""
    dl = dual_lattice(L)
    g, c = observable_tilt(dl, x, beta)
    res = enumerate_iv(dl.dual, ModelParams(beta=1.0 / beta, v=0, K=K), g, method=method)
    return math.exp(-c) * res.mgf, res


def iv_side_mc(L: int, beta: float, x, n_sweeps: int, burn_in: int = 500, seed: int = 0):
    dl = dual_lattice(L)
    g, c = observable_tilt(dl, x, beta)
    m = iv_mcmc(dl.dual, ModelParams(beta=1.0 / beta, v=0, seed=seed), n_sweeps, burn_in)
    return batch_means(np.exp(m @ g - c))


def villain_log_partition(L: int, beta: float, m_cut: int = 8, nodes: int = 64) -> float:
    """``log Z`` of the Villain model with angles in ``[-pi, pi)`` and the wired angle at 0."""
    dom = build_domain(Kind.ZERO, L)
    t, w = np.polynomial.legendre.leggauss(nodes)
    th, wq = np.pi * t, np.pi * w
    z = dom.z_index
    d = dom.n_sites
    unary = [np.log(wq) for _ in range(d)]
    pairs = []
    for (a, b), m in zip(dom.edges, dom.mult):
        if b == z:
            unary[a] = unary[a] + m * villain_log_weight(th, beta, m_cut)
        else:
            pairs.append(((int(a), int(b)), m * villain_log_weight(th[:, None] - th[None, :], beta, m_cut)))
    shift = 0.0
    facs = []
    for (a, b), p in pairs:
        s = float(p.max())
        shift += s
        facs.append(((a, b), np.exp(p - s)[None]))
    for j, u in enumerate(unary):
        s = float(u.max())
        shift += s
        facs.append(((j,), np.exp(u - s)[None]))
    ls, val = contract(facs, d, nodes)
    return ls + math.log(val[0]) + shift


def normalization_identity(L: int, beta: float, K: int = 8, m_cut: int = 8, nodes: int = 64) -> dict:
    """``Z_Vil = (2 pi)^{L^2} (2 pi beta)^{-|E|/2} Z_IV(1/beta)`` in logarithms."""
    dl = dual_lattice(L)
    lhs = villain_log_partition(L, beta, m_cut, nodes)
    res = enumerate_iv(dl.dual, ModelParams(beta=1.0 / beta, v=0, K=K), None)
    rhs = L * L * math.log(2 * math.pi) - 0.5 * dl.n_edges * math.log(2 * math.pi * beta) + res.log_Z
    return {"log_Z_villain": float(lhs), "log_Z_dual": float(rhs), "diff": float(lhs - rhs),
            "rel_diff": math.expm1(lhs - rhs)}


def duality_check(L: int, beta: float, x, K: int = 8, m_cut: int = 8, nodes: int = 64,
                  n_sweeps: int = 20000, burn_in: int = 1000, seed: int = 0, exact_max_L: int = 3,
                  dual_mc: bool = False) -> dict:
    """Both sides of the Villain / dual height identity.

    Up to ``exact_max_L`` the Villain side is quadrature and the dual side an
    exact sum (tolerance ``1e-6``).  Beyond that the Villain side is Monte Carlo
    against the exact dual sum when it fits in memory, otherwise Monte Carlo on
    both sides (tolerance 4 combined SE).  ``dual_mc`` forces Monte Carlo on
    the dual side as well.
    """
    x = (int(x[0]), int(x[1]))
    out = {"L": L, "beta": float(beta), "x": list(x)}
    if L <= exact_max_L:
        vil = villain_quadrature(build_domain(Kind.ZERO, L), beta, x, m_cut=m_cut, nodes=nodes)
        iv, res = iv_side(L, beta, x, K)
        tol = 1e-6
        out.update(villain=float(vil), iv=float(iv), villain_method="quadrature", iv_method=res.method,
                   iv_truncation=float(res.truncation))
    else:
        p = ModelParams(beta=beta, m_cut=m_cut)
        rv = villain_estimate(build_domain(Kind.ZERO, L), p, x, n_sweeps, burn_in, rng=rng_stream(seed, 0))
        res = None
        if not dual_mc:
            try:
                iv, res = iv_side(L, beta, x, K)
                iv_se, method = 0.0, res.method
            except StateSpaceTooLarge:
                pass
        if res is None:
            iv, iv_se = iv_side_mc(L, beta, x, n_sweeps, burn_in, seed=seed + 1)
            method = "mcmc"
        tol = 4 * math.hypot(rv["cos_se"], iv_se)
        out.update(villain=float(rv["cos"]), villain_se=float(rv["cos_se"]), iv=float(iv), iv_se=float(iv_se),
                   villain_method="mcmc", iv_method=method)
    out["diff"] = out["villain"] - out["iv"]
    out["tolerance"] = tol
    out["ok"] = bool(abs(out["diff"]) <= tol)
    return out
