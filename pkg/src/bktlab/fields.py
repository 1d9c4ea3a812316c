"""Samplers and exact sums for the Gaussian, integer-valued and Villain fields.

Graph arguments may be a ``LatticeDomain`` or a ``SimpleGraph``; both expose
``n``, ``edges``, ``mult``, ``adjacency``, ``laplacian`` and ``idx``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy import integrate, special

from . import kernels
from .errors import ConfigInvalid, FactorizationFailure, StateSpaceTooLarge
from .lattice import Kind, LatticeDomain
from .weights import TrigWeight

TRUNCATION_TOL = 1e-10
MAX_ENTRIES = 2 ** 26
MAX_LATTICE_POINTS = 4_000_000
VILLAIN_GRID = 4096
N_BATCHES = 32


class SimpleGraph:
    """Small multigraph on vertices ``0..n-1`` with the lattice-domain interface."""

    kind = "graph"

    def __init__(self, n: int, edges, mult=None):
        self.n = int(n)
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        e = np.sort(e, axis=1)
        self.edges = e
        self.mult = np.ones(len(e), dtype=np.int64) if mult is None else np.asarray(mult, dtype=np.int64)

    def idx(self, v) -> int:
        v = int(v)
        if not 0 <= v < self.n:
            raise ConfigInvalid(f"vertex {v} outside 0..{self.n - 1}")
        return v

    @cached_property
    def degree(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        np.add.at(deg, self.edges[:, 0], self.mult)
        np.add.at(deg, self.edges[:, 1], self.mult)
        return deg

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        e, m = self.edges, self.mult.astype(float)
        A = sp.coo_matrix((np.r_[m, m], (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(self.n, self.n))
        return A.tocsr()

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        return (self.adjacency - sp.diags(self.degree.astype(float))).tocsr()

    def __repr__(self):
        return f"SimpleGraph(n={self.n}, edges={self.edges.tolist()})"


def path_graph(n: int = 2) -> SimpleGraph:
    return SimpleGraph(n, [(i, i + 1) for i in range(n - 1)])


@dataclass
class ModelParams:
    beta: float
    v: object = 0
    weights: object = None
    seed: int = 0
    K: int = 10
    m_cut: int = 5

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigInvalid("beta must be positive")
        if self.K < 1 or self.m_cut < 1:
            raise ConfigInvalid("cutoffs must be at least 1")


@dataclass
class FieldConfig:
    kind: str  # "gff", "iv" or "villain"
    values: np.ndarray
    v: int

    def valid(self) -> bool:
        x = np.asarray(self.values)
        if self.kind == "gff":
            return bool(-np.pi <= x[self.v] < np.pi)
        if self.kind == "iv":
            return bool(x[self.v] == 0 and np.issubdtype(x.dtype, np.integer))
        if self.kind == "villain":
            rest = np.delete(x, self.v)
            return bool(x[self.v] == 0 and np.all((rest >= -np.pi) & (rest < np.pi)))
        return False


def rng_stream(seed: int, chain: int = 0) -> np.random.Generator:
    """Counter-based stream; distinct ``chain`` values give independent streams."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(chain)])))


def batch_means(x, n_batches: int = N_BATCHES):
    """Mean and batch-means standard error."""
    x = np.asarray(x, dtype=float)
    b = len(x) // n_batches
    if b < 1:
        raise ValueError("fewer samples than batches")
    means = x[: b * n_batches].reshape(n_batches, b).mean(axis=1)
    return float(x.mean()), float(means.std(ddof=1) / math.sqrt(n_batches))


def _vertex(graph, v) -> int:
    return graph.idx(v)


def _neighbour_csr(graph):
    A = graph.adjacency.tocsr()
    A.sort_indices()
    return A.indptr.astype(np.int64), A.indices.astype(np.int64), A.data.astype(float)


# Gaussian free field -------------------------------------------------------


def grounded_precision(graph, v=0) -> np.ndarray:
    """``-Lap`` with the row and column of ``v`` removed (dense)."""
    v = _vertex(graph, v)
    K = -graph.laplacian.toarray()
    keep = np.delete(np.arange(graph.n), v)
    return K[np.ix_(keep, keep)]


class GroundedGreen:
    """Inverse of the grounded precision; ``form(f)`` is ``<f, -Lap^{-1} f>`` for mean-zero ``f``."""

    def __init__(self, graph, v=0):
        self.graph = graph
        self.v = _vertex(graph, v)
        self.keep = np.delete(np.arange(graph.n), self.v)
        A = grounded_precision(graph, self.v)
        try:
            self.chol = np.linalg.cholesky(A)
        except np.linalg.LinAlgError as exc:
            raise FactorizationFailure(str(exc)) from exc
        self.A = A
        self.inv = sla.cho_solve((self.chol, True), np.eye(len(A)))

    def restrict(self, f) -> np.ndarray:
        return np.asarray(f, dtype=float)[..., self.keep]

    def form(self, f, h=None) -> float:
        fr = self.restrict(f)
        hr = fr if h is None else self.restrict(h)
        return float(fr @ self.inv @ hr)

    def shift(self, f, beta: float) -> np.ndarray:
        """``sigma`` with ``(-Lap) sigma = f / beta`` and ``sigma_v = 0``."""
        out = np.zeros(self.graph.n)
        out[self.keep] = self.inv @ self.restrict(f) / beta
        return out


def sample_gff(graph, params: ModelParams, n_samples: int, rng=None) -> np.ndarray:
    """Exact draws, shape ``(n_samples, n)``: uniform ``phi_v`` plus Gaussian increments."""
    rng = rng_stream(params.seed) if rng is None else rng
    G = GroundedGreen(graph, params.v)
    z = rng.standard_normal((len(G.keep), n_samples))
    psi = sla.solve_triangular(G.chol.T, z, lower=False) / math.sqrt(params.beta)
    phi_v = rng.uniform(-np.pi, np.pi, n_samples)
    out = np.repeat(phi_v[:, None], graph.n, axis=1)
    out[:, G.keep] += psi.T
    return out


def gff_laplace_exact(graph, beta: float, f, v=0) -> float:
    """``exp(<f, -Lap^{-1} f> / (2 beta))`` for mean-zero ``f``."""
    return math.exp(GroundedGreen(graph, v).form(f) / (2.0 * beta))


def compact_factor(s: float, quadrature: bool = False) -> complex:
    """``(1/2pi) int_{-pi}^{pi} exp(i s x) dx`` for the uniform zero-mode."""
    if not quadrature:
        return complex(np.sinc(s))
    re = integrate.quad(lambda x: math.cos(s * x), -math.pi, math.pi, epsabs=1e-14, epsrel=1e-14, limit=200)[0]
    im = integrate.quad(lambda x: math.sin(s * x), -math.pi, math.pi, epsabs=1e-14, epsrel=1e-14, limit=200)[0]
    return complex(re, im) / (2.0 * math.pi)


def gff_characteristic(G: GroundedGreen, beta: float, u, quadrature: bool = False) -> complex:
    """``E[exp(i <phi, u>)]`` under the Gaussian field pinned by a uniform ``phi_v``."""
    u = np.asarray(u, dtype=float)
    ur = G.restrict(u)
    return compact_factor(float(u.sum()), quadrature) * math.exp(-float(ur @ G.inv @ ur) / (2.0 * beta))


# lattice point enumeration --------------------------------------------------


def _theta(a: float) -> float:
    """``sum_{t in Z} exp(-a t^2)``."""
    tot, t = 1.0, 1
    while True:
        term = 2.0 * math.exp(-a * t * t)
        tot += term
        if term < 1e-18 * tot:
            return tot
        t += 1


def ellipsoid_points(B: np.ndarray, R: float, max_points: int = MAX_LATTICE_POINTS, box: int | None = None) -> np.ndarray:
    """All integer ``k`` with ``k^T B k <= R`` (B symmetric positive definite), optionally with ``|k_i| <= box``."""
    d = len(B)
    U = np.linalg.cholesky(B).T  # B = U^T U, U upper
    vol = math.pi ** (d / 2) / math.gamma(d / 2 + 1) * R ** (d / 2) / float(np.prod(np.diag(U)))
    if box is None and vol > max_points:
        raise StateSpaceTooLarge(f"about {vol:.2e} lattice points in the truncation ellipsoid")
    pts = np.zeros((1, d), dtype=np.int64)
    budget = np.array([float(R)])
    for i in range(d - 1, -1, -1):
        c = -(pts[:, i + 1:] @ U[i, i + 1:]) / U[i, i]
        r = np.sqrt(np.maximum(budget, 0.0)) / U[i, i]
        lo = np.ceil(c - r - 1e-12).astype(np.int64)
        hi = np.floor(c + r + 1e-12).astype(np.int64)
        if box is not None:
            lo, hi = np.maximum(lo, -box), np.minimum(hi, box)
        cnt = np.maximum(hi - lo + 1, 0)
        total = int(cnt.sum())
        if total > 4 * max_points:
            raise StateSpaceTooLarge("partial enumeration exceeds the point budget")
        rep = np.repeat(np.arange(len(pts)), cnt)
        offs = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        pts = pts[rep]
        ki = lo[rep] + offs
        pts[:, i] = ki
        budget = budget[rep] - (U[i, i] * (ki - c[rep])) ** 2
        keep = budget >= -1e-9
        pts, budget = pts[keep], budget[keep]
    return pts


def gaussian_lattice_sum_radius(B: np.ndarray, tol: float = 1e-15):
    """Radius ``R`` so that ``sum_{k^T B k > R} exp(-k^T B k) <= tol`` and the bound used."""
    d = len(B)
    mu = float(np.linalg.eigvalsh(B)[0])
    log_theta = d * math.log(_theta(mu / 2.0))
    R = 2.0 * (math.log(1.0 / tol) + log_theta)
    return R, math.exp(-R / 2.0 + log_theta)


# variable elimination --------------------------------------------------------


def _smul(A: np.ndarray, B: np.ndarray, S: int) -> np.ndarray:
    """Product of truncated power series stored along axis 0."""
    if A.shape[0] == 1 and B.shape[0] == 1:
        return A * B
    shape = np.broadcast_shapes(A.shape[1:], B.shape[1:])
    out = np.zeros((min(A.shape[0] + B.shape[0] - 1, S),) + shape, dtype=np.result_type(A, B))
    for a in range(A.shape[0]):
        for b in range(B.shape[0]):
            if a + b < out.shape[0]:
                out[a + b] += A[a] * B[b]
    return out


def _align(vars_, arr, U, D):
    pos = [vars_.index(u) for u in U if u in vars_]
    arr = arr.transpose([0] + [1 + p for p in pos])
    return arr.reshape((arr.shape[0],) + tuple(D if u in vars_ else 1 for u in U))


def contract(factors, n_vars: int, D: int, S: int = 1, max_entries: int = MAX_ENTRIES):
    """Sum of a product of factors over ``D`` states per variable.

    ``factors`` is a list of ``(vars, array)`` with array shape ``(s,) + (D,) * len(vars)``;
    the leading axis is a power series truncated at ``S`` terms.  Variables are
    eliminated greedily by smallest intermediate.  Returns ``(log_scale, series)``.
    """
    facs = [(tuple(v), np.asarray(a)) for v, a in factors]
    log_scale = 0.0
    remaining = set(range(n_vars))
    while remaining:
        best = None
        for x in remaining:
            U = set()
            for vs, _ in facs:
                if x in vs:
                    U.update(vs)
            U.add(x)
            if best is None or len(U) < best[0]:
                best = (len(U), x, sorted(U))
        _, x, U = best
        if D ** len(U) * S > max_entries:
            raise StateSpaceTooLarge(f"intermediate of {D}^{len(U)} entries")
        prod = np.ones((1,) + (1,) * len(U))
        rest = []
        for vs, a in facs:
            if x in vs:
                prod = _smul(prod, _align(list(vs), a, U, D), S)
            else:
                rest.append((vs, a))
        prod = np.broadcast_to(prod, (prod.shape[0],) + (D,) * len(U)).sum(axis=1 + U.index(x))
        scale = float(np.max(np.abs(prod)))
        if scale > 0:
            prod = prod / scale
            log_scale += math.log(scale)
        rest.append((tuple(u for u in U if u != x), prod))
        facs = rest
        remaining.discard(x)
    out = np.ones(1)
    for _, a in facs:
        out = _smul(out, a.reshape(a.shape[0]), S)
    return log_scale, out


# integer-valued field ----------------------------------------------------------


@dataclass
class IVResult:
    log_Z: float
    mgf: float  # E[exp <m, f>]
    second_moment: float  # E[<m, f>^2]
    mean: float  # E[<m, f>]
    truncation: float
    method: str
    K: int
    flagged: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def Z(self) -> float:
        return math.exp(self.log_Z)


def _free_structure(graph, v):
    v = _vertex(graph, v)
    free = np.delete(np.arange(graph.n), v)
    pos = -np.ones(graph.n, dtype=np.int64)
    pos[free] = np.arange(len(free))
    e = pos[graph.edges]
    return v, free, e, np.asarray(graph.mult, dtype=float)


def _iv_factors(graph, beta, v, K, f, series: bool):
    _, free, e, mult = _free_structure(graph, v)
    states = np.arange(-K, K + 1, dtype=float)
    D = len(states)
    d = len(free)
    unary = np.zeros((d, D))
    pair = {}
    for (a, b), m in zip(e, mult):
        if a < 0 or b < 0:
            j = b if a < 0 else a
            unary[j] += -0.5 * beta * m * states ** 2
        else:
            key = (min(a, b), max(a, b))
            pair[key] = pair.get(key, 0.0) + m
    fr = np.zeros(d) if f is None else np.asarray(f, dtype=float)[free]
    factors = []
    diff2 = (states[:, None] - states[None, :]) ** 2
    for (a, b), m in pair.items():
        factors.append(((a, b), np.exp(-0.5 * beta * m * diff2)[None]))
    for j in range(d):
        base = np.exp(unary[j])
        if series:
            x = fr[j] * states
            factors.append(((j,), np.stack([base, base * x, base * x * x / 2.0])))
        else:
            factors.append(((j,), (base * np.exp(fr[j] * states))[None]))
    return factors, d, D


def _iv_direct(graph, beta, v, K, f):
    facs, d, D = _iv_factors(graph, beta, v, K, f, series=True)
    ls0, s0 = contract(facs, d, D, S=3)
    log_Z = ls0 + math.log(s0[0])
    mean = s0[1] / s0[0]
    second = 2.0 * s0[2] / s0[0]
    facs, _, _ = _iv_factors(graph, beta, v, K, f, series=False)
    lsf, sf = contract(facs, d, D)
    log_Zf = lsf + math.log(sf[0])
    trunc = 0.0
    if K > 1:
        for tilt, lz in ((None, log_Z), (f, log_Zf)):
            fk, _, Dk = _iv_factors(graph, beta, v, K - 1, tilt, series=False)
            lk, sk = contract(fk, d, Dk)
            trunc = max(trunc, -math.expm1(lk + math.log(sk[0]) - lz))
    else:
        trunc = 1.0
    return IVResult(log_Z, math.exp(log_Zf - log_Z), float(second), float(mean), max(trunc, 0.0), "direct", K)


def _iv_dual(graph, beta, v, K, f, tol=1e-15):
    """Poisson summation over the pinned integer field: a rapidly convergent dual sum at small beta."""
    G = GroundedGreen(graph, v)
    d = len(G.keep)
    B = (2.0 * math.pi ** 2 / beta) * G.inv
    B = 0.5 * (B + B.T)
    R, tail = gaussian_lattice_sum_radius(B, tol)
    k = ellipsoid_points(B, R)
    q = np.einsum("ij,jk,ik->i", k, B, k)
    w = np.exp(-q)
    fr = np.zeros(d) if f is None else G.restrict(f)
    c = float(fr @ G.inv @ fr)
    u = (2.0 * math.pi / beta) * (k @ (G.inv @ fr))
    sw = math.fsum(w)
    mgf = math.exp(c / (2.0 * beta)) * math.fsum(w * np.cos(u)) / sw
    second = c / beta - math.fsum(w * u * u) / sw
    sign, logdet = np.linalg.slogdet(beta * G.A)
    log_Z = 0.5 * d * math.log(2.0 * math.pi) - 0.5 * logdet + math.log(sw)
    return IVResult(log_Z, mgf, float(second), 0.0, tail / sw, "dual", K, meta={"points": len(k), "radius": R})


def enumerate_iv(graph, params: ModelParams, f=None, method: str = "auto") -> IVResult:
    """Exact sums for the integer-valued field pinned at ``params.v``.

    ``direct`` sums ``m in {-K..K}^(n-1)`` by variable elimination and reports
    the boundary-shell mass ratio ``1 - Z_{K-1}/Z_K``.  ``dual`` uses the
    Poisson-summed form, whose Gaussian lattice sum converges fast at small
    beta, and reports a theta-function tail bound.  ``auto`` takes the direct
    sum when its shell ratio is below ``TRUNCATION_TOL`` and otherwise the
    representation with the smaller bound.
    """
    beta, v, K = params.beta, params.v, params.K
    if method == "direct":
        res = _iv_direct(graph, beta, v, K, f)
    elif method == "dual":
        res = _iv_dual(graph, beta, v, K, f)
    elif method == "auto":
        res = None
        try:
            res = _iv_direct(graph, beta, v, K, f)
        except StateSpaceTooLarge:
            pass
        if res is None or res.truncation >= TRUNCATION_TOL:
            try:
                alt = _iv_dual(graph, beta, v, K, f)
                if res is None or alt.truncation < res.truncation:
                    res = alt
            except StateSpaceTooLarge:
                if res is None:
                    raise
    else:
        raise ConfigInvalid(f"unknown method {method!r}")
    res.flagged = res.truncation >= TRUNCATION_TOL
    return res


def iv_exhaustive(graph, params: ModelParams, f=None, backend=None, max_bits: float = 28.0):
    """Brute-force sum over every state; ``(Z, E[e^X], E[X^2])``.  Small graphs only."""
    _, free, e, mult = _free_structure(graph, params.v)
    bits = len(free) * math.log2(2 * params.K + 1)
    if bits > max_bits:
        raise StateSpaceTooLarge(f"{bits:.1f} bits of states")
    fr = np.zeros(len(free)) if f is None else np.asarray(f, dtype=float)[free]
    Z, Zf, S2 = kernels.iv_exhaustive(e, 0.5 * params.beta * mult, fr, params.K, backend=backend)
    return Z, Zf / Z, S2 / Z


def iv_mcmc(graph, params: ModelParams, n_sweeps: int, burn_in: int = 0, init=None, rng=None, backend=None) -> np.ndarray:
    """Heat-bath chain; returns the states after each sweep, shape ``(n_sweeps, n)``."""
    rng = rng_stream(params.seed) if rng is None else rng
    v = _vertex(graph, params.v)
    ptr, nbr, mult = _neighbour_csr(graph)
    order = np.delete(np.arange(graph.n), v).astype(np.int64)
    m = np.zeros(graph.n, dtype=np.int64) if init is None else np.array(init, dtype=np.int64)
    m[v] = 0
    out = np.empty((n_sweeps, graph.n), dtype=np.int64)
    for t in range(burn_in + n_sweeps):
        kernels.iv_sweep(m, ptr, nbr, mult, order, params.beta, rng.random(len(order)), backend=backend)
        if t >= burn_in:
            out[t - burn_in] = m
    return out


# weighted Gaussian measure ------------------------------------------------------


def _site_weights(graph, weights):
    ws = list(weights) if isinstance(weights, (list, tuple)) else [weights] * graph.n
    if len(ws) != graph.n or not all(isinstance(w, TrigWeight) for w in ws):
        raise ConfigInvalid("need one TrigWeight per vertex")
    return ws


def weighted_product(graph, weights, phi) -> np.ndarray:
    ws = _site_weights(graph, weights)
    phi = np.asarray(phi, dtype=float)
    out = np.ones(phi.shape[:-1])
    for j, w in enumerate(ws):
        out = out * w(phi[..., j])
    return out


def gff_trig_expectation(graph, beta: float, weights, f=None, sigma=None, v=0, tol: float = 1e-15, max_box: int = 2_000_000):
    """Exact ``E_GFF[exp<phi, f> prod_j w_j(phi_j + sigma_j)]`` for mean-zero ``f``.

    Expands the product into characters ``exp(i <q, phi>)``; only neutral
    charge vectors survive the uniform zero mode.  Uses the full box when it is
    small, otherwise the Gaussian-weight ellipsoid with a tail bound.
    Returns ``(value, tail_bound)``.
    """
    ws = _site_weights(graph, weights)
    G = GroundedGreen(graph, v)
    n = graph.n
    Nmax = max(w.N for w in ws)
    fr = np.zeros(n - 1) if f is None else G.restrict(f)
    sig = np.zeros(n) if sigma is None else np.asarray(sigma, dtype=float)
    tail = 0.0
    if (2 * Nmax + 1) ** (n - 1) <= max_box:
        grids = np.meshgrid(*[np.arange(-Nmax, Nmax + 1)] * (n - 1), indexing="ij")
        kr = np.stack([g.ravel() for g in grids], axis=1) if n > 1 else np.zeros((1, 0), dtype=np.int64)
    else:
        B = G.inv / (2.0 * beta)
        R, tail = gaussian_lattice_sum_radius(0.5 * (B + B.T), tol)
        amp = max(1.0, max(abs(w.hat(q)) for w in ws for q in range(1, w.N + 1)))
        tail *= amp ** n
        kr = ellipsoid_points(0.5 * (B + B.T), R, box=Nmax)
    q = np.zeros((len(kr), n), dtype=np.int64)
    q[:, G.keep] = kr
    q[:, G.v] = -kr.sum(axis=1)
    ok = np.all(np.abs(q) <= Nmax, axis=1)
    q, kr = q[ok], kr[ok]
    coef = np.ones(len(q))
    for j, w in enumerate(ws):
        table = np.array([w.hat(t) for t in range(-Nmax, Nmax + 1)])
        coef *= table[q[:, j] + Nmax]
    nz = coef != 0
    q, kr, coef = q[nz], kr[nz], coef[nz]
    kq = np.einsum("ij,jk,ik->i", kr, G.inv, kr)
    cf = float(fr @ G.inv @ fr)
    phase = q @ sig + (kr @ (G.inv @ fr)) / beta
    val = math.fsum(coef * np.exp((cf - kq) / (2.0 * beta)) * np.cos(phase))
    return val, tail


def weighted_partition(graph, params: ModelParams, sigmas, n_samples: int, rng=None, common: bool = True):
    """Monte Carlo ``Z(sigma) = E_GFF[prod_j w_j(phi_j + sigma_j)]`` for each ``sigma``.

    With ``common`` the same Gaussian draws serve every ``sigma`` so that ratios
    ``Z(sigma)/Z(sigmas[0])`` have correlated numerator and denominator.
    Returns ``(estimates, ses, ratios, ratio_ses)``.
    """
    if params.weights is None:
        raise ConfigInvalid("weighted_partition needs weights")
    rng = rng_stream(params.seed) if rng is None else rng
    sigmas = [np.zeros(graph.n) if s is None else np.asarray(s, dtype=float) for s in sigmas]
    phi = sample_gff(graph, params, n_samples, rng)
    vals = []
    for i, s in enumerate(sigmas):
        if not common and i > 0:
            phi = sample_gff(graph, params, n_samples, rng)
        vals.append(weighted_product(graph, params.weights, phi + s))
    vals = np.array(vals)
    est, se = zip(*(batch_means(x) for x in vals))
    b = n_samples // N_BATCHES
    bm = vals[:, : b * N_BATCHES].reshape(len(sigmas), N_BATCHES, b).mean(axis=2)
    ratios = vals.mean(axis=1) / vals[0].mean()
    rb = bm / bm[0]
    ratio_se = rb.std(axis=1, ddof=1) / math.sqrt(N_BATCHES)
    return np.array(est), np.array(se), ratios, ratio_se


def change_of_variables_check(graph, params: ModelParams, f, n_samples: int, rng=None) -> dict:
    """Both sides of the shift identity for the weighted measure, with common draws."""
    rng = rng_stream(params.seed) if rng is None else rng
    G = GroundedGreen(graph, params.v)
    sigma = G.shift(f, params.beta)
    phi = sample_gff(graph, params, n_samples, rng)
    w0 = weighted_product(graph, params.weights, phi)
    ws = weighted_product(graph, params.weights, phi + sigma)
    ef = np.exp(phi @ np.asarray(f, dtype=float))
    pref = math.exp(G.form(f) / (2.0 * params.beta))
    b = n_samples // N_BATCHES

    def bm(x):
        return x[: b * N_BATCHES].reshape(N_BATCHES, b).mean(axis=1)

    lhs_b = bm(ef * w0) / bm(w0)
    rhs_b = pref * bm(ws) / bm(w0)
    lhs = float((ef * w0).mean() / w0.mean())
    rhs = float(pref * ws.mean() / w0.mean())
    se = float(np.std(lhs_b - rhs_b, ddof=1) / math.sqrt(N_BATCHES))
    return {"lhs": lhs, "rhs": rhs, "diff": lhs - rhs, "se": se,
            "lhs_se": float(lhs_b.std(ddof=1) / math.sqrt(N_BATCHES)),
            "rhs_se": float(rhs_b.std(ddof=1) / math.sqrt(N_BATCHES))}


# Sine-Gordon measure --------------------------------------------------------------


def sine_gordon_two_site(beta: float, a: float, eta: float) -> float:
    """``E[exp(a (phi_0 - phi_1))]`` under the two-vertex Gaussian tilted by ``exp(eta sum cos)``.

    The zero mode integrates to ``2 pi I_0(2 eta cos(psi / 2))``.
    """
    def weight(p):
        x = 2.0 * eta * abs(math.cos(p / 2.0))
        return special.i0e(x) * math.exp(x - 0.5 * beta * p * p - 2.0 * abs(eta))

    lim = 12.0 / math.sqrt(beta) + abs(a) / beta
    c = -a / beta
    opts = dict(epsabs=0.0, epsrel=1e-13, limit=400)
    num = integrate.quad(lambda p: weight(p) * math.exp(-a * p), c - lim, c + lim, **opts)[0]
    den = integrate.quad(weight, -lim, lim, **opts)[0]
    return num / den


def sine_gordon_two_site_derivative(beta: float, a: float, eta: float, h: float = 1e-4) -> float:
    """Central difference in ``eta``."""
    return (sine_gordon_two_site(beta, a, eta + h) - sine_gordon_two_site(beta, a, eta - h)) / (2.0 * h)


def sine_gordon_mc_derivative(graph, params: ModelParams, f, eta: float, n_samples: int, h: float = 1e-3, rng=None):
    """Finite-difference ``d/d eta`` of the tilted expectation by reweighting exact Gaussian draws.

    Both sides of the difference use the same draws.  Returns ``(derivative, se)``.
    """
    rng = rng_stream(params.seed) if rng is None else rng
    phi = sample_gff(graph, params, n_samples, rng)
    C = np.cos(phi).sum(axis=1)
    Y = np.exp(phi @ np.asarray(f, dtype=float))
    b = n_samples // N_BATCHES

    def est(idx):
        c, y = C[idx], Y[idx]
        top = (eta + h) * c
        bot = (eta - h) * c
        s = max(top.max(), bot.max())
        wp, wm = np.exp(top - s), np.exp(bot - s)
        return ((wp * y).sum() / wp.sum() - (wm * y).sum() / wm.sum()) / (2.0 * h)

    batches = np.array([est(slice(i * b, (i + 1) * b)) for i in range(N_BATCHES)])
    return float(est(slice(0, b * N_BATCHES))), float(batches.std(ddof=1) / math.sqrt(N_BATCHES))


# Villain model -----------------------------------------------------------------------


def villain_log_weight(x, beta: float, m_cut: int) -> np.ndarray:
    """``log sum_{|m| <= m_cut} exp(-(beta/2)(x + 2 pi m)^2)``."""
    x = np.asarray(x, dtype=float)
    m = np.arange(-m_cut, m_cut + 1)
    return special.logsumexp(-0.5 * beta * (x[..., None] + 2.0 * np.pi * m) ** 2, axis=-1)


def villain_tail_bound(beta: float, m_cut: int) -> float:
    """Bound on the relative weight of the dropped terms ``|m| > m_cut`` for ``|x| <= pi``."""
    m = np.arange(m_cut + 1, m_cut + 200)
    dropped = 2.0 * np.exp(-0.5 * beta * (2.0 * np.pi * m - np.pi) ** 2).sum()
    return float(dropped / math.exp(-0.5 * beta * np.pi ** 2))


def _check_zero(domain):
    if not (isinstance(domain, LatticeDomain) and domain.kind is Kind.ZERO):
        raise ConfigInvalid("the Villain model lives on a zero-boundary domain")


def villain_mcmc(domain: LatticeDomain, params: ModelParams, n_sweeps: int, burn_in: int = 0,
                 grid: int = VILLAIN_GRID, rng=None, backend=None) -> np.ndarray:
    """Heat-bath chain for the angles with the wired vertex at 0; shape ``(n_sweeps, n)``."""
    _check_zero(domain)
    rng = rng_stream(params.seed) if rng is None else rng
    ptr, nbr, mult = _neighbour_csr(domain)
    xs = -np.pi + 2.0 * np.pi * np.arange(grid) / grid
    logw = villain_log_weight(xs, params.beta, params.m_cut)
    order = np.arange(domain.n_sites, dtype=np.int64)
    theta = np.zeros(domain.n)
    out = np.empty((n_sweeps, domain.n))
    for t in range(burn_in + n_sweeps):
        kernels.villain_sweep(theta, ptr, nbr, mult, order, logw, grid, rng.random(len(order)),
                              rng.random(len(order)), backend=backend)
        if t >= burn_in:
            out[t - burn_in] = theta
    return out


def villain_estimate(domain: LatticeDomain, params: ModelParams, x, n_sweeps: int = 20000, burn_in: int = 1000,
                     rng=None, backend=None) -> dict:
    """``E[cos theta_x]`` and ``E[sin theta_x]`` with batch-means errors."""
    _check_zero(domain)
    j = domain.idx(x)
    if j == domain.z_index:
        raise ConfigInvalid("x must be a site, not the wired vertex")
    th = villain_mcmc(domain, params, n_sweeps, burn_in, rng=rng, backend=backend)[:, j]
    c, c_se = batch_means(np.cos(th))
    s, s_se = batch_means(np.sin(th))
    return {"cos": c, "cos_se": c_se, "sin": s, "sin_se": s_se, "n": n_sweeps,
            "tail_bound": villain_tail_bound(params.beta, params.m_cut)}


def villain_quadrature(domain: LatticeDomain, beta: float, x, m_cut: int = 8, nodes: int = 64,
                       observable=np.cos) -> float:
    """``E[observable(theta_x)]`` by tensor Gauss-Legendre quadrature over every angle."""
    _check_zero(domain)
    j_obs = domain.idx(x)
    t, w = np.polynomial.legendre.leggauss(nodes)
    th = np.pi * t
    wq = np.pi * w
    z = domain.z_index
    d = domain.n_sites
    unary = [np.log(wq) for _ in range(d)]
    pairs = []
    for (a, b), m in zip(domain.edges, domain.mult):
        if b == z:
            unary[a] = unary[a] + m * villain_log_weight(th, beta, m_cut)
        else:
            pairs.append(((int(a), int(b)), m * villain_log_weight(th[:, None] - th[None, :], beta, m_cut)))
    shift = max(float(p.max()) for _, p in pairs) if pairs else 0.0
    facs = [((a, b), np.exp(p - shift)[None]) for (a, b), p in pairs]
    base = [np.exp(u - u.max()) for u in unary]
    f0 = facs + [((j,), base[j][None]) for j in range(d)]
    f1 = facs + [((j,), (base[j] * (observable(th) if j == j_obs else 1.0))[None]) for j in range(d)]
    l0, s0 = contract(f0, d, nodes)
    l1, s1 = contract(f1, d, nodes)
    return float(math.exp(l1 - l0) * s1[0] / s0[0])
