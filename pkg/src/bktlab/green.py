"""Green functions: pseudoinverse of the negated Laplacian and torus identities.

``GreenOperator`` represents ``g = (-Lap)^+``, the Moore-Penrose pseudoinverse,
so ``g @ 1 = 0`` and ``(-Lap) g f = f`` for mean-zero ``f``.  Dense for up to
4096 vertices, conjugate gradients on the mean-zero subspace above that.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BadRow, NotMeanZero, SingularBeyondKernel
from .lattice import Kind, LatticeDomain, as_vector, build_domain

DENSE_CUTOFF = 4096
CG_TOL = 1e-11


class GreenOperator:
    """Pseudoinverse of ``-Lap`` on a domain."""

    def __init__(self, domain: LatticeDomain, dense_cutoff: int = DENSE_CUTOFF, cg_tol: float = CG_TOL):
        self.domain = domain
        self.cg_tol = cg_tol
        self.dense = domain.n <= dense_cutoff
        self.g = self._dense_matrix() if self.dense else None
        self._probe()

    def _dense_matrix(self) -> np.ndarray:
        # ground the last vertex, invert the reduced SPD matrix, then project
        n = self.domain.n
        K = -self.domain.laplacian.toarray()
        R = K[: n - 1, : n - 1]
        try:
            c = sla.cho_factor(R, lower=True)
        except sla.LinAlgError as exc:
            raise SingularBeyondKernel(str(exc)) from exc
        H = np.zeros((n, n))
        H[: n - 1, : n - 1] = sla.cho_solve(c, np.eye(n - 1))
        P = np.eye(n) - 1.0 / n
        g = P @ H @ P
        g = 0.5 * (g + g.T)
        g.setflags(write=False)
        return g

    def _probe(self, n_probe: int = 3):
        rng = np.random.default_rng(12345)
        for _ in range(n_probe):
            f = rng.standard_normal(self.domain.n)
            f -= f.mean()
            r = -(self.domain.laplacian @ self.apply(f)) - f
            if np.linalg.norm(r) > 1e-8 * max(1.0, np.linalg.norm(f)):
                raise SingularBeyondKernel(f"residual {np.linalg.norm(r):.3e} on {self.domain!r}")

    def apply(self, f) -> np.ndarray:
        """Return ``(-Lap)^+ f``; ``f`` may be a vector or a (n, m) block."""
        f = np.asarray(f, dtype=float)
        if self.dense:
            return self.g @ f
        if f.ndim == 2:
            return np.column_stack([self.apply(col) for col in f.T])
        mean = f.mean()
        rhs = f - mean
        A = -self.domain.laplacian
        x, info = spla.cg(A, rhs, rtol=self.cg_tol, atol=0.0, maxiter=20 * self.domain.n)
        if info != 0:
            raise SingularBeyondKernel(f"CG did not converge (info={info})")
        return x - x.mean()

    def form(self, f, h=None) -> float:
        """Bilinear form ``<f, g h>`` (``h`` defaults to ``f``)."""
        f = np.asarray(f, dtype=float)
        h = f if h is None else np.asarray(h, dtype=float)
        return float(np.dot(f, self.apply(h)))


_GREEN_CACHE: dict = {}


def pseudoinverse(domain: LatticeDomain, dense_cutoff: int = DENSE_CUTOFF) -> GreenOperator:
    key = (domain.kind, domain.L, dense_cutoff)
    if key not in _GREEN_CACHE:
        _GREEN_CACHE[key] = GreenOperator(domain, dense_cutoff=dense_cutoff)
    return _GREEN_CACHE[key]


def quadratic_form(G: GreenOperator, f, tol: float = 1e-12) -> float:
    """``<f, (-Lap)^+ f>`` for mean-zero ``f``."""
    f = as_vector(G.domain, f)
    if abs(f.sum()) > tol * max(1.0, np.abs(f).sum()):
        raise NotMeanZero(f"sum of test function is {f.sum():.3e}")
    return G.form(f)


def shift_field(G: GreenOperator, f, beta: float, v=0) -> np.ndarray:
    """Solve ``(-Lap) sigma = f / beta`` with ``sigma_v = 0``."""
    f = as_vector(G.domain, f)
    s = G.apply(f) / beta
    return s - s[G.domain.idx(v)]


# torus Green function ------------------------------------------------


@lru_cache(maxsize=32)
def periodic_green_table(L2: int) -> np.ndarray:
    """``G[t, s] = (-Lap_per)^+_{(0,0),(t,s)}`` on the ``L2 x L2`` torus via FFT."""
    if L2 % 2:
        raise ValueError("torus side must be even")
    k = 2 * np.pi * np.arange(L2) / L2
    eig = 4.0 - 2.0 * np.cos(k)[:, None] - 2.0 * np.cos(k)[None, :]
    inv = np.zeros_like(eig)
    inv[eig > 1e-14] = 1.0 / eig[eig > 1e-14]
    G = np.real(np.fft.ifft2(inv))
    G.setflags(write=False)
    return G


def periodic_green(L2: int, t: int, s: int) -> float:
    return float(periodic_green_table(L2)[t % L2, s % L2])


def periodic_green_apply(L2: int, f: np.ndarray) -> np.ndarray:
    """Apply the torus Green function to a (L2, L2) array by FFT convolution."""
    G = periodic_green_table(L2)
    return np.real(np.fft.ifft2(np.fft.fft2(G) * np.fft.fft2(f)))


def periodic_laplacian_apply(f: np.ndarray) -> np.ndarray:
    """Torus Laplacian on a square array."""
    return np.roll(f, 1, 0) + np.roll(f, -1, 0) + np.roll(f, 1, 1) + np.roll(f, -1, 1) - 4 * f


def grid(domain: LatticeDomain, f: np.ndarray) -> np.ndarray:
    """View the site part of a vertex vector as an (L, L) array."""
    return np.asarray(f)[: domain.n_sites].reshape(domain.L, domain.L)


def reflect_T_fp(f: np.ndarray) -> np.ndarray:
    """Reflect an (L, L) array into a (2L, 2L) torus array across both axes."""
    f = np.asarray(f)
    L = f.shape[0]
    r = np.minimum(np.arange(2 * L), 2 * L - 1 - np.arange(2 * L))
    return f[np.ix_(r, r)]


# backward differences on the torus ------------------------------------


def d1(f):
    return f - np.roll(f, 1, axis=0)


def d2(f):
    return f - np.roll(f, 1, axis=1)


def d1T(f):
    return f - np.roll(f, -1, axis=0)


def d2T(f):
    return f - np.roll(f, -1, axis=1)


def difference_ops(L2: int):
    """Sparse matrices ``(d1, d2)`` acting on row-major flattened ``L2 x L2`` arrays."""
    n = L2 * L2
    idx = np.arange(n).reshape(L2, L2)
    I = sp.identity(n, format="csr")
    S1 = sp.csr_matrix((np.ones(n), (idx.ravel(), np.roll(idx, 1, axis=0).ravel())), shape=(n, n))
    S2 = sp.csr_matrix((np.ones(n), (idx.ravel(), np.roll(idx, 1, axis=1).ravel())), shape=(n, n))
    return (I - S1).tocsr(), (I - S2).tocsr()


def per_id1_residual(L2: int, f: np.ndarray) -> float:
    """``|| (d1^T g d1 + d2^T g d2 - I) f ||_inf`` for mean-zero ``f``."""
    f = f - f.mean()
    out = d1T(periodic_green_apply(L2, d1(f))) + d2T(periodic_green_apply(L2, d2(f)))
    return float(np.max(np.abs(out - f)))


def per_id2_residual(L2: int, f: np.ndarray) -> float:
    a = d1(periodic_green_apply(L2, d2(f)))
    b = d2(periodic_green_apply(L2, d1(f)))
    return float(np.max(np.abs(a - b)))


# row test functions -----------------------------------------------------


def row_dipole(L: int, y) -> np.ndarray:
    """+1 on column ``y1`` and -1 on column ``y1 + 1`` for rows ``x0 >= y0`` (an (L, L) array)."""
    y0, y1 = int(y[0]), int(y[1])
    if not (0 <= y0 < L and 0 <= y1 < L - 1):
        raise BadRow(f"need 0 <= y0 < L and y1 < L - 1, got {y}")
    f = np.zeros((L, L))
    f[y0:, y1] = 1.0
    f[y0:, y1 + 1] = -1.0
    return f


def row_strip(L: int, y) -> np.ndarray:
    """Torus array on side 2L whose second backward difference is the reflected row dipole."""
    y0, y1 = int(y[0]), int(y[1])
    if not (0 <= y0 < L and 0 <= y1 < L - 1):
        raise BadRow(f"need 0 <= y0 < L and y1 < L - 1, got {y}")
    F = np.zeros((2 * L, 2 * L))
    F[y0 : 2 * L - y0, y1] = 1.0
    F[y0 : 2 * L - y0, 2 * L - 2 - y1] = -1.0
    return F


def strip_gammas(L: int, y):
    """The two four-term combinations of torus Green values bounding the correction term."""
    y0, y1 = int(y[0]), int(y[1])
    G = periodic_green_table(2 * L)
    g = lambda t, s: G[t % (2 * L), s % (2 * L)]
    w = 2 * (L - 1 - y0)
    g1 = g(0, 0) - g(0, 2 * (L - y1)) - g(w, 0) + g(w, 2 * (L - y1))
    g2 = g(0, L - 1 - y1) - g(0, L + 1 - y1) - g(w, L - 1 - y1) + g(w, L + 1 - y1)
    return float(g1), float(g2)


def green_log_constant(sides=(8, 16, 32, 64, 128)) -> float:
    """Empirical sup of ``(G(0,0) - G(2a,0)) / ln(a+1)`` over torus sides and ``a >= 1``."""
    best = 0.0
    for L2 in sides:
        G = periodic_green_table(L2)
        a = np.arange(1, L2 // 2 + 1)
        ratio = (G[0, 0] - G[(2 * a) % L2, 0]) / np.log(a + 1)
        best = max(best, float(ratio.max()))
    return best


def claim_green_lower(L: int, y, log_constant: float | None = None, G: GreenOperator | None = None):
    """Row-dipole Green energy and its logarithmic lower bound.

    Returns a dict with the free-domain energy ``lhs``, the bound
    ``(L - y0) - c ln(L - y0 + 1)`` with ``c = 2 * green_log_constant()``, the
    torus energy of ``d1 F`` and the decomposition pieces.
    """
    y0, y1 = int(y[0]), int(y[1])
    f = row_dipole(L, y)
    if G is None:
        G = pseudoinverse(build_domain(Kind.FREE, L))
    fv = f.ravel()
    lhs = G.form(fv)
    c6 = green_log_constant() if log_constant is None else log_constant
    c5 = 2.0 * c6
    F = row_strip(L, y)
    dF = d1(F)
    gdF = periodic_green_apply(2 * L, dF)
    id2 = float(np.sum(dF * gdF))
    mask = np.zeros_like(F)
    mask[:L, :L] = 1.0
    correction = float(np.sum(d1(F * mask) * gdF))
    g1, g2 = strip_gammas(L, y)
    log_term = np.log(L - y0 + 1)
    return {
        "L": L,
        "y0": y0,
        "y1": y1,
        "lhs": lhs,
        "bound": (L - y0) - c5 * log_term,
        "eqGreenId2": id2,
        "eqGreenId2_bound": c5 * log_term,
        "correction": correction,
        "gamma1": g1,
        "gamma2": g2,
        "D5": c5,
        "D6": c6,
    }


def claim_green_sweep(L: int, log_constant: float | None = None) -> dict:
    """Row-dipole energies for every ``y`` at once, with the bound and the smallest working ``D5``.

    ``lhs[y0, y1]`` equals ``claim_green_lower(L, y)["lhs"]``; it is a tail sum
    over rows of the Gram matrix of single-row dipoles.
    """
    G = pseudoinverse(build_domain(Kind.FREE, L))
    c6 = green_log_constant() if log_constant is None else log_constant
    n = L * L
    rows, cols = np.meshgrid(np.arange(L), np.arange(L - 1), indexing="ij")
    D = np.zeros((n, L * (L - 1)))
    k = np.arange(L * (L - 1))
    D[(rows * L + cols).ravel(), k] = 1.0
    D[(rows * L + cols + 1).ravel(), k] = -1.0
    M = (D.T @ G.apply(D)).reshape(L, L - 1, L, L - 1)
    # same column y1 on both sides, rows summed from y0 to the end
    M = np.einsum("ayby->yab", M)
    tail = np.flip(np.cumsum(np.cumsum(np.flip(M, (1, 2)), axis=1), axis=2), (1, 2))
    lhs = np.stack([np.diagonal(tail[y1]) for y1 in range(L - 1)], axis=1)
    depth = (L - np.arange(L))[:, None] * np.ones((1, L - 1))
    log_term = np.log(depth + 1)
    bound = depth - 2.0 * c6 * log_term
    return {
        "L": L,
        "lhs": lhs,
        "bound": bound,
        "margin": float(np.min(lhs - bound)),
        "D5": 2.0 * c6,
        "D5_needed": float(np.max((depth - lhs) / log_term)),
    }


def intertwining_residual(f: np.ndarray) -> float:
    """``max |Lap_per(T f) - T(Lap_free f)|`` for an (L, L) array ``f`` on the free square."""
    f = np.asarray(f, dtype=float)
    L = f.shape[0]
    dom = build_domain(Kind.FREE, L)
    free_lap = (dom.laplacian @ f.ravel()).reshape(L, L)
    return float(np.max(np.abs(periodic_laplacian_apply(reflect_T_fp(f)) - reflect_T_fp(free_lap))))
