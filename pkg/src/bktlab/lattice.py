"""Square lattice domains with free, periodic and wired-zero boundary conditions.

Sites are pairs ``(a, b)`` with ``0 <= a, b < L``; the wired vertex of the
zero domain is the string ``"z"``.  Vertices are indexed row-major
(``a * L + b``) with ``z`` last, and every matrix or vector in the package uses
that order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path

from .errors import (
    DimensionMismatch,
    NotBipartite,
    OddPeriodicSide,
    SideTooSmall,
    UnknownVertex,
)

Z = "z"
ALLPAIRS_MAX_L = 64


class Kind(str, Enum):
    FREE = "free"
    PERIODIC = "periodic"
    ZERO = "zero"

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, Kind):
            return value
        return cls(str(value).lower())


class LatticeDomain:
    """An immutable square domain.

    Attributes
    ----------
    kind, L
    vertices : tuple of sites, plus ``"z"`` last for the zero domain
    edges : (E, 2) int array of vertex indices with ``edges[:, 0] < edges[:, 1]``
    mult : (E,) int array of edge multiplicities
    """

    def __init__(self, kind, L: int):
        kind = Kind.parse(kind)
        L = int(L)
        if L <= 1:
            raise SideTooSmall(f"side length must exceed 1, got {L}")
        if kind is Kind.PERIODIC and L % 2:
            raise OddPeriodicSide(f"periodic domains need even L, got {L}")
        self.kind = kind
        self.L = L
        self.n_sites = L * L
        self.n = self.n_sites + (1 if kind is Kind.ZERO else 0)
        self.z_index = self.n - 1 if kind is Kind.ZERO else None
        self.coords = np.indices((L, L), dtype=np.int64).reshape(2, -1).T.copy()
        self.edges, self.mult = self._build_edges()

    @cached_property
    def vertices(self) -> tuple:
        sites = tuple(map(tuple, self.coords.tolist()))
        return sites + ((Z,) if self.kind is Kind.ZERO else ())

    @cached_property
    def index(self) -> dict:
        return {v: i for i, v in enumerate(self.vertices)}

    # construction -----------------------------------------------------

    def _build_edges(self):
        L = self.L
        idx = np.arange(L * L, dtype=np.int64).reshape(L, L)
        if self.kind is Kind.PERIODIC:
            a = np.concatenate([idx.ravel(), idx.ravel()])
            b = np.concatenate([np.roll(idx, -1, axis=0).ravel(), np.roll(idx, -1, axis=1).ravel()])
        else:
            a = np.concatenate([idx[:-1, :].ravel(), idx[:, :-1].ravel()])
            b = np.concatenate([idx[1:, :].ravel(), idx[:, 1:].ravel()])
        # parallel edges (torus of side 2) become one pair with multiplicity
        keys, mult = np.unique(np.minimum(a, b) * self.n + np.maximum(a, b), return_counts=True)
        pairs = np.stack([keys // self.n, keys % self.n], axis=1)
        mult = mult.astype(np.int64)
        if self.kind is Kind.ZERO:
            deg = np.bincount(pairs.ravel(), weights=np.repeat(mult, 2), minlength=self.n_sites)
            short = np.flatnonzero(deg < 4)
            zp = np.stack([short, np.full(short.size, self.z_index)], axis=1)
            pairs = np.concatenate([pairs, zp])
            mult = np.concatenate([mult, (4 - deg[short]).astype(np.int64)])
            order = np.lexsort((pairs[:, 1], pairs[:, 0]))
            pairs, mult = pairs[order], mult[order]
        edges = np.ascontiguousarray(pairs, dtype=np.int64).reshape(-1, 2)
        edges.setflags(write=False)
        mult.setflags(write=False)
        return edges, mult

    def __repr__(self):
        return f"LatticeDomain({self.kind.value!r}, L={self.L})"

    def __eq__(self, other):
        return isinstance(other, LatticeDomain) and (self.kind, self.L) == (other.kind, other.L)

    def __hash__(self):
        return hash((self.kind, self.L))

    # vertex helpers ---------------------------------------------------

    def idx(self, v) -> int:
        """Index of a vertex given as a site tuple, ``"z"`` or an int index."""
        if isinstance(v, (int, np.integer)):
            if 0 <= v < self.n:
                return int(v)
            raise UnknownVertex(v)
        key = v if v == Z else tuple(int(c) for c in v)
        try:
            return self.index[key]
        except KeyError:
            raise UnknownVertex(v) from None

    @property
    def n_edges(self) -> int:
        return int(self.mult.sum())

    @cached_property
    def degree(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        np.add.at(deg, self.edges[:, 0], self.mult)
        np.add.at(deg, self.edges[:, 1], self.mult)
        return deg

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric sparse adjacency with multiplicities as entries."""
        e, m = self.edges, self.mult
        A = sp.coo_matrix(
            (np.concatenate([m, m]).astype(float), (np.concatenate([e[:, 0], e[:, 1]]), np.concatenate([e[:, 1], e[:, 0]]))),
            shape=(self.n, self.n),
        )
        return A.tocsr()

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """Sparse graph Laplacian ``A - D`` (negative semidefinite)."""
        return (self.adjacency - sp.diags(self.degree.astype(float))).tocsr()

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """Signed incidence (E, n) with rows ``delta_i - delta_j`` per stored edge."""
        E = len(self.mult)
        rows = np.repeat(np.arange(E), 2)
        cols = self.edges.ravel()
        vals = np.tile([1.0, -1.0], E)
        return sp.csr_matrix((vals, (rows, cols)), shape=(E, self.n))

    def neighbors(self, i: int) -> np.ndarray:
        A = self.adjacency
        return A.indices[A.indptr[i]:A.indptr[i + 1]]

    # distances --------------------------------------------------------

    def _to_boundary(self, coords: np.ndarray) -> np.ndarray:
        L = self.L
        a, b = coords[..., 0], coords[..., 1]
        return np.minimum(np.minimum(a, b), np.minimum(L - 1 - a, L - 1 - b))

    def _site_dist(self, c1: np.ndarray, c2: np.ndarray) -> np.ndarray:
        d = np.abs(c1 - c2)
        if self.kind is Kind.PERIODIC:
            d = np.minimum(d, self.L - d)
        d = d.sum(axis=-1)
        if self.kind is Kind.ZERO:
            via = self._to_boundary(c1) + self._to_boundary(c2) + 2
            d = np.minimum(d, via)
        return d

    def _dist_rows(self, idx: np.ndarray) -> np.ndarray:
        """Distances from each vertex in ``idx`` to every vertex, shape (len(idx), n)."""
        idx = np.asarray(idx, dtype=np.int64)
        out = np.zeros((len(idx), self.n), dtype=np.int64)
        is_site = idx < self.n_sites
        s = idx[is_site]
        if len(s):
            block = self._site_dist(self.coords[s][:, None, :], self.coords[None, :, :])
            out[np.flatnonzero(is_site), : self.n_sites] = block
            if self.kind is Kind.ZERO:
                out[np.flatnonzero(is_site), self.z_index] = self._to_boundary(self.coords[s]) + 1
        if self.kind is Kind.ZERO:
            zrows = np.flatnonzero(~is_site)
            if len(zrows):
                out[zrows, : self.n_sites] = self._to_boundary(self.coords) + 1
                out[zrows, self.z_index] = 0
        return out

    @cached_property
    def distance_matrix(self) -> np.ndarray:
        """All-pairs distance table; only built for ``L <= 64``."""
        if self.L > ALLPAIRS_MAX_L:
            raise MemoryError("all-pairs table disabled above L=64; use distance_from_set")
        D = self._dist_rows(np.arange(self.n)).astype(np.int32)
        D.setflags(write=False)
        return D

    def dist(self, j, l) -> int:
        """Graph distance between two vertices."""
        i, k = self.idx(j), self.idx(l)
        if self.L <= ALLPAIRS_MAX_L:
            return int(self.distance_matrix[i, k])
        return int(self._dist_rows(np.array([i]))[0, k])

    def distance_from_set(self, idx: Iterable[int]) -> np.ndarray:
        """Distance from a vertex set to every vertex."""
        idx = np.fromiter((int(i) for i in idx), dtype=np.int64)
        if len(idx) == 0:
            raise ValueError("empty vertex set")
        if self.L <= ALLPAIRS_MAX_L:
            return self.distance_matrix[idx].min(axis=0).astype(np.int64)
        if len(idx) <= 64:
            return self._dist_rows(idx).min(axis=0)
        d = shortest_path(self.adjacency, unweighted=True, indices=idx, min_only=True)
        return d.astype(np.int64)

    def set_distance(self, A: Iterable[int], B: Iterable[int]) -> int:
        B = list(B)
        return int(self.distance_from_set(A)[B].min())

    def bfs_distance(self, j, l) -> int:
        """Reference BFS distance, used to cross-check the closed forms."""
        d = shortest_path(self.adjacency, unweighted=True, indices=[self.idx(j)])
        return int(d[0, self.idx(l)])

    # bipartition ------------------------------------------------------

    @cached_property
    def parity(self) -> np.ndarray:
        """0 on the even part, 1 on the odd part; raises NotBipartite."""
        par = np.zeros(self.n, dtype=np.int8)
        par[: self.n_sites] = (self.coords.sum(axis=1) % 2).astype(np.int8)
        if self.kind is Kind.ZERO:
            nb = self.neighbors(self.z_index)
            sides = set(par[nb].tolist())
            if len(sides) != 1:
                raise NotBipartite(f"{self!r}: z is adjacent to both parity classes")
            par[self.z_index] = 1 - sides.pop()
        e = self.edges
        if np.any(par[e[:, 0]] == par[e[:, 1]]):
            raise NotBipartite(repr(self))
        return par


def build_domain(kind, L: int) -> LatticeDomain:
    return LatticeDomain(kind, L)


def as_vector(domain: LatticeDomain, f) -> np.ndarray:
    """Coerce ``f`` (array or vertex->value mapping) to a dense vertex vector."""
    if isinstance(f, dict):
        out = np.zeros(domain.n)
        for v, x in f.items():
            out[domain.idx(v)] = x
        return out
    f = np.asarray(f, dtype=float)
    if f.shape != (domain.n,):
        raise DimensionMismatch(f"expected shape ({domain.n},), got {f.shape}")
    return f


def laplacian_apply(domain: LatticeDomain, f) -> np.ndarray:
    """``(Lap f)(j) = sum over neighbours l of (f_l - f_j)``, counted with multiplicity."""
    return domain.laplacian @ as_vector(domain, f)


def dirichlet_energy(domain: LatticeDomain, f) -> float:
    """Multiplicity-weighted sum of squared gradients over edges."""
    f = as_vector(domain, f)
    g = f[domain.edges[:, 0]] - f[domain.edges[:, 1]]
    return float(np.dot(domain.mult, g * g))


def graph_distance(domain: LatticeDomain, j, l) -> int:
    return domain.dist(j, l)


def bipartition(domain: LatticeDomain):
    """Return ``(even_part, odd_part)`` as sets of vertex labels."""
    par = domain.parity
    even = {domain.vertices[i] for i in np.flatnonzero(par == 0)}
    odd = {domain.vertices[i] for i in np.flatnonzero(par == 1)}
    return even, odd


# dyadic squares ---------------------------------------------------------


@dataclass(frozen=True)
class DyadicSquare:
    k: int
    anchor: tuple
    members: frozenset = field(compare=False, repr=False)

    @property
    def side(self) -> int:
        return 2 ** self.k

    def __len__(self):
        return len(self.members)


def square_members(domain: LatticeDomain, k: int, anchor: Sequence[int]) -> frozenset:
    """Member indices of the scale-``k`` square anchored at ``anchor``."""
    L = domain.L
    side = 2 ** k
    if side > L:
        return frozenset(range(domain.n_sites))
    a, b = int(anchor[0]), int(anchor[1])
    if domain.kind is Kind.PERIODIC:
        xs = [(a + t) % L for t in range(side)]
        ys = [(b + t) % L for t in range(side)]
    else:
        xs = [x for x in range(a, a + side) if 0 <= x < L]
        ys = [y for y in range(b, b + side) if 0 <= y < L]
    return frozenset(x * L + y for x in xs for y in ys)


def make_square(domain: LatticeDomain, k: int, anchor) -> DyadicSquare:
    if 2 ** k > domain.L:
        anchor = (0, 0)
    return DyadicSquare(int(k), (int(anchor[0]), int(anchor[1])), square_members(domain, k, anchor))


def enumerate_squares(domain: LatticeDomain, k: int) -> list:
    """All distinct scale-``k`` squares, ordered by anchor."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    if 2 ** k > domain.L:
        return [make_square(domain, k, (0, 0))]
    seen = set()
    out = []
    for a in range(domain.L):
        for b in range(domain.L):
            sq = make_square(domain, k, (a, b))
            if sq.members not in seen:
                seen.add(sq.members)
                out.append(sq)
    return out
