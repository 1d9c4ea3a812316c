"""Integer charge densities, their neighbourhoods and multiscale square covers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np
from scipy.special import zeta

from .errors import NotNeutral, OverlappingSupports, SupportTooLargeForExactCover
from .lattice import DyadicSquare, Kind, LatticeDomain, make_square

EXACT_COVER_MAX = 64


class ChargeDensity:
    """Sparse integer function on the vertices of a domain (never identically zero)."""

    __slots__ = ("domain", "items", "_hash", "__dict__")

    def __init__(self, domain: LatticeDomain, items):
        if isinstance(items, Mapping):
            items = items.items()
        clean = {}
        for v, q in items:
            q = int(q)
            if q != 0:
                i = domain.idx(v)
                clean[i] = clean.get(i, 0) + q
        clean = {i: q for i, q in clean.items() if q != 0}
        if not clean:
            raise ValueError("a charge density cannot be identically zero")
        self.domain = domain
        self.items = tuple(sorted(clean.items()))
        self._hash = hash(self.items)

    @classmethod
    def from_vector(cls, domain, vec):
        vec = np.asarray(vec)
        nz = np.flatnonzero(vec)
        return cls(domain, [(int(i), int(vec[i])) for i in nz])

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return isinstance(other, ChargeDensity) and self.items == other.items and self.domain == other.domain

    def __lt__(self, other):
        return self.support < other.support

    def __repr__(self):
        body = ", ".join(f"{self.domain.vertices[i]}:{q}" for i, q in self.items)
        return f"ChargeDensity({{{body}}})"

    @cached_property
    def support(self) -> tuple:
        return tuple(i for i, _ in self.items)

    @cached_property
    def support_set(self) -> frozenset:
        return frozenset(self.support)

    @cached_property
    def charges(self) -> np.ndarray:
        return np.array([q for _, q in self.items], dtype=np.int64)

    @cached_property
    def Q(self) -> int:
        return int(self.charges.sum())

    @property
    def neutral(self) -> bool:
        return self.Q == 0

    @cached_property
    def diameter(self) -> int:
        s = np.array(self.support)
        if len(s) == 1:
            return 0
        if self.domain.L <= 64:
            return int(self.domain.distance_matrix[np.ix_(s, s)].max())
        return int(self.domain._dist_rows(s)[:, s].max())

    @property
    def d(self) -> int:
        return self.diameter

    @cached_property
    def norm2sq(self) -> int:
        return int((self.charges ** 2).sum())

    @cached_property
    def norm1(self) -> int:
        return int(np.abs(self.charges).sum())

    def vector(self) -> np.ndarray:
        v = np.zeros(self.domain.n)
        v[list(self.support)] = self.charges
        return v

    def pair(self, f) -> float:
        """``<f, rho>`` for a vertex vector ``f`` (last axis indexes vertices)."""
        f = np.asarray(f)
        return f[..., list(self.support)] @ self.charges

    def restrict(self, idx: Iterable[int]) -> "ChargeDensity | None":
        keep = set(idx)
        items = [(i, q) for i, q in self.items if i in keep]
        return ChargeDensity(self.domain, items) if items else None

    def _combine(self, other, sign):
        if self.support_set & other.support_set:
            raise OverlappingSupports(f"{self} and {other}")
        return ChargeDensity(self.domain, list(self.items) + [(i, sign * q) for i, q in other.items])

    def __add__(self, other):
        return self._combine(other, 1)

    def __sub__(self, other):
        return self._combine(other, -1)

    def __neg__(self):
        return ChargeDensity(self.domain, [(i, -q) for i, q in self.items])

    def dist_to(self, other) -> int:
        """Distance between supports (a density or an index collection)."""
        B = other.support if isinstance(other, ChargeDensity) else list(other)
        D = self.domain
        if D.L <= 64:
            return int(D.distance_matrix[np.ix_(self.support, B)].min())
        return D.set_distance(self.support, B)

    def is_constituent_of(self, other: "ChargeDensity") -> bool:
        d = dict(other.items)
        return all(d.get(i) == q for i, q in self.items)


def density(domain, mapping) -> ChargeDensity:
    return ChargeDensity(domain, mapping)


# neighbourhoods --------------------------------------------------------


def center(rho: ChargeDensity) -> int:
    """Smallest support index realising the diameter."""
    s = np.array(rho.support)
    if len(s) == 1:
        return int(s[0])
    D = rho.domain.distance_matrix[np.ix_(s, s)] if rho.domain.L <= 64 else rho.domain._dist_rows(s)[:, s]
    rows = np.flatnonzero((D == rho.diameter).any(axis=1))
    return int(s[rows[0]])


def center_and_D(rho: ChargeDensity):
    """Return ``(center, D, D_plus)``; ``D`` is the open ball of radius ``2 d`` at the center.

    A single-site density gets ``D = {center}``.
    """
    j = center(rho)
    dom = rho.domain
    dj = dom.distance_from_set([j])
    if rho.diameter == 0:
        D = frozenset([j])
    else:
        D = frozenset(np.flatnonzero(dj < 2 * rho.diameter).tolist())
    mask = np.zeros(dom.n, dtype=bool)
    mask[list(D)] = True
    mask |= (dom.adjacency @ mask.astype(np.int8)) > 0
    Dp = frozenset(np.flatnonzero(mask).tolist())
    return j, D, Dp


# cover configuration ---------------------------------------------------


@dataclass(frozen=True)
class CoverConfig:
    alpha: float = 1.75
    M: int = 2 ** 16

    def __post_init__(self):
        if not (1.5 < self.alpha < 2.0):
            raise ValueError("alpha must lie in (3/2, 2)")
        if self.M < 1:
            raise ValueError("M must be positive")

    @property
    def b(self) -> float:
        return self.alpha + 3 + math.log2(self.M)

    @property
    def k0(self) -> float:
        return (self.alpha + self.b) / (self.alpha - 1)

    def n_of(self, d: int) -> int:
        """Top scale ``ceil(log2(M d^alpha))``; integer-safe for exact powers of two."""
        x = math.log2(self.M) + self.alpha * math.log2(d)
        r = round(x)
        return r if abs(x - r) < 1e-12 else math.ceil(x)

    def sep_threshold(self, k: int) -> float:
        return 2 * self.M * 2 ** (self.alpha * (k + 1))

    @property
    def label(self) -> str:
        return "paper" if self.M == 2 ** 16 and self.alpha == 1.75 else f"test-scaled(M={self.M},alpha={self.alpha})"


PAPER = CoverConfig()


def scaled_profile(M: int = 2) -> CoverConfig:
    return CoverConfig(alpha=1.75, M=M)


# exact set cover -------------------------------------------------------


def _popcount(x: int) -> int:
    return bin(x).count("1")


def _min_cover_size(universe: int, masks: list, upper: int) -> int:
    """Minimum number of masks whose union contains ``universe`` (branch and bound)."""
    if universe == 0:
        return 0
    masks = [m & universe for m in masks]
    masks = [m for m in masks if m]
    # drop masks dominated by another
    masks = sorted(set(masks), key=_popcount, reverse=True)
    kept = []
    for m in masks:
        if not any((m | k) == k for k in kept):
            kept.append(m)
    masks = kept
    if not masks:
        return math.inf
    nbits = universe.bit_length()
    covering = {b: [m for m in masks if (m >> b) & 1] for b in range(nbits) if (universe >> b) & 1}
    maxpop = _popcount(masks[0])
    best = [upper]

    def rec(unc: int, depth: int):
        if unc == 0:
            best[0] = min(best[0], depth)
            return
        if depth + -(-_popcount(unc) // maxpop) >= best[0]:
            return
        # element with fewest options
        opts = None
        x = unc
        while x:
            low = x & -x
            b = low.bit_length() - 1
            o = covering[b]
            if opts is None or len(o) < len(opts):
                opts = o
                if len(o) == 1:
                    break
            x ^= low
        for m in sorted(opts, key=lambda m: -_popcount(m & unc)):
            rec(unc & ~m, depth + 1)

    rec(universe, 0)
    return best[0]


def _greedy_size(universe, masks):
    unc, n = universe, 0
    while unc:
        m = max(masks, key=lambda m: _popcount(m & unc))
        if not m & unc:
            return math.inf
        unc &= ~m
        n += 1
    return n


def _lexmin_cover(universe: int, cands: list, m: int):
    """Lexicographically smallest index tuple of ``m`` candidate masks covering ``universe``."""
    masks = [c for c in cands]
    chosen = []
    unc = universe
    start = 0
    for slot in range(m):
        rem = m - slot
        for i in range(start, len(masks)):
            if not masks[i] & unc and unc:
                continue
            nu = unc & ~masks[i]
            tail = masks[i + 1:]
            need = 0 if nu == 0 else _min_cover_size(nu, tail, rem)
            if need <= rem - 1:
                chosen.append(i)
                unc = nu
                start = i + 1
                break
        else:
            return None
        if unc == 0:
            break
    return chosen if unc == 0 else None


@dataclass
class CoverResult:
    squares: list
    certified: bool = True
    doubling_conflict: bool = False


def _candidates(rho: ChargeDensity, k: int):
    """Canonical scale-``k`` squares: anchors on support coordinates, deduplicated by coverage."""
    dom = rho.domain
    supp = np.array(rho.support)
    xy = dom.coords[supp]
    L = dom.L
    side = 2 ** k
    xs = np.unique(xy[:, 0])
    ys = np.unique(xy[:, 1])
    ax, ay = np.meshgrid(xs, ys, indexing="ij")
    ax, ay = ax.ravel(), ay.ravel()
    if dom.kind is Kind.PERIODIC:
        inx = ((xy[None, :, 0] - ax[:, None]) % L) < side
        iny = ((xy[None, :, 1] - ay[:, None]) % L) < side
    else:
        dx = xy[None, :, 0] - ax[:, None]
        dy = xy[None, :, 1] - ay[:, None]
        inx = (dx >= 0) & (dx < side)
        iny = (dy >= 0) & (dy < side)
    B = inx & iny
    weights = [1 << t for t in range(len(supp))]
    out = {}
    for r in range(len(ax)):
        mask = sum(w for w, b in zip(weights, B[r]) if b)
        anchor = (int(ax[r]), int(ay[r]))
        if mask and (mask not in out or anchor < out[mask]):
            out[mask] = anchor
    cands = sorted(((a, m) for m, a in out.items()))
    return cands


def _support_mask(rho: ChargeDensity, members: frozenset) -> int:
    return sum(1 << t for t, i in enumerate(rho.support) if i in members)


def doubled(domain: LatticeDomain, s: DyadicSquare) -> DyadicSquare:
    """Square of twice the side centred on ``s`` (anchor clamped into the free domain)."""
    k = s.k + 1
    h = 2 ** (s.k - 1) if s.k >= 1 else 0
    a, b = s.anchor[0] - h, s.anchor[1] - h
    if domain.kind is Kind.PERIODIC:
        a, b = a % domain.L, b % domain.L
    else:
        a, b = max(a, 0), max(b, 0)
    return make_square(domain, k, (a, b))


def minimal_cover(rho: ChargeDensity, k: int, preferred: Iterable[DyadicSquare] = ()) -> CoverResult:
    """Minimum-cardinality cover of ``supp rho`` by scale-``k`` squares.

    Among minimum covers, one containing every square in ``preferred`` is
    chosen when that is still minimal; ties are then broken by the
    lexicographically smallest sorted anchor list.
    """
    dom = rho.domain
    if 2 ** k > dom.L:
        return CoverResult([make_square(dom, k, (0, 0))])
    n_supp = len(rho.support)
    if n_supp > EXACT_COVER_MAX:
        raise SupportTooLargeForExactCover(f"{n_supp} support points > {EXACT_COVER_MAX}")
    universe = (1 << n_supp) - 1
    cands = _candidates(rho, k)
    masks = [m for _, m in cands]
    m = _min_cover_size(universe, masks, _greedy_size(universe, masks) + 1)
    preferred = list(dict.fromkeys(preferred))
    conflict = False
    if preferred:
        pmask = 0
        for p in preferred:
            pmask |= _support_mask(rho, p.members)
        rest = universe & ~pmask
        need = _min_cover_size(rest, masks, m + 1) if rest else 0
        if len(preferred) + need == m:
            if rest:
                sel = _lexmin_cover(rest, masks, need)
                extra = [make_square(dom, k, cands[i][0]) for i in sel]
            else:
                extra = []
            squares = sorted(preferred + extra, key=lambda s: s.anchor)
            return CoverResult(squares)
        conflict = True
    sel = _lexmin_cover(universe, masks, m)
    squares = [make_square(dom, k, cands[i][0]) for i in sel]
    return CoverResult(squares, doubling_conflict=conflict)


def brute_force_cover_size(rho: ChargeDensity, k: int) -> int:
    """Minimum cover size by trying all subsets of all distinct scale-``k`` squares (tiny cases)."""
    from itertools import combinations

    from .lattice import enumerate_squares

    sq = enumerate_squares(rho.domain, k)
    supp = rho.support_set
    sets = list({frozenset(s.members & supp) for s in sq if s.members & supp})
    for r in range(1, len(supp) + 1):
        for combo in combinations(sets, r):
            if frozenset().union(*combo) >= supp:
                return r
    raise RuntimeError("no cover")


def square_distance(domain: LatticeDomain, s1: DyadicSquare, s2: DyadicSquare) -> int:
    a, b = list(s1.members), list(s2.members)
    if domain.L <= 64:
        return int(domain.distance_matrix[np.ix_(a, b)].min())
    return domain.set_distance(a, b)


def separated_subset(rho: ChargeDensity, k: int, cover: list, cfg: CoverConfig = PAPER) -> list:
    """Squares of ``cover`` at distance at least ``2 M 2^(alpha (k+1))`` from every other square."""
    if k < 1 or len(cover) <= 1:
        return []
    thr = cfg.sep_threshold(k)
    dom = rho.domain
    out = []
    for s in cover:
        if all(square_distance(dom, s, t) >= thr for t in cover if t is not s):
            out.append(s)
    return out


@dataclass
class MultiscaleCover:
    rho: ChargeDensity
    cfg: CoverConfig
    covers: dict = field(default_factory=dict)
    separated: dict = field(default_factory=dict)
    n: int = 0
    A: int = 0
    doubling_conflicts: list = field(default_factory=list)

    def size(self, k: int) -> int:
        return len(self.covers[k])

    @property
    def sep_total(self) -> int:
        return sum(len(v) for k, v in self.separated.items() if k >= 1)


def multiscale_cover(rho: ChargeDensity, cfg: CoverConfig = PAPER, top: int | None = None) -> MultiscaleCover:
    """Covers ``S_k`` and separated subsets for ``k = 0..n``, enforcing the doubling preference."""
    d = rho.diameter
    n = cfg.n_of(d) if d >= 1 else 0
    top = n if top is None else max(top, n)
    mc = MultiscaleCover(rho, cfg, n=n)
    prev_sep: list = []
    for k in range(0, top + 1):
        pref = [doubled(rho.domain, s) for s in prev_sep]
        res = minimal_cover(rho, k, pref)
        if res.doubling_conflict:
            mc.doubling_conflicts.append(k)
        mc.covers[k] = res.squares
        sep = separated_subset(rho, k, res.squares, cfg)
        mc.separated[k] = sep
        prev_sep = sep
    mc.A = sum(len(mc.covers[k]) for k in range(0, n + 1)) if d >= 1 else 0
    return mc


def A_functional(rho: ChargeDensity, cfg: CoverConfig = PAPER, D1: float | None = None) -> dict:
    """Cover functional with its lower bound and the two upper-bound ingredients."""
    mc = multiscale_cover(rho, cfg)
    lower = math.log2(rho.diameter + 1)
    s0 = len(mc.covers[0])
    sep = mc.sep_total
    out = {
        "A": mc.A,
        "lower": lower,
        "S0": s0,
        "sep_total": sep,
        "n": mc.n,
        "ratio": mc.A / (s0 + sep),
        "cover_sizes": [len(mc.covers[k]) for k in range(mc.n + 1)],
    }
    if D1 is not None:
        out["D1"] = D1
        out["bound_ratio"] = mc.A / (D1 * (s0 + sep))
    if lower > mc.A:
        raise AssertionError(f"lower bound violated: {lower} > {mc.A}")
    return out


# constants of the cover upper bound -------------------------------------


def _exact(x: float):
    fr = Fraction(x).limit_denominator(1 << 20)
    return fr if float(fr) == x else None


@dataclass
class Prop21Constants:
    cfg: CoverConfig
    kmax: int
    gamma: np.ndarray
    ell: np.ndarray
    sum_pow: float
    sum_pow_tail: float
    sep_factor: float
    D1: float
    sandwich_ok: bool
    nmj_ok: bool


def _gamma(cfg: CoverConfig, k):
    return np.floor((np.asarray(k, dtype=float) - cfg.b) / cfg.alpha).astype(np.int64)


def _gamma_exact(alpha: Fraction, b: Fraction, k: int) -> int:
    return math.floor((k - b) / alpha)


def ell_table(cfg: CoverConfig, kmax: int) -> np.ndarray:
    """Number of composition steps of the scale map staying nonnegative, for ``k <= kmax``."""
    k = np.arange(kmax + 1)
    ell = np.zeros(kmax + 1, dtype=np.int64)
    cur = k.copy()
    alive = cur >= 0
    while alive.any():
        nxt = _gamma(cfg, cur)
        alive = alive & (nxt >= 0)
        ell += alive
        cur = nxt
    return ell


def prop21_constants(cfg: CoverConfig = PAPER, kmax: int = 2048, sum_kmax: int = 10 ** 7) -> Prop21Constants:
    """Tabulate the scale map and its iteration count; derive the cover constant ``D1``."""
    alpha_f, b_f = _exact(cfg.alpha), _exact(cfg.b)
    exact = alpha_f is not None and b_f is not None
    k = np.arange(kmax + 1)
    gam = _gamma(cfg, k)
    ell = ell_table(cfg, kmax)

    sandwich = True
    if exact:
        for kk in range(math.ceil(b_f), kmax + 1):
            g = kk
            geo_b = Fraction(0)
            geo_1 = Fraction(0)
            for m in range(0, int(ell[kk]) + 1):
                if m > 0:
                    g = _gamma_exact(alpha_f, b_f, g)
                    geo_b += alpha_f ** (-m)
                    geo_1 += alpha_f ** (-(m - 1))
                head = Fraction(kk) * alpha_f ** (-m)
                lo0 = head - (alpha_f + b_f) / (alpha_f - 1)
                lo1 = head - b_f * geo_b - geo_1
                hi = head - b_f * geo_b
                if not (lo0 <= lo1 <= g <= hi):
                    sandwich = False
                if g < b_f:
                    break

    # interval sizes of preimages of the iterated scale map
    nmj = True
    for m in range(1, 5):
        cur = k.copy()
        for _ in range(m):
            cur = np.where(cur >= 0, _gamma(cfg, cur), -1)
        top_j = cur[-1] - 1
        for j in range(0, max(top_j, 0) + 1):
            size = int(np.count_nonzero(cur == j))
            if size > cfg.alpha ** m * 2 * cfg.alpha / (cfg.alpha - 1):
                nmj = False

    big = ell_table(cfg, sum_kmax)
    sum_pow = float(np.sum(2.0 ** (-big.astype(float))))
    p = 1.0 / math.log2(cfg.alpha)
    k0 = cfg.k0
    # tail over k > sum_kmax: ell(k) >= floor(log_alpha(k/k0)) gives 2^-ell(k) <= 2 (k0/k)^p
    tail = float(2.0 * k0 ** p * zeta(p, sum_kmax + 1))
    sep_factor = 4 * cfg.alpha ** 2 / ((cfg.alpha - 1) * (2 - cfg.alpha))
    D1 = max(sum_pow + tail, sep_factor)
    return Prop21Constants(cfg, kmax, gam, ell, sum_pow, tail, sep_factor, D1, sandwich, nmj)


def pair_triple_cover(n_vertices: int, edges) -> list:
    """Split the vertices of a graph without isolated vertices into ``floor(n/2)`` connected sets of size 2 or 3."""
    adj = {v: set() for v in range(n_vertices)}
    for u, v in edges:
        if u != v:
            adj[u].add(v)
            adj[v].add(u)
    if any(not nb for nb in adj.values()):
        raise ValueError("graph has isolated vertices")
    # spanning forest
    seen, forest = set(), {v: set() for v in adj}
    for root in adj:
        if root in seen:
            continue
        seen.add(root)
        stack = [root]
        while stack:
            u = stack.pop()
            for w in sorted(adj[u]):
                if w not in seen:
                    seen.add(w)
                    forest[u].add(w)
                    forest[w].add(u)
                    stack.append(w)
    groups = []
    comps = []
    seen = set()
    for root in forest:
        if root in seen:
            continue
        comp, stack = set(), [root]
        while stack:
            u = stack.pop()
            if u in comp:
                continue
            comp.add(u)
            stack.extend(forest[u] - comp)
        seen |= comp
        comps.append(comp)
    for comp in comps:
        tree = {v: set(forest[v]) & comp for v in comp}
        groups.extend(_tree_groups(tree))
    return groups


def _tree_groups(tree: dict) -> list:
    tree = {v: set(nb) for v, nb in tree.items()}
    out = []
    while len(tree) > 3:
        # a deepest leaf of a rooted tree has a parent whose other children are leaves
        root = min(tree)
        parent, order, stack = {root: None}, [], [root]
        while stack:
            u = stack.pop()
            order.append(u)
            for w in tree[u]:
                if w not in parent:
                    parent[w] = u
                    stack.append(w)
        depth = {root: 0}
        for u in order[1:]:
            depth[u] = depth[parent[u]] + 1
        v1 = max(order, key=lambda u: (depth[u], -u))
        v2 = parent[v1]
        kids = [w for w in tree[v2] if w != parent[v2]]
        if len(kids) >= 2:
            other = next(w for w in kids if w != v1)
            group, drop = {v1, v2, other}, {v1, other}
        else:
            v3 = parent[v2]
            group, drop = {v1, v2, v3}, {v1, v2}
        out.append(group)
        for u in drop:
            for w in tree[u]:
                tree[w].discard(u)
            del tree[u]
    out.append(set(tree))
    return out


# neutral edge decomposition ---------------------------------------------


def neutral_edge_decomposition(rho: ChargeDensity) -> dict:
    """Integer edge weights ``c`` with ``<s, rho> = sum c_{jl} (s_j - s_l)`` over edges inside ``D(rho)``.

    Charges are transported along shortest paths inside ``D(rho)`` to the center,
    one positive unit paired with one negative unit at a time.
    """
    if not rho.neutral:
        raise NotNeutral(f"charge {rho.Q}")
    dom = rho.domain
    j0, D, _ = center_and_D(rho)
    Dl = sorted(D)
    pos = {v: t for t, v in enumerate(Dl)}
    # BFS tree from the center inside D
    parent = {j0: None}
    queue = [j0]
    for u in queue:
        for w in dom.neighbors(u):
            w = int(w)
            if w in pos and w not in parent:
                parent[w] = u
                queue.append(w)
    c: dict = {}

    def push(v, q):
        # move charge q from v to the center: <s, q(d_v - d_center)> telescopes
        while parent[v] is not None:
            p = parent[v]
            c[(v, p)] = c.get((v, p), 0) + q
            v = p

    for v, q in rho.items:
        if v not in parent:
            raise AssertionError("support point outside the connected part of D")
        push(v, q)
    return {e: w for e, w in c.items() if w != 0}


def decomposition_pair(c: dict, sigma) -> float:
    sigma = np.asarray(sigma)
    return float(sum(w * (sigma[a] - sigma[b]) for (a, b), w in c.items()))
