"""Expansion of products of trigonometric weights into mixtures of charge ensembles.

An ensemble is stored as a sorted tuple of ``Item`` (density, coefficient,
number of factor-3 merges that produced it).  Mixtures are dictionaries from
states to positive weights; identical states reached along different merge
orders are aggregated by adding their weights, which keeps every term exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, NamedTuple

import numpy as np

from .density import PAPER, ChargeDensity, CoverConfig, minimal_cover
from .errors import NonTermination, NotNormalized, OverlappingSupports
from .lattice import LatticeDomain
from .weights import TrigWeight, site_activity, site_probabilities

MERGE_WEIGHTS = (1 / 3, 1 / 3, 1 / 6, 1 / 6)
K_MAX_LEVEL = 80


class Item(NamedTuple):
    rho: ChargeDensity
    K: float
    n3: int = 0

    def key(self):
        return self.rho.support


def _sorted(items) -> tuple:
    return tuple(sorted(items, key=Item.key))


def trig_merge(K1: float, rho1: ChargeDensity, K2: float, rho2: ChargeDensity):
    """Four ``(weight, K, density)`` terms whose convex combination equals the product of two factors."""
    if rho1.support_set & rho2.support_set:
        raise OverlappingSupports(f"{rho1} and {rho2}")
    return [
        (1 / 3, 3 * K1, rho1),
        (1 / 3, 3 * K2, rho2),
        (1 / 6, 3 * K1 * K2, rho1 - rho2),
        (1 / 6, 3 * K1 * K2, rho1 + rho2),
    ]


def _merge_items(a: Item, b: Item):
    return [
        (1 / 3, Item(a.rho, 3 * a.K, a.n3 + 1), None),
        (1 / 3, Item(b.rho, 3 * b.K, b.n3 + 1), None),
        (1 / 6, Item(a.rho - b.rho, 3 * a.K * b.K, a.n3 + b.n3 + 1), None),
        (1 / 6, Item(a.rho + b.rho, 3 * a.K * b.K, a.n3 + b.n3 + 1), None),
    ]


def is_ensemble(items: Iterable) -> bool:
    seen = set()
    for it in items:
        rho = it.rho if isinstance(it, Item) else it
        if seen & rho.support_set:
            return False
        seen |= rho.support_set
    return True


def is_k_ensemble(items, k: int) -> bool:
    rhos = [it.rho if isinstance(it, Item) else it for it in items]
    thr = 2 ** k if k >= 0 else 0.5
    for i in range(len(rhos)):
        for j in range(i + 1, len(rhos)):
            if rhos[i].dist_to(rhos[j]) <= thr:
                return False
    return True


class _DistCache:
    def __init__(self):
        self.cache = {}

    def __call__(self, r1: ChargeDensity, r2: ChargeDensity) -> int:
        key = (r1.support, r2.support) if r1.support < r2.support else (r2.support, r1.support)
        d = self.cache.get(key)
        if d is None:
            d = r1.dist_to(r2)
            self.cache[key] = d
        return d


def _violating_pair(items: tuple, k: int, dist):
    """Indices of the closest pair at distance at most ``2^k`` (ties: lexicographic supports)."""
    best = None
    thr = 2 ** k
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            d = dist(items[i].rho, items[j].rho)
            if d <= thr:
                key = (d, items[i].rho.support, items[j].rho.support)
                if best is None or key < best[0]:
                    best = (key, i, j)
    return None if best is None else (best[1], best[2])


@dataclass
class EnsembleMixture:
    """Convex combination of ensembles: ``terms`` maps a sorted item tuple to its weight."""

    terms: dict = field(default_factory=dict)
    merges: int = 0

    def total(self) -> float:
        return math.fsum(self.terms.values())

    def __len__(self):
        return len(self.terms)

    def items(self):
        return self.terms.items()


def expand_to_k_ensemble(items, k: int, dist=None) -> EnsembleMixture:
    """Merge factors pairwise until every output ensemble is a ``k``-ensemble."""
    dist = dist or _DistCache()
    items = _sorted(Item(*it) if not isinstance(it, Item) else it for it in items)
    if not is_ensemble(items):
        raise OverlappingSupports("input is not an ensemble")
    frontier = {items: 1.0}
    done: dict = {}
    merges = 0
    while frontier:
        nxt: dict = {}
        for state, c in frontier.items():
            pair = _violating_pair(state, k, dist)
            if pair is None:
                done[state] = done.get(state, 0.0) + c
                continue
            i, j = pair
            rest = state[:i] + state[i + 1:j] + state[j + 1:]
            merges += 1
            for w, new, _ in _merge_items(state[i], state[j]):
                child = _sorted(rest + (new,))
                nxt[child] = nxt.get(child, 0.0) + c * w
        frontier = nxt
    return EnsembleMixture(done, merges)


def merge_coefficient_check(parent_items, mixture: EnsembleMixture, k: int, with_cover: bool = True):
    """Check the merge coefficient bounds for every output density.

    Returns the worst ``log|K'| - log(3^n prod |K|^|eps|)`` (must be <= 0) and,
    when the parent is a ``(k-1)``-ensemble, the worst ``n / A_{k-1}`` (must be <= 100).
    """
    parent = [Item(*it) if not isinstance(it, Item) else it for it in parent_items]
    sub_prev = is_k_ensemble(parent, k - 1)
    worst_log, worst_ratio = -math.inf, 0.0
    for state, _ in mixture.items():
        for it in state:
            rho = it.rho
            eps = []
            for p in parent:
                if p.rho.support_set <= rho.support_set:
                    if p.rho.is_constituent_of(rho):
                        eps.append((p, 1))
                    elif (-p.rho).is_constituent_of(rho):
                        eps.append((p, -1))
                    else:
                        raise AssertionError("output density is not compatible with its parent")
                elif p.rho.support_set & rho.support_set:
                    raise AssertionError("output density splits a parent density")
            recon = sum((e * p.rho.vector() for p, e in eps), np.zeros(rho.domain.n))
            if not np.array_equal(recon, rho.vector()):
                raise AssertionError("parent reconstruction failed")
            n_near = sum(1 for p in parent if rho.dist_to(p.rho) <= 2 ** k)
            prodK = math.prod(abs(p.K) for p, _ in eps)
            if it.K != 0:
                lhs = math.log(abs(it.K))
                rhs = n_near * math.log(3) + (math.log(prodK) if prodK > 0 else -math.inf)
                worst_log = max(worst_log, lhs - rhs)
            if sub_prev and with_cover:
                A_prev = len(rho.support) if k - 1 <= 0 else len(minimal_cover(rho, k - 1).squares)
                worst_ratio = max(worst_ratio, n_near / A_prev)
    return worst_log, worst_ratio, sub_prev


# single-site mixture --------------------------------------------------


def weights_to_density_mixture(domain: LatticeDomain, weights, max_dims: int = 20, drop_zero: bool = True):
    """Enumerate ``(xi(q), initial items)`` over charge vectors ``q`` (one charge per site).

    ``weights`` is one TrigWeight or a per-vertex list.  Each site carries a
    charge ``1 <= q <= N`` with coefficient ``2 C(N) e^{q^2} hat(q)``.  Sites
    whose coefficient vanishes contribute the factor 1 and are left out when
    ``drop_zero`` is set.
    """
    n = domain.n
    ws = list(weights) if isinstance(weights, (list, tuple)) else [weights] * n
    if len(ws) != n:
        raise ValueError("one weight per vertex required")
    for w in ws:
        if not isinstance(w, TrigWeight):
            raise NotNormalized("weights must be TrigWeight")
    if all(w.N == 0 for w in ws):
        yield 1.0, ()
        return
    if any(w.N == 0 for w in ws):
        raise NotNormalized("mixed trivial and nontrivial weights are not supported")
    dims = sum(math.log2(w.N) for w in ws if w.N > 1)
    if dims > max_dims:
        raise ValueError(f"{dims:.1f} bits of charge vectors exceed exact-enumeration budget")
    probs = [site_probabilities(w) for w in ws]
    for qs in product(*[range(1, w.N + 1) for w in ws]):
        xi = math.prod(probs[j][q - 1] for j, q in enumerate(qs))
        items = tuple(Item(ChargeDensity(domain, [(j, q)]), site_activity(ws[j], q), 0) for j, q in enumerate(qs))
        if drop_zero:
            items = tuple(it for it in items if it.K != 0.0)
        yield xi, items


def evaluate_site_product(domain, weights, psi) -> np.ndarray:
    """``prod_j w_j(psi_j)`` for ``psi`` of shape (..., n)."""
    psi = np.asarray(psi, dtype=float)
    ws = list(weights) if isinstance(weights, (list, tuple)) else [weights] * domain.n
    out = np.ones(psi.shape[:-1])
    for j, w in enumerate(ws):
        out = out * w(psi[..., j])
    return out


def evaluate_ensemble_product(items, psi) -> np.ndarray:
    """``prod (1 + K cos <psi, rho>)`` for ``psi`` of shape (..., n)."""
    psi = np.asarray(psi, dtype=float)
    out = np.ones(psi.shape[:-1])
    for it in items:
        it = it if isinstance(it, Item) else Item(*it)
        out = out * (1.0 + it.K * np.cos(it.rho.pair(psi)))
    return out


# renormalization ------------------------------------------------------


class RState(NamedTuple):
    items: tuple
    good: frozenset  # densities frozen at earlier scales


@dataclass
class RenormResult:
    terms: dict  # RState -> weight
    levels: int
    cfg: CoverConfig
    scale_claim_ok: bool
    merges: int

    def total(self):
        return math.fsum(self.terms.values())

    def ensembles(self):
        for st, c in self.terms.items():
            yield c, st.items


def _scan_good(items: tuple, good: frozenset, cfg: CoverConfig, dist) -> frozenset:
    """Freeze neutral densities that are far from everything else."""
    good = set(good)
    neutral = [it.rho for it in items if it.rho.neutral]
    cands = sorted((r for r in neutral if r not in good), key=lambda r: (r.diameter, r.support))
    M, a = cfg.M, cfg.alpha
    for r in cands:
        ok = all(dist(r1, r) >= M * min(r1.diameter, r.diameter) ** a for r1 in neutral if r1 != r)
        if ok:
            ok = all(dist(it.rho, r) >= M * r.diameter ** a for it in items if it.rho not in good and it.rho != r)
        if ok:
            good.add(r)
    return frozenset(good)


def _terminal(items: tuple, good: frozenset) -> bool:
    rest = [it.rho for it in items if it.rho not in good]
    return len(rest) == 0 or (len(rest) == 1 and not rest[0].neutral)


def run_renormalization(initial, cfg: CoverConfig = PAPER, k_max: int = K_MAX_LEVEL, check_scale_claim: bool = True) -> RenormResult:
    """Scale-by-scale merging with freezing of well-separated neutral densities."""
    dist = _DistCache()
    start = RState(_sorted(Item(*it) if not isinstance(it, Item) else it for it in initial), frozenset())
    if _terminal(start.items, start.good):
        return RenormResult({start: 1.0}, 0, cfg, True, 0)
    frontier = {start: 1.0}
    done: dict = {}
    claim_ok = True
    merges = 0
    k = 0
    while frontier:
        if k > k_max:
            raise NonTermination(f"renormalization still running at scale {k}")
        nxt: dict = {}
        for st, c in frontier.items():
            free = tuple(it for it in st.items if it.rho not in st.good)
            frozen = tuple(it for it in st.items if it.rho in st.good)
            if len(free) >= 2:
                mix = expand_to_k_ensemble(free, k, dist)
                merges += mix.merges
                children = [(_sorted(e + frozen), w) for e, w in mix.items()]
            else:
                children = [(st.items, 1.0)]
            for items, w in children:
                good = _scan_good(items, st.good, cfg, dist)
                if check_scale_claim:
                    for it in items:
                        r = it.rho
                        if r.neutral and cfg.M * r.diameter ** cfg.alpha <= 2 ** k and r not in good:
                            claim_ok = False
                ns = RState(items, good)
                target = done if _terminal(items, good) else nxt
                target[ns] = target.get(ns, 0.0) + c * w
        frontier = nxt
        k += 1
    return RenormResult(done, k, cfg, claim_ok, merges)


# structural properties of the final ensembles -------------------------------


def property_a(items) -> bool:
    return sum(1 for it in items if not it.rho.neutral) <= 1


def property_b(items, cfg: CoverConfig) -> bool:
    rhos = [it.rho for it in items]
    M, a = cfg.M, cfg.alpha
    for i in range(len(rhos)):
        for j in range(i + 1, len(rhos)):
            r1, r2 = rhos[i], rhos[j]
            d = r1.dist_to(r2)
            if d < M * min(r1.diameter, r2.diameter) ** a:
                return False
            for rc, r in ((r1, r2), (r2, r1)):
                if not rc.neutral and d < M * r.diameter ** a:
                    return False
    return True


def splittings(rho: ChargeDensity):
    """All ordered-once decompositions into two densities with disjoint nonempty supports."""
    items = rho.items
    n = len(items)
    for mask in range(1, 2 ** (n - 1)):
        a = [items[t] for t in range(n) if (mask >> t) & 1]
        b = [items[t] for t in range(n) if not (mask >> t) & 1]
        yield ChargeDensity(rho.domain, a), ChargeDensity(rho.domain, b)


def property_c(items, cfg: CoverConfig, max_norm1: int = 6) -> bool:
    """Far-apart splittings of neutral densities have non-neutral parts (checked up to ``max_norm1``)."""
    for it in items:
        r = it.rho
        if not r.neutral or r.norm1 > max_norm1:
            continue
        for r1, r2 in splittings(r):
            thr = 2 * cfg.M * min(r1.diameter, r2.diameter) ** cfg.alpha
            if r1.dist_to(r2) >= thr and (r1.neutral or r2.neutral):
                return False
    return True


def K_bound_excess(item: Item, site_weights: dict, cfg: CoverConfig):
    """``log|K| - log(prod e^{q^2} |hat(q)|)`` and the cover functional ``A`` for a neutral item.

    ``site_weights`` maps vertex index to TrigWeight.  Returns ``(excess, A)``.
    """
    from .density import multiscale_cover

    r = item.rho
    if item.K == 0:
        return -math.inf, None
    base = 0.0
    for j, q in r.items:
        h = abs(site_weights[j].hat(abs(q)))
        if h == 0:
            return -math.inf, None
        base += q * q + math.log(h)
    A = multiscale_cover(r, cfg).A
    return math.log(abs(item.K)) - base, A


def derived_D2() -> float:
    """Exponent constant ``C1 = 100 ln 3`` of the merge coefficient bound, used as the bound for ``D2``."""
    return 100 * math.log(3)
