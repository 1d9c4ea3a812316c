"""Spin waves: real fields ``a`` with a positive energy gain against a neutral density.

The gain of ``a`` against ``rho`` is ``<a, rho> - (beta/2) sum_edges (a_j - a_l)^2``.
The assembled wave is the bipartite wave ``a0`` plus one plateau wave per
separated cover square; each piece changes on its own set of edges so the
gains add up exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.sparse.csgraph import connected_components

from .density import PAPER, ChargeDensity, CoverConfig, center_and_D, multiscale_cover
from .errors import (
    BipartitionUnavailable,
    GradientOverlap,
    NeutralRestriction,
    NotBipartite,
    NotNeutral,
    PropertyViolation,
)
from .lattice import DyadicSquare, Kind, LatticeDomain

CASE_SPLIT = 10  # scales below use the flat wave, scales at or above the log profile
PLATEAU_LOG = math.log(6 / 5)
GRAD_BUDGET = 32.0  # 16 for the annulus edges plus 16 reserved for plateau corrections
D3 = min(2.0 ** -13, PLATEAU_LOG ** 2 / (2 * GRAD_BUDGET))


def gradient(domain: LatticeDomain, a) -> np.ndarray:
    e = domain.edges
    a = np.asarray(a, dtype=float)
    return a[e[:, 1]] - a[e[:, 0]]


def grad_norm(domain: LatticeDomain, a) -> float:
    """``sum_edges mult (a_j - a_l)^2``."""
    g = gradient(domain, a)
    return float(np.dot(domain.mult, g * g))


def energy(domain: LatticeDomain, a, rho: ChargeDensity, beta: float) -> float:
    return float(rho.pair(np.asarray(a, dtype=float)) - 0.5 * beta * grad_norm(domain, a))


def energy_laplacian(domain: LatticeDomain, a, rho: ChargeDensity, beta: float) -> float:
    """Same gain written with the Laplacian: ``<a, rho> - (beta/2) <a, -Lap a>``."""
    a = np.asarray(a, dtype=float)
    return float(rho.pair(a) + 0.5 * beta * np.dot(a, domain.laplacian @ a))


@dataclass
class SpinWave:
    domain: LatticeDomain
    a: np.ndarray
    rho: ChargeDensity
    beta: float
    meta: dict = field(default_factory=dict)

    @property
    def energy(self) -> float:
        return energy(self.domain, self.a, self.rho, self.beta)

    def support(self) -> frozenset:
        return frozenset(np.flatnonzero(self.a != 0).tolist())

    def laplacian_support(self) -> frozenset:
        lap = self.domain.laplacian @ self.a
        return frozenset(np.flatnonzero(np.abs(lap) > 1e-15).tolist())


# initial wave ---------------------------------------------------------


def _omega1(rho: ChargeDensity, par: np.ndarray) -> int:
    """Parity class carrying at least half of ``||rho||^2`` (holding the center when ``d = 1``)."""
    w = [0, 0]
    for j, q in rho.items:
        w[int(par[j])] += q * q
    if rho.diameter == 1:
        j0, _, _ = center_and_D(rho)
        side = int(par[j0])
        if 2 * w[side] < w[0] + w[1]:
            raise BipartitionUnavailable("center side carries less than half the weight")
        return side
    return 0 if w[0] >= w[1] else 1


def build_a0(rho: ChargeDensity, beta: float) -> SpinWave:
    """``rho(j) / (deg_j beta)`` on the heavier parity class, zero elsewhere."""
    if not rho.neutral:
        raise NotNeutral(repr(rho))
    dom = rho.domain
    try:
        par = dom.parity
    except NotBipartite as exc:
        raise BipartitionUnavailable(str(exc)) from exc
    side = _omega1(rho, par)
    a = np.zeros(dom.n)
    deg = dom.degree
    for j, q in rho.items:
        if par[j] == side:
            a[j] = q / (deg[j] * beta)
    return SpinWave(dom, a, rho, beta, {"parts": ["a0"], "side": side})


def a0_energy_exact(rho: ChargeDensity, beta: Fraction, side: int | None = None) -> Fraction:
    """Closed form ``(1/2beta) sum_{heavy side} rho^2 / deg`` in exact arithmetic."""
    dom = rho.domain
    par = dom.parity
    side = _omega1(rho, par) if side is None else side
    deg = dom.degree
    tot = sum((Fraction(q * q, int(deg[j])) for j, q in rho.items if par[j] == side), Fraction(0))
    return tot / (2 * Fraction(beta))


def initial_wave_checks(sw: SpinWave, others=()) -> dict:
    """Support, Laplacian support, constancy and gain properties of ``a0``."""
    rho, dom = sw.rho, sw.domain
    _, D, _ = center_and_D(rho)
    near = frozenset(np.flatnonzero(dom.distance_from_set(rho.support) <= 1).tolist())
    supp = sw.support()
    const = True
    for r in others:
        _, _, Dp = center_and_D(r)
        vals = sw.a[list(Dp)]
        const &= bool(np.all(vals == vals[0]))
    bound = rho.norm2sq / (16 * sw.beta)
    return {
        "support_near": supp <= near,
        "support_in_D": supp <= D,
        "laplacian_in_D": sw.laplacian_support() <= D,
        "constant_on_neighbours": const,
        "energy": sw.energy,
        "energy_bound": bound,
        "energy_ok": sw.energy >= bound - 1e-12,
    }


# components of the neighbour neighbourhoods ---------------------------------


def neighbour_set(rho: ChargeDensity, ensemble) -> list:
    """Other neutral densities of the ensemble with diameter at most ``2 d(rho)``."""
    return [r for r in ensemble if r != rho and r.neutral and r.diameter <= 2 * rho.diameter]


def _plus(domain: LatticeDomain, idx) -> np.ndarray:
    mask = np.zeros(domain.n, dtype=bool)
    mask[list(idx)] = True
    return mask


def set_diameter(domain: LatticeDomain, idx) -> int:
    idx = np.asarray(sorted(idx), dtype=np.int64)
    if domain.L <= 64:
        return int(domain.distance_matrix[np.ix_(idx, idx)].max())
    if domain.z_index is None or domain.z_index not in idx:
        c = domain.coords[idx]
        return int(domain._site_dist(c[:, None, :], c[None, :, :]).max())
    return int(domain._dist_rows(idx)[:, idx].max())


def outer_boundary(domain: LatticeDomain, idx) -> frozenset:
    mask = _plus(domain, idx)
    nb = (domain.adjacency @ mask.astype(np.int8)) > 0
    return frozenset(np.flatnonzero(nb & ~mask).tolist())


@dataclass
class Component:
    vertices: frozenset
    diameter: int
    boundary: frozenset


@dataclass
class ComponentGeometry:
    components: list
    margins: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.components)


def component_geometry(rho_star: ChargeDensity, neighbours, cfg: CoverConfig = PAPER, check: bool = True) -> ComponentGeometry:
    """Connected components of the union of ``D+`` over ``neighbours``."""
    dom = rho_star.domain
    neighbours = list(neighbours)
    if not neighbours:
        return ComponentGeometry([])
    mask = np.zeros(dom.n, dtype=bool)
    for r in neighbours:
        _, _, Dp = center_and_D(r)
        mask[list(Dp)] = True
    verts = np.flatnonzero(mask)
    sub = dom.adjacency[verts][:, verts]
    ncomp, lab = connected_components(sub, directed=False)
    comps = []
    for c in range(ncomp):
        E = frozenset(verts[lab == c].tolist())
        comps.append(Component(E, set_diameter(dom, E), outer_boundary(dom, E)))
    comps.sort(key=lambda c: min(c.vertices))
    geo = ComponentGeometry(comps)
    M, al = cfg.M, cfg.alpha
    m1 = m2 = m3 = math.inf
    for i, E in enumerate(comps):
        dist_star = dom.set_distance(rho_star.support, E.vertices) if dom.L > 64 else int(
            dom.distance_matrix[np.ix_(list(rho_star.support), list(E.vertices))].min()
        )
        m2 = min(m2, dist_star - M / 128 * E.diameter ** al)
        m3 = min(m3, 64 * E.diameter - len(E.boundary))
        for F in comps[i + 1:]:
            dEF = dom.set_distance(E.vertices, F.vertices)
            m1 = min(m1, dEF + E.diameter + F.diameter - M / 25 * min(E.diameter, F.diameter) ** al)
    geo.margins = {"pair_separation": m1, "distance_to_target": m2, "boundary_size": m3}
    if check:
        for name, m in geo.margins.items():
            if m < 0:
                raise PropertyViolation(f"component {name} margin {m:.4g} < 0")
        if any(E.diameter < 4 for E in comps):
            raise PropertyViolation("component of diameter below 4")
    return geo


# per-square waves -----------------------------------------------------------


def _axis_gap(x: np.ndarray, lo: int, side: int, L: int, periodic: bool) -> np.ndarray:
    if periodic:
        if side >= L:
            return np.zeros_like(x)
        t = (x - lo) % L
        return np.where(t < side, 0, np.minimum(t - (side - 1), L - t))
    hi = min(lo + side - 1, L - 1)
    return np.maximum(0, np.maximum(lo - x, x - hi))


def square_distance_field(domain: LatticeDomain, s: DyadicSquare) -> np.ndarray:
    """``dist(j, s)`` for every vertex."""
    if domain.kind is Kind.ZERO:
        return domain.distance_from_set(s.members)
    L = domain.L
    per = domain.kind is Kind.PERIODIC
    side = min(s.side, L) if not per else s.side
    x, y = domain.coords[:, 0], domain.coords[:, 1]
    return _axis_gap(x, s.anchor[0], side, L, per) + _axis_gap(y, s.anchor[1], side, L, per)


def _restricted_charge(rho: ChargeDensity, s: DyadicSquare) -> int:
    return int(sum(q for j, q in rho.items if j in s.members))


def _case1(domain, s, q, beta, dist):
    a = np.where(dist <= 1, q / (2 ** (s.k + 3) * beta), 0.0)
    return a, {"case": 1}


def plateau_profile(dist: np.ndarray, k: int) -> np.ndarray:
    """``ln(6/5)`` inside ``R1``, ``ln(R2/|j|)`` between ``R1`` and ``R2``, 0 beyond."""
    r = dist + 2.0 ** (k - 1)
    R1 = 2.0 ** (k - 1) + 2.0 ** (k - 3)
    R2 = 1.2 * R1
    return np.where(r <= R1, PLATEAU_LOG, np.where(r >= R2, 0.0, np.log(R2 / r)))


def _pick_anchor_point(E: frozenset, r: np.ndarray, R1: float, R2: float) -> int:
    idx = np.array(sorted(E))
    for R in (R1, R2):
        hit = idx[np.isclose(r[idx], R)]
        if hit.size:
            return int(hit[0])
    return int(idx[0])


def _case2(domain, s, q, beta, dist, geometry):
    k = s.k
    b = plateau_profile(dist, k)
    r = dist + 2.0 ** (k - 1)
    R1 = 2.0 ** (k - 1) + 2.0 ** (k - 3)
    R2 = 1.2 * R1
    chosen = []
    in_comp = np.zeros(domain.n, dtype=bool)
    for E in geometry.components if geometry is not None else []:
        x = _pick_anchor_point(E.vertices, r, R1, R2)
        ids = list(E.vertices)
        b[ids] = b[x]
        in_comp[ids] = True
        chosen.append(x)
    S = grad_norm(domain, b)
    g = gradient(domain, b)
    e = domain.edges
    free_edges = ~(in_comp[e[:, 0]] | in_comp[e[:, 1]])
    annulus = float(np.dot(domain.mult[free_edges], g[free_edges] ** 2))
    gamma = PLATEAU_LOG * q / (beta * S)
    return gamma * b, {"case": 2, "grad_norm": S, "annulus_grad_norm": annulus, "gamma": gamma, "anchors": chosen}


def build_as(s: DyadicSquare, rho: ChargeDensity, beta: float, geometry: ComponentGeometry | None = None) -> SpinWave:
    """Wave attached to a separated square ``s`` of scale ``k >= 1``."""
    dom = rho.domain
    q = _restricted_charge(rho, s)
    if q == 0:
        raise NeutralRestriction(f"square {s.anchor} at scale {s.k} meets a neutral piece")
    if s.k < 1:
        raise ValueError("separated squares have scale >= 1")
    dist = square_distance_field(dom, s)
    if s.k < CASE_SPLIT:
        a, meta = _case1(dom, s, q, beta, dist)
    else:
        a, meta = _case2(dom, s, q, beta, dist, geometry)
    meta.update({"square": (s.k, s.anchor), "charge": q, "dist": dist})
    return SpinWave(dom, a, rho, beta, meta)


def square_wave_checks(sw: SpinWave, geometry: ComponentGeometry | None = None, D3_value: float = D3) -> dict:
    """Support, plateau, constancy on components and the gain lower bound for a square wave."""
    k = sw.meta["square"][0]
    dist = sw.meta["dist"]
    a = sw.a
    q = sw.meta["charge"]
    supp_ok = bool(np.all(a[dist > 2 ** (k - 1)] == 0))
    radius = 1 if sw.meta["case"] == 1 else math.ceil(2.0 ** (k - 3))
    inner = a[dist <= radius]
    plateau_ok = bool(np.all(inner == inner[0])) if inner.size else True
    comp_ok = True
    for E in geometry.components if geometry is not None else []:
        v = a[list(E.vertices)]
        comp_ok &= bool(np.all(v == v[0]))
    gain = sw.energy
    out = {
        "case": sw.meta["case"],
        "support_ok": supp_ok,
        "plateau_ok": plateau_ok,
        "components_ok": comp_ok,
        "gain": gain,
        "beta_gain": sw.beta * gain,
        "margin": sw.beta * gain - D3_value,
    }
    if sw.meta["case"] == 1:
        out["case1_bound"] = 1 / (2 ** (k + 4) * sw.beta)
        out["case1_ok"] = gain >= out["case1_bound"] - 1e-15
    else:
        out["grad_norm"] = sw.meta["grad_norm"]
        out["annulus_ok"] = sw.meta["annulus_grad_norm"] <= 16.0
        out["grad_budget_ok"] = sw.meta["grad_norm"] <= GRAD_BUDGET
        out["closed_form_gain"] = PLATEAU_LOG ** 2 * q * q / (2 * sw.beta * sw.meta["grad_norm"])
    return out


# assembly -----------------------------------------------------------------


@dataclass
class AssembledWave:
    wave: SpinWave
    parts: list
    checks: dict


def assemble_spinwave(rho: ChargeDensity, beta: float, cfg: CoverConfig = PAPER, ensemble=(), cover=None) -> AssembledWave:
    """``a0`` plus one wave per separated square, with all structural checks."""
    dom = rho.domain
    a0 = build_a0(rho, beta)
    mc = cover if cover is not None else multiscale_cover(rho, cfg)
    nbrs = neighbour_set(rho, ensemble)
    geo = component_geometry(rho, nbrs, cfg, check=False) if nbrs else ComponentGeometry([])
    parts = [a0]
    for k in sorted(mc.separated):
        if k < 1:
            continue
        for s in mc.separated[k]:
            parts.append(build_as(s, rho, beta, geo))
    active = np.zeros(len(dom.edges), dtype=np.int64)
    for p in parts:
        active += (gradient(dom, p.a) != 0).astype(np.int64)
    if np.any(active > 1):
        raise GradientOverlap(f"{int((active > 1).sum())} edges carry gradient from two pieces")
    a = np.sum([p.a for p in parts], axis=0)
    sw = SpinWave(dom, a, rho, beta, {"parts": [p.meta.get("square", "a0") for p in parts]})
    E_tot = sw.energy
    E_sum = sum(p.energy for p in parts)
    n_sep = sum(len(v) for k, v in mc.separated.items() if k >= 1)
    bound = (rho.norm2sq / 16 + D3 * n_sep) / beta
    _, D, _ = center_and_D(rho)
    const = True
    for r in nbrs:
        _, _, Dp = center_and_D(r)
        v = a[list(Dp)]
        const &= bool(np.all(v == v[0]))
    checks = {
        "constant_on_neighbours": const,
        "support_in_D": sw.support() <= D,
        "laplacian_in_D": sw.laplacian_support() <= D,
        "edge_disjoint": True,
        "energy": E_tot,
        "additivity_residual": abs(E_tot - E_sum),
        "bound": bound,
        "bound_ok": E_tot >= bound - 1e-12,
        "n_separated": n_sep,
        "neutral_shift": abs(float(np.sum(beta * (dom.laplacian @ a)))),
    }
    return AssembledWave(sw, parts, checks)


def orthogonality(w1: SpinWave, w2: SpinWave) -> tuple:
    """``(<a1, rho2>, <a1, Lap a2>)``; both vanish for admissible distinct densities."""
    return float(w2.rho.pair(w1.a)), float(np.dot(w1.a, w1.domain.laplacian @ w2.a))
