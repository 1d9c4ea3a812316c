import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bktlab.density import (
    PAPER,
    A_functional,
    ChargeDensity,
    brute_force_cover_size,
    center_and_D,
    decomposition_pair,
    minimal_cover,
    multiscale_cover,
    neutral_edge_decomposition,
    prop21_constants,
    scaled_profile,
    separated_subset,
)
from bktlab.errors import NotNeutral
from bktlab.lattice import Kind, build_domain

# frozen derived constants of the cover bound
D1_PAPER = 172.993515207345
D1_SCALED2 = 196 / 3


@st.composite
def densities(draw, L=8, neutral=False, max_points=5):
    dom = build_domain(Kind.FREE, L)
    pts = draw(st.lists(st.tuples(st.integers(0, L - 1), st.integers(0, L - 1)), min_size=2, max_size=max_points,
                        unique=True))
    q = draw(st.lists(st.sampled_from([-2, -1, 1, 2]), min_size=len(pts), max_size=len(pts)))
    if neutral:
        q[-1] = -sum(q[:-1])
        if q[-1] == 0:
            q[-1], q[0] = q[0], q[0]
            q[-1] = -sum(q[:-1])
        if all(v == 0 for v in q[:-1]) or q[-1] == 0:
            q = [1, -1] + [0] * (len(pts) - 2)
    items = [(p, c) for p, c in zip(pts, q) if c != 0]
    return ChargeDensity(dom, items)


def test_zero_density_rejected():
    with pytest.raises(ValueError):
        ChargeDensity(build_domain(Kind.FREE, 3), [((0, 0), 1), ((0, 0), -1)])


def test_single_site_neighbourhood():
    dom = build_domain(Kind.FREE, 5)
    j, D, _ = center_and_D(ChargeDensity(dom, [((2, 2), 3)]))
    assert D == {j} == {dom.idx((2, 2))}


def test_adjacent_pair_neighbourhood():
    dom = build_domain(Kind.FREE, 5)
    j, D, _ = center_and_D(ChargeDensity(dom, [((2, 2), 1), ((2, 3), -1)]))
    assert j == dom.idx((2, 2))
    expect = {dom.idx(v) for v in [(2, 2), (1, 2), (3, 2), (2, 1), (2, 3)]}
    assert D == expect


@given(densities(neutral=True))
def test_support_inside_neighbourhood(rho):
    if rho.diameter >= 1:
        assert rho.support_set <= center_and_D(rho)[1]


def test_cover_examples():
    dom = build_domain(Kind.FREE, 8)
    dip = ChargeDensity(dom, [((3, 3), 1), ((3, 4), -1)])
    assert len(minimal_cover(dip, 0).squares) == 2
    assert len(minimal_cover(dip, 1).squares) in (1, 2)  # depends on dyadic alignment
    corners = ChargeDensity(dom, [((0, 0), 1), ((0, 7), -1), ((7, 0), 1), ((7, 7), -1)])
    assert len(minimal_cover(corners, 2).squares) == 4


@given(densities(L=6, max_points=4), st.integers(0, 3))
def test_cover_is_minimal(rho, k):
    res = minimal_cover(rho, k)
    covered = frozenset().union(*(s.members for s in res.squares))
    assert rho.support_set <= covered
    assert len(res.squares) == brute_force_cover_size(rho, k)


@given(densities())
def test_single_square_at_large_scale(rho):
    k = math.ceil(math.log2(rho.diameter + 1))
    for kk in range(k, k + 3):
        assert len(minimal_cover(rho, kk).squares) == 1


def test_separation_needs_far_squares():
    dom = build_domain(Kind.FREE, 64)
    cfg = scaled_profile(2)
    far = ChargeDensity(dom, [((2, 2), 1), ((60, 60), -1)])
    cover = minimal_cover(far, 1).squares
    assert len(separated_subset(far, 1, cover, cfg)) == 2
    near = ChargeDensity(dom, [((2, 2), 1), ((2, 3), -1)])
    for k in range(1, 4):
        cover = minimal_cover(near, k).squares
        assert separated_subset(near, k, cover, cfg) == []
    one = minimal_cover(far, 7).squares
    assert len(one) == 1 and separated_subset(far, 7, one, cfg) == []


def test_A_examples():
    dom = build_domain(Kind.FREE, 8)
    assert A_functional(ChargeDensity(dom, [((1, 1), 2)]))["A"] == 0
    r = A_functional(ChargeDensity(dom, [((3, 3), 1), ((3, 4), -1)]))
    assert r["n"] == 16 and r["A"] == 18 and r["A"] >= r["lower"]


@given(densities(L=16))
def test_A_lower_bound(rho):
    r = A_functional(rho, PAPER)
    assert math.log2(rho.diameter + 1) <= r["A"]


def test_cover_constants():
    c = prop21_constants(scaled_profile(2), sum_kmax=10 ** 5)
    assert c.sep_factor == pytest.approx(D1_SCALED2, rel=1e-15)
    cfg = PAPER
    k = np.arange(len(c.gamma))
    gp = prop21_constants(cfg, sum_kmax=10 ** 5)
    assert np.all(gp.gamma <= (k - cfg.b) / cfg.alpha)
    assert np.all((k - cfg.b) / cfg.alpha < gp.gamma + 1)
    # the iteration count vanishes exactly below b; beyond k0 it is at least floor(log_alpha(k/k0))
    assert np.all(gp.ell[k < cfg.b] == 0)
    assert np.all(gp.ell[k >= cfg.b] >= 1)
    big = k[k >= cfg.k0]
    assert np.all(gp.ell[big] >= np.floor(np.log(big / cfg.k0) / np.log(cfg.alpha) + 1e-12))
    assert gp.sandwich_ok and gp.nmj_ok


def test_paper_D1_frozen():
    assert prop21_constants(PAPER).D1 == pytest.approx(D1_PAPER, rel=1e-9)


def test_edge_decomposition_examples():
    dom = build_domain(Kind.FREE, 6)
    a, b = dom.idx((2, 2)), dom.idx((2, 3))
    c = neutral_edge_decomposition(ChargeDensity(dom, [(a, 1), (b, -1)]))
    assert list(c.values()) in ([1], [-1]) and len(c) == 1
    path = ChargeDensity(dom, [((0, 0), 1), ((0, 1), -1), ((0, 2), -1), ((0, 3), 1)])
    c = neutral_edge_decomposition(path)
    assert max(abs(v) for v in c.values()) <= 0.5 * path.norm1
    with pytest.raises(NotNeutral):
        neutral_edge_decomposition(ChargeDensity(dom, [((0, 0), 1)]))


@given(densities(neutral=True), st.integers(0, 2 ** 32 - 1))
def test_edge_decomposition_reconstructs(rho, seed):
    c = neutral_edge_decomposition(rho)
    _, D, _ = center_and_D(rho)
    assert all(a in D and b in D for a, b in c)
    assert max(abs(v) for v in c.values()) <= 0.5 * rho.norm1
    for sigma in np.random.default_rng(seed).standard_normal((20, rho.domain.n)):
        assert abs(rho.pair(sigma) - decomposition_pair(c, sigma)) <= 1e-12


def test_multiscale_cover_doubling():
    dom = build_domain(Kind.FREE, 64)
    rho = ChargeDensity(dom, [((5, 5), 1), ((58, 8), -1), ((30, 60), 1), ((62, 61), -1)])
    mc = multiscale_cover(rho, scaled_profile(2))
    assert mc.sep_total >= 1
    assert all(mc.size(k) >= 1 for k in range(mc.n + 1))
