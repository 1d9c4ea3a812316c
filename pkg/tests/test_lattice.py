import numpy as np
import pytest
from hypothesis import given, strategies as st

from bktlab.errors import OddPeriodicSide, SideTooSmall
from bktlab.lattice import (
    Kind,
    bipartition,
    build_domain,
    dirichlet_energy,
    enumerate_squares,
    graph_distance,
    laplacian_apply,
    make_square,
)

kinds = st.sampled_from([Kind.FREE, Kind.ZERO, Kind.PERIODIC])


def test_free2_is_four_cycle():
    d = build_domain(Kind.FREE, 2)
    assert d.n == 4
    assert len(d.edges) == 4


def test_periodic4_counts():
    d = build_domain(Kind.PERIODIC, 4)
    assert d.n == 16
    assert int(d.mult.sum()) == 32


def test_zero2_corner_has_double_edge():
    d = build_domain(Kind.ZERO, 2)
    assert d.n == 5
    j, z = d.idx((0, 0)), d.z_index
    mult = {tuple(e): m for e, m in zip(d.edges.tolist(), d.mult.tolist())}
    assert mult[(min(j, z), max(j, z))] == 2


def test_bad_sides():
    with pytest.raises(OddPeriodicSide):
        build_domain(Kind.PERIODIC, 3)
    with pytest.raises(SideTooSmall):
        build_domain(Kind.FREE, 1)


@given(kinds, st.integers(2, 7))
def test_every_non_wired_vertex_has_degree_four(kind, L):
    if kind is Kind.PERIODIC and L % 2:
        L += 1
    d = build_domain(kind, L)
    deg = d.degree
    if kind is Kind.FREE:
        assert deg.max() <= 4
    else:
        assert np.all(deg[: d.n_sites] == 4)


@given(kinds, st.integers(2, 6), st.floats(-3, 3))
def test_laplacian_kills_constants(kind, L, c):
    if kind is Kind.PERIODIC and L % 2:
        L += 1
    d = build_domain(kind, L)
    assert np.allclose(laplacian_apply(d, np.full(d.n, c)), 0.0, atol=1e-12)


def test_center_indicator_free3():
    d = build_domain(Kind.FREE, 3)
    out = laplacian_apply(d, {(1, 1): 1.0})
    expect = np.zeros(9)
    expect[d.idx((1, 1))] = -4
    for v in [(0, 1), (2, 1), (1, 0), (1, 2)]:
        expect[d.idx(v)] = 1
    assert np.array_equal(out, expect)


def test_wired_vertex_indicator_zero2():
    d = build_domain(Kind.ZERO, 2)
    out = laplacian_apply(d, {"z": 1.0})
    assert out[d.z_index] == -8
    assert np.all(out[: d.n_sites] == 2)


@given(st.integers(2, 6), st.data())
def test_dirichlet_energy_is_minus_pairing(L, data):
    d = build_domain(Kind.FREE, L)
    f = np.array(data.draw(st.lists(st.floats(-5, 5), min_size=d.n, max_size=d.n)))
    assert dirichlet_energy(d, f) == pytest.approx(-f @ laplacian_apply(d, f), rel=1e-10, abs=1e-9)


def test_distances():
    assert graph_distance(build_domain(Kind.FREE, 5), (0, 0), (0, 0)) == 0
    assert graph_distance(build_domain(Kind.PERIODIC, 4), (0, 0), (3, 0)) == 1
    assert graph_distance(build_domain(Kind.ZERO, 4), (0, 0), "z") == 1


def test_bipartition():
    even, odd = bipartition(build_domain(Kind.FREE, 2))
    assert even == {(0, 0), (1, 1)} and odd == {(0, 1), (1, 0)}
    even, odd = bipartition(build_domain(Kind.PERIODIC, 4))
    assert len(even) == len(odd) == 8


def test_squares():
    assert len(enumerate_squares(build_domain(Kind.FREE, 2), 0)) == 4
    sq = enumerate_squares(build_domain(Kind.PERIODIC, 4), 1)
    assert len(sq) == 16 and all(len(s) == 4 for s in sq)
    d = build_domain(Kind.FREE, 4)
    sq = enumerate_squares(d, 3)
    assert len(sq) == 1 and sq[0].members == frozenset(range(16))
    assert make_square(d, 3, (2, 2)).members == frozenset(range(16))
