import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bktlab.duality import (
    check_isomorphism,
    chi,
    divergence,
    dual_gradient,
    dual_lattice,
    duality_check,
    flow_gradient_equivalence,
    fourier_edge_weight,
    integrate_flow,
    normalization_identity,
)
from bktlab.errors import ConfigInvalid
from bktlab.lattice import Kind, build_domain


@pytest.mark.parametrize("L", [2, 3, 4, 6])
def test_dual_is_free_lattice(L):
    dl = dual_lattice(L)
    iso = check_isomorphism(dl)
    assert iso["n_dual_vertices"] == (L + 1) ** 2
    assert iso["edges_match"] and iso["bijective"] and iso["primal_multiplicities_match"]
    assert dl.n_edges == len(build_domain(Kind.FREE, L + 1).edges)


def test_labeling_is_deterministic():
    a, b = dual_lattice(3), dual_lattice(3)
    for name in ("tail", "head", "right", "left"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_crossing_map_is_involution():
    dl = dual_lattice(3)
    # crossing the dual edge back lands on the same primal edge
    key = {(int(r), int(l)): e for e, (r, l) in enumerate(zip(dl.right, dl.left))}
    assert all(key[(int(r), int(l))] == e for e, (r, l) in enumerate(zip(dl.right, dl.left)))


@pytest.mark.parametrize("x", [(0, 0), (1, 1), (0, 1), (2, 0)])
def test_path_indicator(x):
    dl = dual_lattice(3)
    c = chi(dl, x)
    assert set(np.unique(c)) <= {0, 1}
    assert c.sum() == 3 - x[0]


def test_fourier_identity_examples():
    lhs, rhs, tail = fourier_edge_weight(0.0, 1.0, 0.0, 20)
    assert abs(lhs - rhs) <= 1e-10 and abs(lhs - rhs) <= tail + 1e-14
    with pytest.raises(ConfigInvalid):
        fourier_edge_weight(0.0, 1.0, 0.0, 0)


@given(st.floats(-math.pi, math.pi), st.floats(0.2, 5.0), st.integers(-3, 3))
def test_fourier_identity_integer_shift(theta, beta, c):
    lhs, rhs, tail = fourier_edge_weight(theta, beta, float(c), 20)
    assert abs(lhs - rhs) <= tail + 1e-12


@given(st.floats(0, math.pi), st.floats(0.2, 5.0))
def test_unshifted_weight_real_and_even(theta, beta):
    a, _, _ = fourier_edge_weight(theta, beta, 0.0, 20)
    b, _, _ = fourier_edge_weight(-theta, beta, 0.0, 20)
    assert a.imag == 0.0 and a.real == pytest.approx(b.real, rel=1e-14)


@pytest.mark.parametrize("c", [-2.0, 0.0, 3.0])
def test_dual_weight_concentrates(c):
    # the n-sum has width sqrt(beta), so it concentrates as beta -> 0
    beta = 0.05
    _, rhs, _ = fourier_edge_weight(0.7, beta, c, 20)
    dominant = np.exp(-1j * c * 0.7) / math.sqrt(2 * math.pi * beta)
    assert abs(rhs - dominant) <= 2.01 * math.exp(-1 / (2 * beta)) * abs(dominant)


def test_flow_gradient_equivalence_exhaustive():
    r = flow_gradient_equivalence(2)
    assert r["configurations"] == 3 ** dual_lattice(2).n_edges and r["ok"]
    assert r["divergence_free"] > 1


def test_gradient_flows_are_divergence_free():
    dl = dual_lattice(3)
    m = np.random.default_rng(0).integers(-3, 4, size=dl.dual.n)
    m[0] = 0
    n = dual_gradient(dl, m)
    assert np.all(divergence(dl, n) == 0)
    rec, ok = integrate_flow(dl, n)
    assert bool(np.all(ok)) and np.array_equal(np.asarray(rec).ravel(), m)


@pytest.mark.parametrize("beta", [0.3, 1.0, 3.0])
@pytest.mark.parametrize("x", [(0, 0), (1, 1), (0, 1)])
def test_villain_equals_dual_height(beta, x):
    r = duality_check(2, beta, x, K=8, m_cut=8)
    assert abs(r["diff"]) <= 1e-6, r


def test_adjacent_site_large_beta():
    r = duality_check(2, 10.0, (1, 1))
    assert r["villain"] > 0.9 and r["iv"] > 0.9 and r["ok"]


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
def test_normalization_identity(beta):
    assert abs(normalization_identity(2, beta)["rel_diff"]) <= 1e-6
