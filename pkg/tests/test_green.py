import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bktlab.errors import BadRow
from bktlab.green import (
    claim_green_lower,
    claim_green_sweep,
    d1,
    difference_ops,
    green_log_constant,
    intertwining_residual,
    per_id1_residual,
    per_id2_residual,
    periodic_green,
    periodic_green_table,
    pseudoinverse,
    quadratic_form,
    reflect_T_fp,
    shift_field,
)
from bktlab.lattice import Kind, build_domain, laplacian_apply

# frozen from the dense pseudoinverse and the log-constant sweep
D6 = 0.5241587891552423


def test_opposite_corner_resistance():
    d = build_domain(Kind.FREE, 2)
    f = np.zeros(4)
    f[d.idx((0, 0))], f[d.idx((1, 1))] = 1, -1
    G = pseudoinverse(d)
    assert quadratic_form(G, f) == pytest.approx(1.0, abs=1e-14)
    assert quadratic_form(G, 2 * f) == pytest.approx(4.0, abs=1e-13)
    assert quadratic_form(G, 0 * f) == 0.0


@given(st.sampled_from([Kind.FREE, Kind.ZERO, Kind.PERIODIC]), st.integers(2, 6), st.integers(0, 2 ** 32 - 1))
def test_pseudoinverse_inverts_on_mean_zero(kind, L, seed):
    if kind is Kind.PERIODIC and L % 2:
        L += 1
    d = build_domain(kind, L)
    G = pseudoinverse(d)
    f = np.random.default_rng(seed).standard_normal(d.n)
    assert np.allclose(G.apply(np.ones(d.n)), 0, atol=1e-12)
    f -= f.mean()
    assert np.allclose(-laplacian_apply(d, G.apply(f)), f, atol=1e-10)


def test_energy_identity_of_shift_field():
    d = build_domain(Kind.FREE, 5)
    rng = np.random.default_rng(3)
    f = rng.standard_normal(d.n)
    f -= f.mean()
    beta = 0.7
    s = shift_field(pseudoinverse(d), f, beta)
    grad = s[d.edges[:, 0]] - s[d.edges[:, 1]]
    assert beta ** 2 * np.sum(d.mult * grad ** 2) == pytest.approx(quadratic_form(pseudoinverse(d), f), rel=1e-10)


def test_torus_green_against_dense():
    G = pseudoinverse(build_domain(Kind.PERIODIC, 4))
    dense = G.g[0, 0] - G.g[0, 2 * 4]
    assert periodic_green(4, 0, 0) - periodic_green(4, 2, 0) == pytest.approx(dense, abs=1e-13)


@given(st.integers(0, 7), st.integers(0, 7), st.integers(0, 7), st.integers(0, 7))
def test_torus_green_symmetries(t, s, a, b):
    G = periodic_green_table(8)
    assert G[t, s] == pytest.approx(G[s, t], abs=1e-14)
    assert G[t, s] == pytest.approx(G[-t % 8, s], abs=1e-14)
    # translation invariance of the full kernel
    full = pseudoinverse(build_domain(Kind.PERIODIC, 8)).g
    assert full[0, t * 8 + s] == pytest.approx(full[a * 8 + b, ((a + t) % 8) * 8 + (b + s) % 8], abs=1e-12)


def test_log_bound_constant():
    assert green_log_constant() == pytest.approx(D6, rel=1e-12)
    for L2 in (8, 16, 32):
        G = periodic_green_table(L2)
        for a in range(1, L2 // 2 + 1):
            assert G[0, 0] - G[2 * a % L2, 0] <= D6 * math.log(a + 1) + 1e-12


def test_reflection():
    f = np.zeros((2, 2))
    f[0, 0] = 1
    T = reflect_T_fp(f)
    assert {tuple(p) for p in np.argwhere(T == 1)} == {(0, 0), (3, 0), (0, 3), (3, 3)}
    assert np.all(reflect_T_fp(np.full((3, 3), 2.5)) == 2.5)


@given(st.integers(2, 8), st.integers(0, 2 ** 32 - 1))
def test_intertwining(L, seed):
    f = np.random.default_rng(seed).standard_normal((L, L))
    assert intertwining_residual(f) <= 1e-12


@given(st.sampled_from([4, 8, 16, 32]), st.integers(0, 2 ** 32 - 1))
def test_periodic_identities(L2, seed):
    f = np.random.default_rng(seed).standard_normal((L2, L2))
    assert per_id1_residual(L2, f) <= 1e-10
    assert per_id2_residual(L2, f) <= 1e-10


def test_difference_operators():
    D1, D2 = difference_ops(6)
    lap = (D1 @ D1.T + D2 @ D2.T).toarray()
    assert np.allclose(lap, -build_domain(Kind.PERIODIC, 6).laplacian.toarray())
    assert np.array_equal(d1(np.ones((4, 4))), np.zeros((4, 4)))


def test_row_lower_bound_examples():
    r = claim_green_lower(4, (0, 0))
    assert r["lhs"] >= r["bound"]
    assert r["eqGreenId2"] <= r["eqGreenId2_bound"] + 1e-12
    r = claim_green_lower(4, (3, 1))
    assert math.isfinite(r["lhs"]) and r["lhs"] >= r["bound"]
    with pytest.raises(BadRow):
        claim_green_lower(4, (0, 3))


@pytest.mark.parametrize("L", [4, 8, 16])
def test_sweep_matches_pointwise_and_holds(L):
    sw = claim_green_sweep(L)
    assert sw["margin"] >= 0
    for y in [(0, 0), (L - 1, L - 2), (L // 2, 1)]:
        assert sw["lhs"][y] == pytest.approx(claim_green_lower(L, y)["lhs"], rel=1e-12)
