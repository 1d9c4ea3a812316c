import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bktlab.density import PAPER, ChargeDensity, scaled_profile
from bktlab.ensemble import (
    Item,
    evaluate_ensemble_product,
    evaluate_site_product,
    expand_to_k_ensemble,
    merge_coefficient_check,
    property_a,
    property_b,
    property_c,
    run_renormalization,
    trig_merge,
    weights_to_density_mixture,
)
from bktlab.errors import OverlappingSupports
from bktlab.lattice import Kind, build_domain
from bktlab.weights import TrigWeight, fejer, unit_weight


def _mix_eval(mix, psi):
    return sum(c * evaluate_ensemble_product(ens, psi) for ens, c in mix.items())


def test_merge_at_zero_angle():
    dom = build_domain(Kind.FREE, 3)
    r1, r2 = ChargeDensity(dom, [(0, 1)]), ChargeDensity(dom, [(4, 1)])
    terms = trig_merge(1.0, r1, 1.0, r2)
    weights = [Fraction(w).limit_denominator(100) for w, _, _ in terms]
    assert weights == [Fraction(1, 3), Fraction(1, 3), Fraction(1, 6), Fraction(1, 6)]
    assert sum(weights) == 1
    psi = np.zeros(dom.n)
    assert sum(w * (1 + K * math.cos(r.pair(psi))) for w, K, r in terms) == pytest.approx(4.0, abs=1e-15)
    with pytest.raises(OverlappingSupports):
        trig_merge(1.0, r1, 1.0, ChargeDensity(dom, [(0, 1), (1, -1)]))


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2 ** 32 - 1))
def test_merge_identity(K1, K2, seed):
    dom = build_domain(Kind.FREE, 4)
    r1 = ChargeDensity(dom, [(0, 1), (5, -1)])
    r2 = ChargeDensity(dom, [(10, 2), (15, 1)])
    psi = np.random.default_rng(seed).uniform(-np.pi, np.pi, dom.n)
    lhs = (1 + K1 * math.cos(r1.pair(psi))) * (1 + K2 * math.cos(r2.pair(psi)))
    rhs = sum(w * (1 + K * math.cos(r.pair(psi))) for w, K, r in trig_merge(K1, r1, K2, r2))
    assert abs(lhs - rhs) <= 1e-12 * max(1, abs(lhs))


def test_expand_trivial_and_dipoles():
    dom = build_domain(Kind.FREE, 4)
    far = [Item(ChargeDensity(dom, [(0, 1), (1, -1)]), 0.5), Item(ChargeDensity(dom, [(14, 1), (15, -1)]), 0.7)]
    mix = expand_to_k_ensemble(far, 1)
    assert len(mix) == 1 and list(mix.terms.values()) == [1.0]
    near = [Item(ChargeDensity(dom, [(0, 1), (1, -1)]), 0.5), Item(ChargeDensity(dom, [(2, 1), (3, -1)]), 0.7)]
    mix = expand_to_k_ensemble(near, 1)
    assert len(mix) == 4
    psi = np.random.default_rng(0).uniform(-np.pi, np.pi, (25, dom.n))
    assert np.max(np.abs(_mix_eval(mix, psi) - evaluate_ensemble_product(near, psi))) <= 1e-10
    worst_log, _, _ = merge_coefficient_check(near, mix, 1)
    assert worst_log <= 1e-12


def test_site_mixture_degenerate_and_normalized():
    dom = build_domain(Kind.FREE, 2)
    assert list(weights_to_density_mixture(dom, unit_weight())) == [(1.0, ())]
    xs = [xi for xi, _ in weights_to_density_mixture(dom, fejer(2), drop_zero=False)]
    assert math.fsum(xs) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("w", [fejer(2), TrigWeight((0.3, -0.2))])
def test_site_mixture_identity(w):
    dom = build_domain(Kind.FREE, 2)
    psi = np.random.default_rng(1).uniform(-np.pi, np.pi, (25, dom.n))
    acc = sum(xi * evaluate_ensemble_product(items, psi) for xi, items in weights_to_density_mixture(dom, w))
    assert np.max(np.abs(acc - evaluate_site_product(dom, w, psi))) <= 1e-10


def test_ensemble_product_examples():
    dom = build_domain(Kind.FREE, 2)
    assert evaluate_ensemble_product((), np.zeros(4)) == 1.0
    assert evaluate_ensemble_product([Item(ChargeDensity(dom, [(0, 1), (1, -1)]), 1.0)], np.zeros(4)) == 2.0


def test_single_site_renormalization():
    dom = build_domain(Kind.FREE, 2)
    res = run_renormalization([Item(ChargeDensity(dom, [(0, 1)]), 0.4)], PAPER)
    ens = list(res.ensembles())
    assert len(ens) == 1 and len(ens[0][1]) == 1 and not ens[0][1][0].rho.neutral


@pytest.mark.parametrize("cfg", [PAPER, scaled_profile(2)])
def test_unit_charges_free2(cfg):
    dom = build_domain(Kind.FREE, 2)
    items = [Item(ChargeDensity(dom, [(j, 1)]), 0.3 + 0.1 * j) for j in range(4)]
    res = run_renormalization(items, cfg)
    assert res.scale_claim_ok
    psi = np.random.default_rng(2).uniform(-np.pi, np.pi, (25, dom.n))
    acc = sum(c * evaluate_ensemble_product(e, psi) for c, e in res.ensembles())
    target = evaluate_ensemble_product(items, psi)
    assert np.linalg.norm(acc - target) / np.linalg.norm(target) <= 1e-9
    assert math.fsum(c for c, _ in res.ensembles()) == pytest.approx(1.0, abs=1e-12)


def test_full_mixture_free2():
    dom = build_domain(Kind.FREE, 2)
    psi = np.random.default_rng(3).uniform(-np.pi, np.pi, (25, dom.n))
    acc = np.zeros(25)
    for xi, items in weights_to_density_mixture(dom, fejer(2)):
        for c, ens in run_renormalization(items, PAPER).ensembles():
            assert property_a(ens) and property_b(ens, PAPER) and property_c(ens, PAPER)
            acc += xi * c * evaluate_ensemble_product(ens, psi)
    target = evaluate_site_product(dom, fejer(2), psi)
    assert np.max(np.abs(acc - target)) <= 1e-9 * np.max(np.abs(target))


@pytest.mark.slow
def test_property_c_free3():
    dom = build_domain(Kind.FREE, 3)
    seen = set()
    for _, items in weights_to_density_mixture(dom, fejer(2)):
        for _, ens in run_renormalization(items, PAPER).ensembles():
            if ens not in seen:
                seen.add(ens)
                assert property_c(ens, PAPER)
