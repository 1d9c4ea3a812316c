import json
import math

import numpy as np
import pytest

from bktlab.fields import GroundedGreen, ModelParams, batch_means, sample_gff
from bktlab.lattice import Kind, build_domain
from bktlab.verify import (
    COSINE_FACTOR_D4,
    FAIL,
    PASS,
    REPORT,
    check_bounds_suite,
    check_claims_3x,
    check_complex_translation,
    check_duality_structure,
    check_fejer_limit,
    check_laplace_functional,
    check_sine_gordon,
    check_surrogate_ratio,
    check_thm234_pipeline,
    check_trig_expansion,
    check_upper_bound,
    config_hash,
    contour_shift_1d,
    cosine_factor_constant,
    cosine_product_expectation,
    jsonable,
    run_suite,
    suite_checks,
    wrap,
)


def test_oracle_against_sampling():
    dom = build_domain(Kind.FREE, 3)
    rng = np.random.default_rng(11)
    terms = []
    for z, s in ((0.3, 0.2), (-0.5, 1.0), (0.8, 0.0)):
        u = np.zeros(dom.n)
        a, b = rng.choice(dom.n, 2, replace=False)
        u[a], u[b] = 1.0, -1.0
        terms.append((z, u, s))
    G = GroundedGreen(dom)
    exact = cosine_product_expectation(G, 1.0, terms)
    phi = sample_gff(dom, ModelParams(beta=1.0, seed=5), 200_000)
    prod = np.ones(len(phi))
    for z, u, s in terms:
        prod *= 1 + z * np.cos(phi @ u + s)
    est, se = batch_means(prod)
    assert abs(est - exact) <= 3 * se


def test_oracle_charged_character_vanishes():
    dom = build_domain(Kind.FREE, 2)
    u = np.zeros(dom.n)
    u[0] = 1.0
    # a single unit charge integrates to zero against the compact mode
    assert cosine_product_expectation(GroundedGreen(dom), 1.0, [(0.6, u, 0.3)], active=0) == pytest.approx(0.0, abs=1e-15)
    assert cosine_product_expectation(GroundedGreen(dom), 1.0, []) == 1.0


@pytest.mark.parametrize("xs", [np.linspace(-3, 3, 7), [-40.0, -38.5], [12.0]])
@pytest.mark.parametrize("q,a", [(1.0, 0.4), (-2.5, -1.0), (0.0, 2.0)])
def test_contour_shift_one_dimensional(xs, q, a):
    real, shifted, closed = contour_shift_1d(q, a, xs)
    assert abs(real - closed) <= 1e-10 and abs(shifted - closed) <= 1e-10


def test_complex_translation_passes():
    r = check_complex_translation(n_samples=20_000)
    assert r.status == PASS, r.details


def test_trig_expansion_small():
    r = check_trig_expansion(L=2, N=2, n_psi=10)
    assert r.status == PASS and r.details["relative_residual"] <= 1e-12


@pytest.mark.parametrize("sigma", [None, "random"])
def test_pipeline_small(sigma):
    r = check_thm234_pipeline(L=2, N=2, beta=1.0, sigma=sigma)
    assert r.status == PASS, r.details


def test_cosine_factor_examples():
    assert float(cosine_factor_constant(0.0, math.pi / 4, 0.1)) <= COSINE_FACTOR_D4
    assert cosine_factor_constant(0.3, 0.0, 0.1) == -np.inf
    assert COSINE_FACTOR_D4 == pytest.approx(60 / 49, rel=1e-15)
    r = check_claims_3x(n_grid=41)
    assert r.status == PASS and r.details["D4_empirical"] <= COSINE_FACTOR_D4


def test_wrap():
    a = np.array([-7.0, -math.pi, 0.0, math.pi, 9.5])
    w = wrap(a)
    assert np.all((w >= -math.pi) & (w < math.pi))
    assert np.allclose(np.cos(w), np.cos(a)) and np.allclose(np.sin(w), np.sin(a))


@pytest.mark.parametrize("check", [check_upper_bound, check_sine_gordon, check_fejer_limit, check_laplace_functional])
def test_bound_checks_pass(check):
    r = check()
    assert r.status == PASS, r.details


def test_report_only_never_fails():
    assert check_surrogate_ratio().status == REPORT


def test_duality_structure():
    assert check_duality_structure().status == PASS


def test_jsonable_and_hash():
    d = jsonable({"a": np.float64(float("nan")), "b": np.arange(3), "c": (1, np.bool_(True)), 4: math.inf, "z": 1j})
    assert d == {"a": "nan", "b": [0, 1, 2], "c": [1, True], "4": "inf", "z": {"re": 0.0, "im": 1.0}}
    json.dumps(d, allow_nan=False)
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_suites_are_partitioned():
    ident = suite_checks("identities")
    bounds = suite_checks("bounds")
    dual = suite_checks("duality")
    assert len(suite_checks("all")) == len(ident) + len(bounds) + len(dual)
    with pytest.raises(Exception):
        suite_checks("nope")


@pytest.mark.slow
def test_duality_suite_deterministic():
    a = [r.to_dict() for r in run_suite("duality", seed=3)]
    b = [r.to_dict() for r in run_suite("duality", seed=3, threads=2)]
    for r in a + b:
        r.pop("runtime")
    assert a == b and all(r["status"] != FAIL for r in a)


def test_unit_weights_pipeline_is_one():
    r = check_thm234_pipeline(L=2, N=1)
    assert r.status == PASS
    assert r.details["lhs"] == pytest.approx(1.0, abs=1e-12) and r.details["rhs"] == pytest.approx(1.0, abs=1e-12)


def test_upper_bound_path_examples():
    r = check_upper_bound(betas=(0.2, 1.0, 5.0))
    assert all(row["ratio"] <= 1 + 1e-12 for row in r.details["rows"] if row["graph"] == "path2")


@pytest.mark.slow
def test_bounds_suite_reports():
    reps = check_bounds_suite()
    assert [r.check_id for r in reps] == ["upper_bound", "surrogate_ratio", "sine_gordon_monotone", "fejer_limit",
                                          "villain_decay"]
    assert all(r.status != FAIL for r in reps)
    sur = reps[1].details
    assert sur["in_window"] and sur["trend_ok"]
    fej = reps[3].details["rows"]
    assert fej[-1]["error"] < fej[0]["error"]
