import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bktlab.density import PAPER, prop21_constants
from bktlab.ensemble import derived_D2
from bktlab.errors import ConfigInvalid
from bktlab.spinwave import D3
from bktlab.weights import (
    SubGaussianParams,
    TrigWeight,
    ZCoefficient,
    derive_c1,
    evaluate,
    fejer,
    is_sub_gaussian,
    unit_weight,
    z_bound_check,
)

P0 = SubGaussianParams(gamma=1.0, eta=0.0, theta=0.0, beta=1.0)


def test_evaluate_examples():
    assert np.all(evaluate(unit_weight(), np.linspace(-3, 3, 7)) == 1.0)
    assert evaluate(fejer(3), 0.0) == pytest.approx(3.0, abs=1e-15)
    assert np.all(evaluate(fejer(1), np.linspace(-3, 3, 7)) == 1.0)


@given(st.integers(1, 12), st.floats(-10, 10))
def test_even(N, x):
    assert evaluate(fejer(N), x) == evaluate(fejer(N), -x)


@pytest.mark.parametrize("N", [1, 2, 3, 8, 32])
def test_fejer_nonnegative_and_sub_gaussian(N):
    grid = np.linspace(-np.pi, np.pi, 10_000)
    assert evaluate(fejer(N), grid).min() >= -1e-12
    assert is_sub_gaussian(fejer(N), P0) == (True, None)


def test_sub_gaussian_witness():
    assert is_sub_gaussian(unit_weight(), SubGaussianParams(0.5, 0.0, 0.0, 1.0))[0]
    assert is_sub_gaussian(TrigWeight((0.0, 10.0)), P0) == (False, 2)
    with pytest.raises(ConfigInvalid):
        SubGaussianParams(1.0, 0.0, 1 / 16, 1.0)


def _dipole_check(beta, K=1.0):
    E = 1 / (8 * beta)
    return z_bound_check(ZCoefficient(K, E), 2, 1, 0, 18, beta, SubGaussianParams(1.0, 0.0, 0.0, beta),
                         prop21_constants(PAPER).D1, derived_D2(), D3)


def test_zero_coefficient():
    r = z_bound_check(ZCoefficient(0.0, 1.0), 2, 1, 0, 18, 1.0, P0, 170.0, derived_D2(), D3)
    assert r["local_ok"] and r["decay_ok"]


def test_dipole_coefficient():
    zc = ZCoefficient(2.5, 1 / 8)
    assert zc.z == pytest.approx(2.5 * math.exp(-1 / 8), rel=1e-15)
    assert _dipole_check(1.0)["local_ok"]


def test_decay_holds_below_derived_beta():
    c1, beta0, _ = derive_c1(P0, prop21_constants(PAPER).D1, derived_D2(), D3)
    assert c1 > 0 and beta0 > 0
    for beta in (beta0, beta0 / 2, beta0 / 10):
        assert _dipole_check(beta)["decay_ok"]
