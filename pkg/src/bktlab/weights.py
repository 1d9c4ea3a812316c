"""Even trigonometric single-site weights and the sub-Gaussian coefficient test."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigInvalid, NotNormalized


@dataclass(frozen=True)
class TrigWeight:
    """``w(phi) = 1 + 2 sum_{q=1}^N c_q cos(q phi)`` with ``coeffs = (c_1, ..., c_N)``."""

    coeffs: tuple = ()

    @property
    def N(self) -> int:
        return len(self.coeffs)

    def hat(self, q: int) -> float:
        q = abs(int(q))
        if q == 0:
            return 1.0
        return float(self.coeffs[q - 1]) if q <= self.N else 0.0

    def __call__(self, phi):
        phi = np.asarray(phi, dtype=float)
        out = np.ones_like(phi)
        for q, c in enumerate(self.coeffs, start=1):
            out = out + 2.0 * c * np.cos(q * phi)
        return out

    @property
    def support(self) -> list:
        """Frequencies ``q >= 1`` with nonzero coefficient."""
        return [q for q, c in enumerate(self.coeffs, start=1) if c != 0.0]

    @classmethod
    def from_config(cls, cfg: dict) -> "TrigWeight":
        kind = cfg.get("type")
        if kind == "fejer":
            return fejer(int(cfg["N"]))
        if kind == "coeffs":
            return cls(tuple(float(x) for x in cfg["values"]))
        raise ConfigInvalid(f"unknown weight type {kind!r}")


def evaluate(w: TrigWeight, phi):
    return w(phi)


def fejer(N: int) -> TrigWeight:
    """Fejer kernel of order ``N``: coefficients ``1 - q/N``."""
    if N < 1:
        raise ValueError("Fejer order must be >= 1")
    return TrigWeight(tuple(1.0 - q / N for q in range(1, N + 1)))


def unit_weight() -> TrigWeight:
    return TrigWeight(())


@dataclass(frozen=True)
class SubGaussianParams:
    gamma: float
    eta: float
    theta: float
    beta: float

    def __post_init__(self):
        if not (0.0 <= self.theta < 1.0 / 16):
            raise ConfigInvalid("theta must lie in [0, 1/16)")
        if self.gamma <= 0 or self.beta <= 0:
            raise ConfigInvalid("gamma and beta must be positive")


def is_sub_gaussian(w: TrigWeight, p: SubGaussianParams):
    """Return ``(ok, witness)``; ``witness`` is the first violating frequency or None."""
    rate = p.eta + p.theta / p.beta
    for q in range(1, w.N + 1):
        if abs(w.hat(q)) > p.gamma * math.exp(rate * q * q):
            return False, q
    return True, None


# single-site expansion coefficients ----------------------------------


def site_normalizer(N: int) -> float:
    """``C(N) = sum_{q=1}^N exp(-q^2)``."""
    return float(sum(math.exp(-q * q) for q in range(1, N + 1)))


def site_activity(w: TrigWeight, q: int) -> float:
    """Per-site coefficient ``2 C(N) exp(q^2) hat(q)`` for a charge ``q >= 1``."""
    return 2.0 * site_normalizer(w.N) * math.exp(q * q) * w.hat(q)


def site_probabilities(w: TrigWeight) -> np.ndarray:
    """Mixture weights over ``q = 1..N``; they sum to one."""
    if w.N == 0:
        return np.zeros(0)
    C = site_normalizer(w.N)
    return np.array([math.exp(-q * q) / C for q in range(1, w.N + 1)])


def check_normalized(w: TrigWeight):
    if not isinstance(w, TrigWeight):
        raise NotNormalized("weights must be TrigWeight instances with unit zero coefficient")


@dataclass
class ZCoefficient:
    K: float
    energy: float
    meta: dict = field(default_factory=dict)

    @property
    def z(self) -> float:
        return self.K * math.exp(-self.energy)

    @property
    def log_abs_z(self) -> float:
        # stays finite when z itself underflows
        return math.log(abs(self.K)) - self.energy if self.K != 0 else -math.inf


# coefficient bounds ---------------------------------------------------


def choose_gamma(theta: float, D3: float) -> float:
    """A ``gamma > 1`` with ``1/16 - D3/gamma - theta > 0``; half of the slack goes to ``D3/gamma``."""
    return max(2.0, 2.0 * D3 / (1.0 / 16 - theta))


def derive_c1(p: SubGaussianParams, D1: float, D2: float, D3: float, gamma: float | None = None):
    """Return ``(c1, beta0, gamma)`` from the derived constants.

    The exponent bound is
    ``(D2 - D3/(gamma D1 beta)) A + (ln max(Gamma, 1) + 1 + eta - slack/beta) |rho|^2``
    with ``slack = 1/16 - theta - D3/gamma``; ``beta0`` is half the largest
    beta keeping both brackets negative and ``c1`` is their value there.
    """
    gamma = choose_gamma(p.theta, D3) if gamma is None else gamma
    slack = 1.0 / 16 - p.theta - D3 / gamma
    if gamma <= 1 or slack <= 0:
        raise ConfigInvalid("gamma must exceed 1 and leave positive slack")
    growth = max(math.log(max(p.gamma, 1.0)) + 1.0 + p.eta, 0.0)
    cap_norm = slack / growth if growth > 0 else math.inf
    cap_log = D3 / (gamma * D1 * D2) if D2 > 0 else math.inf
    beta0 = 0.5 * min(cap_norm, cap_log)
    c1 = min(slack - beta0 * growth, D3 / (gamma * D1) - beta0 * D2)
    return c1, beta0, gamma


def z_bound_check(zc: ZCoefficient, norm2sq: float, diameter: int, n_separated: int, A: int, beta: float,
                  p: SubGaussianParams, D1: float, D2: float, D3: float, gamma: float | None = None) -> dict:
    """Both coefficient bounds for one density, as log-space margins (nonnegative means the bound holds)."""
    c1, beta0, gamma = derive_c1(p, D1, D2, D3, gamma)
    log_z = zc.log_abs_z
    log_K = math.log(abs(zc.K)) if zc.K != 0 else -math.inf
    local = -(norm2sq / 16 + D3 * n_separated) / beta
    decay = -(c1 / beta) * (norm2sq + math.log2(diameter + 1))
    local_margin = math.inf if zc.K == 0 else (log_K + local) - log_z
    decay_margin = math.inf if zc.K == 0 else decay - log_z
    return {
        "log_z": log_z,
        "local_bound": log_K + local if zc.K != 0 else -math.inf,
        "local_margin": local_margin,
        "local_ok": local_margin >= -1e-12,
        "decay_bound": decay,
        "decay_margin": decay_margin,
        "decay_ok": decay_margin >= 0,
        "c1": c1,
        "beta0": beta0,
        "gamma": gamma,
        "slack": 1.0 / 16 - p.theta - D3 / gamma,
        "beta_below_beta0": beta < beta0,
        "A": A,
    }
