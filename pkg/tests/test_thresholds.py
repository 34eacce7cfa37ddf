import math

import numpy as np
import pytest

from fracnehari.domain import build_grid
from fracnehari.errors import InfeasibleError, RegimeMismatchError, WrongRegimeError
from fracnehari.fiber import L_of_lambda
from fracnehari.functional import Regime
from fracnehari.thresholds import (
    A_hat,
    b_upper_bound,
    compute_thresholds,
    critical_constant,
    critical_level,
    critical_threshold,
    lambda1,
    lambda2,
    lambda_sup0,
    lambda_sup1,
    truncation_constants,
)

from conftest import canonical_params

# shared constants: (a, b, p, q, r, S_r, f_norm, g_sup)
CONSTANTS = [
    (1.0, 1.0, 2.0, 1.5, 5.0, 3.08, 1.62, 1.0),
    (0.7, 0.2, 3.0, 2.2, 6.5, 1.9, 0.4, 2.5),
    (2.5, 3.0, 2.0, 1.1, 4.5, 0.8, 3.3, 0.6),
]


def close(x, y):
    return abs(x - y) <= 1e-12 * max(abs(x), abs(y))


@pytest.mark.parametrize("a, b, p, q, r, S, fn, gs", CONSTANTS)
def test_lambda2_transcription(a, b, p, q, r, S, fn, gs):
    ref = ((r - p) * S**q / fn) * (a / (r - q)) ** ((r - q) / (r - p)) * (
        (p - q) * S**r / gs) ** ((p - q) / (r - p))
    assert close(lambda2(a, p, q, r, S, fn, gs), ref)


@pytest.mark.parametrize("a, b, p, q, r, S, fn, gs", CONSTANTS)
def test_lambda1_transcription(a, b, p, q, r, S, fn, gs):
    # positivity boundary of ||u||^q [ (r-p)(a/(r-q))^.. ((p-q)S^r/|g|)^.. - lam |f| S^-q ]
    bracket = (r - p) * math.exp(
        (r - q) / (r - p) * math.log(a / (r - q)) + (p - q) / (r - p) * math.log((p - q) * S**r / gs))
    ref = bracket / (fn * S ** (-q))
    assert close(lambda1(a, p, q, r, S, fn, gs), ref)


@pytest.mark.parametrize("a, b, p, q, r, S, fn, gs", CONSTANTS)
def test_lambda_sup0_transcription(a, b, p, q, r, S, fn, gs):
    l, Lam = 1.7, 0.3 / b
    ref = p * a * S**q / ((2 * p - q) * l ** ((2 * p) / (2 * p - q))) * (
        a * Lam * (p - q) / ((1 - b * Lam) * (2 * p - q))) ** ((p - q) / p)
    assert close(lambda_sup0(a, b, p, q, S, l, Lam), ref)


def test_lambda_sup0_infeasible():
    with pytest.raises(InfeasibleError):
        lambda_sup0(1.0, 1.0, 2.0, 1.5, 3.0, 2.0, 1.0)


@pytest.mark.parametrize("a, b, p, q, r, S, fn, gs", CONSTANTS)
def test_lambda_sup1_transcription(a, b, p, q, r, S, fn, gs):
    r = 1.5 * p  # truncation setting p < r < 2p
    lo, hi = a * (r - p) / (r * b), a * (r - p) / (p * b)
    k = 0.4 * lo + 0.6 * hi
    l = 1.3
    Mk = a + b * k
    C1 = (p - q) * min(a, Mk)
    C2 = min((r - p) * a - (2 * p - r) * b * k, (r - p) * Mk)
    ref = (C1 * S**r / ((r - q) * gs)) ** ((p - q) / (r - p)) * (C2 * S**q / ((r - q) * l ** (r / (r - q))))
    assert truncation_constants(a, b, p, q, r, k) == pytest.approx((C1, C2), rel=1e-15)
    assert close(lambda_sup1(a, b, p, q, r, k, S, l, gs), ref)


@pytest.mark.parametrize("a, b, p, q, r, S, fn, gs", CONSTANTS)
def test_A_hat_transcription(a, b, p, q, r, S, fn, gs):
    r = 1.5 * p
    # M is increasing, so the sup over I of either power sits at an end of I
    ends = [a + b * a * (r - p) / (r * b), a + b * a * (r - p) / (p * b)]
    ref = max(m ** e for m in ends for e in ((q - r + 2) / (r - 1), 2 / (r - 1)))
    assert close(A_hat(a, b, p, q, r), ref)


def test_L_of_lambda_transcription():
    lam, C0, C1, Cs, q, r, meas = 0.4, 1.3, 2.2, 1.7, 1.5, 3.0, 2.0
    ref = (lam * C0 * Cs ** (q + 1) + C1 * Cs ** (r + 1)) * meas
    assert close(L_of_lambda(lam, C0, C1, Cs, q, r, meas), ref)


def test_b_upper_bound_transcription():
    assert close(b_upper_bound(1.2, 2.0, 3.0, 1.9, 14.0), 1.2 * 1.0 / (3.0 * 1.9 * 14.0))


@pytest.mark.parametrize("p, q, s, lam", [(2.0, 1.5, 0.4, 0.3), (2.0, 1.2, 0.3, 0.05), (3.0, 2.0, 0.25, 1.0)])
def test_critical_level_transcription(p, q, s, lam):
    a, l, S, m0, n = 1.3, 2.0, 0.9, 0.8, 1
    rho = p / q
    C = (1 / rho ** (1 / (rho - 1)) - 1 / rho ** (rho / (rho - 1))) * (
        ((2 * p - q) * l ** ((p - q) / p) * S ** (1 / rho)) ** (rho / (rho - 1))) / (2 * p * q * a ** (1 / (rho - 1)))
    ps = p * s
    pstar = n * p / (n - ps)
    ref = (pstar - 2 * p) / (2 * p * pstar) * (m0 * C) ** (n / ps) / S ** ((n - ps) / ps) - C * lam ** (p / (p - q))
    assert close(critical_constant(p, q, a, l, S), C)
    got = critical_level(lam, p, q, s, n, a, m0, l, S)
    assert abs(got - ref) <= 1e-12 * max(abs(ref), abs(C * lam ** (p / (p - q))))


def test_critical_threshold_regime():
    with pytest.raises(WrongRegimeError):
        critical_threshold(canonical_params(), 1.0, 2.0)
    params = canonical_params(0.1, r=10.0)
    v = critical_threshold(params, 0.9, 2.0)
    assert v == critical_level(0.1, 2.0, 1.5, 0.4, 1, 1.0, 1.0, 2.0, 0.9)


def test_table_canonical(canonical_table):
    t = canonical_table
    assert t.regime is Regime.SUBCRITICAL_HIGH
    assert t.lambda0 == min(t.lambda1, t.lambda2)
    assert close(t.lambda1, t.lambda2)  # the two closed forms coincide algebraically
    assert t.l == pytest.approx(2.0, rel=1e-14)  # int_{-1}^{1} 1
    for name in ("lambda_sup0", "lambda_sup1", "capital_lambda", "critical_level"):
        with pytest.raises(RegimeMismatchError):
            t.get(name)


def test_table_overrides_feed_formulas(grid31):
    params = canonical_params()
    t = compute_thresholds(grid31, params, overrides={"S_r": 2.0, "f_norm": 1.5, "g_sup": 0.5})
    assert t.lambda2 == lambda2(1.0, 2.0, 1.5, 5.0, 2.0, 1.5, 0.5)
    assert t.lambda0 == min(t.lambda1, t.lambda2)


def test_table_r_eq_2p_small_b(grid31):
    params = canonical_params(r=4.0, g="400")  # Lambda scales like 1/g
    t = compute_thresholds(grid31, params)
    assert t.regime is Regime.R_EQ_2P
    assert params.b * t.capital_lambda < 1
    ref = lambda_sup0(1.0, 1.0, 2.0, 1.5, t.S_r, t.l, t.capital_lambda)
    assert t.get("lambda_sup0") == ref
    assert "L_EXPONENT_DISCREPANCY" in t.flags


def test_table_r_eq_2p_large_b(grid31):
    t = compute_thresholds(grid31, canonical_params(r=4.0))
    assert "B_GE_INV_LAMBDA" in t.flags
    with pytest.raises(RegimeMismatchError):
        t.get("lambda_sup0")


def test_table_truncated(grid31):
    params = canonical_params(r=3.0, b=0.01)
    t = compute_thresholds(grid31, params)
    assert t.k == pytest.approx(0.5 * (1 / 3 + 1 / 2) / 0.01, rel=1e-14)
    assert t.lambda_hat0 == min(t.theta, t.lambda_sup1)
    assert t.b_bound == b_upper_bound(1.0, 2.0, 3.0, t.A_hat, t.L_of_lambda(t.theta))
    assert ("B_CONDITION_VIOLATED" in t.flags) == (not params.b < t.b_bound)


def test_table_critical_defaults_m0(grid31):
    t = compute_thresholds(grid31, canonical_params(0.05, r=10.0))
    assert t.regime is Regime.CRITICAL
    assert "M0_DEFAULTED" in t.flags
    assert np.isfinite(t.critical_level)


def test_lambda2_all_ones_closed_form():
    # a = S_r = |f| = sup g = 1, p = 2, q = 1.5, r = 5
    ref = 3 * (2 / 7) ** (7 / 6) * (1 / 2) ** (1 / 6)
    assert lambda2(1.0, 2.0, 1.5, 5.0, 1.0, 1.0, 1.0) == pytest.approx(ref, rel=1e-12)
