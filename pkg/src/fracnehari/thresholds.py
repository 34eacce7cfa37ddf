"""Closed-form lambda thresholds and auxiliary constants.

The formula functions take plain floats so tests can feed shared constants.
``compute_thresholds`` estimates the constants on a grid and assembles a
``ThresholdTable`` holding only the entries that apply to the regime.
"""

from dataclasses import dataclass, field

import numpy as np

from .domain import DEFAULT_RESTARTS, DEFAULT_SEED, estimate_capital_lambda, estimate_sobolev_constant
from .errors import InfeasibleError, RegimeMismatchError, WrongRegimeError
from .fiber import L_of_lambda
from .functional import Regime, TruncationParams

A_HAT_SAMPLES = 64


def lambda2(a, p, q, r, S_r, f_norm, g_sup):
    """Two fiber roots exist for every H+ G+ direction below this value."""
    return (
        ((r - p) * S_r**q / f_norm)
        * (a / (r - q)) ** ((r - q) / (r - p))
        * ((p - q) * S_r**r / g_sup) ** ((p - q) / (r - p))
    )


def lambda1(a, p, q, r, S_r, f_norm, g_sup):
    """Positivity boundary of the lower bound on E_lambda over inflection points."""
    lead = (r - p) * (a / (r - q)) ** ((r - q) / (r - p))
    lead *= ((p - q) * S_r**r / g_sup) ** ((p - q) / (r - p))
    return lead * S_r**q / f_norm


def lambda_sup0(a, b, p, q, S_r, l, capital_lambda):
    """Threshold for r = 2p; requires b * Lambda < 1."""
    r = 2.0 * p
    bl = b * capital_lambda
    if bl >= 1.0:
        raise InfeasibleError(f"b*Lambda = {bl!r} >= 1; no second branch threshold")
    base = p * a * S_r**q / ((2 * p - q) * l ** (r / (r - q)))
    return base * (a * capital_lambda * (p - q) / ((1.0 - bl) * (2 * p - q))) ** ((p - q) / p)


def truncation_constants(a, b, p, q, r, k):
    """(C1, C2) of the truncated inflection-point analysis."""
    Mk = a + b * k
    C1 = (p - q) * min(a, Mk)
    C2 = min((r - p) * a - (2 * p - r) * b * k, (r - p) * Mk)
    return C1, C2


def lambda_sup1(a, b, p, q, r, k, S_r, l, g_sup):
    C1, C2 = truncation_constants(a, b, p, q, r, k)
    first = (C1 * S_r**r / ((r - q) * g_sup)) ** ((p - q) / (r - p))
    return first * (C2 * S_r**q / ((r - q) * l ** (r / (r - q))))


def A_hat(a, b, p, q, r, samples=A_HAT_SAMPLES):
    """Max over a uniform sample of the truncation interval (endpoints included)."""
    lo = a * (r - p) / (r * b)
    hi = a * (r - p) / (p * b)
    k = np.linspace(lo, hi, samples)
    Mk = a + b * k
    return float(np.max(np.maximum(Mk ** ((q - r + 2) / (r - 1)), Mk ** (2 / (r - 1)))))


def b_upper_bound(a, p, r, a_hat, L_theta):
    """Largest b for which the a-priori bound keeps truncated solutions below k."""
    return a * (r - p) / (r * a_hat * L_theta)


def critical_constant(p, q, a, l, S):
    """Constant C of the critical compactness level (rho = p/q)."""
    rho = p / q
    front = 1.0 / rho ** (1.0 / (rho - 1.0)) - 1.0 / rho ** (rho / (rho - 1.0))
    inner = ((2 * p - q) * l ** ((p - q) / p) * S ** (1.0 / rho)) ** (rho / (rho - 1.0))
    return front * inner / (2 * p * q * a ** (1.0 / (rho - 1.0)))


def critical_level(lam, p, q, s, n, a, m0, l, S, C=None, C_conc=None):
    """Energy level below which Palais-Smale sequences are compact (critical case).

    ``C`` is used in both places unless ``C_conc`` overrides the one inside the
    concentration term.
    """
    ps = p * s
    pstar = n * p / (n - ps)
    C = critical_constant(p, q, a, l, S) if C is None else C
    Cc = C if C_conc is None else C_conc
    head = (pstar - 2 * p) / (2 * p * pstar) * (m0 * Cc) ** (n / ps) / S ** ((n - ps) / ps)
    return head - C * lam ** (p / (p - q))


def coercivity_lower_bound(A, params, l, S_r):
    """Lower bound for J on the Nehari set in terms of A = ||u||^p."""
    a, b, p, q, r, lam = params.a, params.b, params.p, params.q, params.r, params.lam
    return (
        (1 / p - 1 / r) * a * A
        + (1 / (2 * p) - 1 / r) * b * A * A
        - lam * (1 / q - 1 / r) * l ** ((r - q) / r) * S_r ** (-q) * A ** (q / p)
    )


@dataclass
class ThresholdTable:
    regime: Regime
    S_r: float
    f_norm: float
    l: float
    g_sup: float
    f_sup: float
    measure: float
    C_star: float
    q: float
    r: float
    lambda1: float
    lambda2: float
    lambda0: float
    T0_unit: float
    capital_lambda: float | None = None
    lambda_sup0: float | None = None
    lambda_sup1: float | None = None
    lambda_hat0: float | None = None
    A_hat: float | None = None
    k: float | None = None
    theta: float | None = None
    b_bound: float | None = None
    critical_C: float | None = None
    critical_level: float | None = None
    flags: list = field(default_factory=list)

    def L_of_lambda(self, lam):
        return L_of_lambda(lam, self.f_sup, self.g_sup, self.C_star, self.q, self.r, self.measure)

    def get(self, name):
        value = getattr(self, name, None)
        if value is None:
            raise RegimeMismatchError(f"{name} is not defined in regime {self.regime.value}")
        return value

    def as_dict(self):
        keys = [
            "S_r", "f_norm", "l", "g_sup", "f_sup", "lambda1", "lambda2", "lambda0",
            "T0_unit", "capital_lambda", "lambda_sup0", "lambda_sup1", "lambda_hat0",
            "A_hat", "k", "theta", "b_bound", "critical_C", "critical_level",
        ]
        out = {"regime": self.regime.value}
        out.update({k: getattr(self, k) for k in keys if getattr(self, k) is not None})
        out["flags"] = list(self.flags)
        return out

    def check(self):
        """Re-check the stored invariants (positivity, lambda0 = min)."""
        if self.lambda0 != min(self.lambda1, self.lambda2):
            raise ValueError("lambda0 must equal min(lambda1, lambda2)")
        for name in ("lambda1", "lambda2", "lambda0", "lambda_sup0", "lambda_sup1",
                     "lambda_hat0", "capital_lambda", "S_r", "A_hat"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive (got {v!r})")
        return self


def compute_thresholds(grid, params, theta=None, k=None, overrides=None,
                       restarts=DEFAULT_RESTARTS, seed=DEFAULT_SEED):
    """Estimate the constants on ``grid`` and evaluate every applicable threshold.

    Args:
        theta: cap used in the truncated regime; defaults to the lambda^1 value.
        k: truncation level; defaults to the midpoint of the admissible interval.
        overrides: mapping of constant or threshold names to forced values
            (``S_r``, ``f_norm``, ``g_sup``, ``capital_lambda``, ``lambda1``, ``lambda2``).
    """
    params.check_grid(grid)
    ov = dict(overrides or {})
    p, q, r, a, b = params.p, params.q, params.r, params.a, params.b
    regime = params.regime
    df, dg = params.f.on(grid), params.g.on(grid)

    S_r = ov["S_r"] if "S_r" in ov else estimate_sobolev_constant(grid, r, restarts, seed)
    e = r / (r - q)
    l = ov["l"] if "l" in ov else df.lebesgue_integral(e)
    f_norm = ov["f_norm"] if "f_norm" in ov else l ** (1.0 / e)
    g_sup = ov["g_sup"] if "g_sup" in ov else dg.sup_abs
    f_sup = ov["f_sup"] if "f_sup" in ov else df.sup_abs
    flags = []

    l1 = ov["lambda1"] if "lambda1" in ov else lambda1(a, p, q, r, S_r, f_norm, g_sup)
    l2 = ov["lambda2"] if "lambda2" in ov else lambda2(a, p, q, r, S_r, f_norm, g_sup)
    T0_unit = (a * (p - q) * S_r**r / ((r - q) * g_sup)) ** (1.0 / (r - p))
    table = ThresholdTable(
        regime=regime, S_r=S_r, f_norm=f_norm, l=l, g_sup=g_sup, f_sup=f_sup,
        measure=grid.measure, C_star=params.C_star, q=q, r=r,
        lambda1=l1, lambda2=l2, lambda0=min(l1, l2), T0_unit=T0_unit, flags=flags,
    )

    if regime is Regime.R_EQ_2P:
        Lam = ov["capital_lambda"] if "capital_lambda" in ov else estimate_capital_lambda(
            grid, params.g, p, restarts, seed)
        table.capital_lambda = Lam
        if b * Lam < 1.0:
            table.lambda_sup0 = lambda_sup0(a, b, p, q, S_r, l, Lam)
            flags.append("L_EXPONENT_DISCREPANCY")
        else:
            flags.append("B_GE_INV_LAMBDA")
    elif regime is Regime.R_LT_2P:
        kk = TruncationParams.midpoint(params).k if k is None else k
        TruncationParams(kk).validate(params)
        table.k = kk
        table.lambda_sup1 = lambda_sup1(a, b, p, q, r, kk, S_r, l, g_sup)
        table.theta = table.lambda_sup1 if theta is None else theta
        table.lambda_hat0 = min(table.theta, table.lambda_sup1)
        table.A_hat = A_hat(a, b, p, q, r)
        table.b_bound = b_upper_bound(a, p, r, table.A_hat, table.L_of_lambda(table.theta))
        if not b < table.b_bound:
            flags.append("B_CONDITION_VIOLATED")
        flags.append("L_EXPONENT_DISCREPANCY")
    elif regime is Regime.CRITICAL:
        table.critical_C = critical_constant(p, q, a, l, S_r)
        table.critical_level = critical_level(
            params.lam, p, q, params.s, params.n, a, params.m0_value, l, S_r, table.critical_C)
        if params.m0_defaulted:
            flags.append("M0_DEFAULTED")
    return table.check()


def critical_threshold(params, S, l, C_conc=None):
    """Critical compactness level at ``params.lam`` for the embedding constant ``S``."""
    if params.regime is not Regime.CRITICAL:
        raise WrongRegimeError("critical threshold requires r = p_s*")
    return critical_level(params.lam, params.p, params.q, params.s, params.n, params.a,
                          params.m0_value, l, S, C_conc=C_conc)

