"""Kirchhoff coefficient, energy functionals, gradients and the weak-form residual."""

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .domain import (
    DiscreteFunction,
    WeightSpec,
    seminorm_p_gradient,
    seminorm_p_values,
    signed_power,
)
from .errors import ValidationError, WrongRegimeError

REGIME_RTOL = 1e-12


class Regime(str, enum.Enum):
    SUBCRITICAL_HIGH = "SUBCRITICAL_HIGH"  # 2p < r < p*
    R_EQ_2P = "R_EQ_2P"
    R_LT_2P = "R_LT_2P"  # p < r < 2p
    CRITICAL = "CRITICAL"  # r = p*


def critical_exponent(p, s, n=1):
    return n * p / (n - p * s)


def validate_params(a, b, p, q, r, s, lam, C_star=1.0, m0=None, n=1):
    """Return a list of field-level violation messages (empty when valid)."""
    errors = []
    if not a > 0:
        errors.append(f"a: requires a > 0 (got {a})")
    if not b > 0:
        errors.append(f"b: requires b > 0 (got {b})")
    if not p >= 2:
        errors.append(f"p: requires p >= 2 (got {p})")
    if not 0 < s < 1:
        errors.append(f"s: requires 0 < s < 1 (got {s})")
    elif not (p * s < n < 2 * p * s):
        errors.append(f"s: requires p*s < {n} < 2*p*s (got p*s = {p * s:g})")
    if not q > 1:
        errors.append(f"q: requires q > 1 (got {q})")
    if not q < p:
        errors.append(f"q: requires q < p (got q={q}, p={p})")
    if not r > p:
        errors.append(f"r: requires r > p (got r={r}, p={p})")
    if 0 < s < 1 and p * s < n:
        pstar = critical_exponent(p, s, n)
        if r > pstar * (1 + REGIME_RTOL):
            errors.append(f"r: requires r <= p_s* = {pstar:g} (got {r})")
    if not lam > 0:
        errors.append(f"lambda: requires lambda > 0 (got {lam})")
    if not C_star > 0:
        errors.append(f"c_star: requires c_star > 0 (got {C_star})")
    if m0 is not None and not m0 > 0:
        errors.append(f"m0: requires m0 > 0 (got {m0})")
    return errors


@dataclass(frozen=True, eq=False)
class ProblemParams:
    a: float
    b: float
    p: float
    q: float
    r: float
    s: float
    lam: float
    f: WeightSpec = field(default_factory=lambda: WeightSpec("1"))
    g: WeightSpec = field(default_factory=lambda: WeightSpec("1"))
    C_star: float = 1.0
    m0: float | None = None
    n: int = 1

    def __post_init__(self):
        for name in ("f", "g"):
            w = getattr(self, name)
            if not isinstance(w, WeightSpec):
                object.__setattr__(self, name, WeightSpec(w))
        errors = validate_params(
            self.a, self.b, self.p, self.q, self.r, self.s, self.lam,
            self.C_star, self.m0, self.n,
        )
        if errors:
            raise ValidationError(errors)

    @property
    def critical_exponent(self):
        return critical_exponent(self.p, self.s, self.n)

    @property
    def regime(self):
        r, p = self.r, self.p
        if math.isclose(r, self.critical_exponent, rel_tol=REGIME_RTOL):
            return Regime.CRITICAL
        if math.isclose(r, 2 * p, rel_tol=REGIME_RTOL):
            return Regime.R_EQ_2P
        return Regime.SUBCRITICAL_HIGH if r > 2 * p else Regime.R_LT_2P

    @property
    def m0_value(self):
        return self.a if self.m0 is None else self.m0

    @property
    def m0_defaulted(self):
        return self.m0 is None

    def with_lambda(self, lam):
        return replace(self, lam=lam)

    def check_grid(self, grid):
        if not (math.isclose(grid.p, self.p) and math.isclose(grid.s, self.s)):
            raise ValueError(
                f"grid (p={grid.p}, s={grid.s}) does not match params (p={self.p}, s={self.s})"
            )


def truncation_interval(params):
    """Open interval I = (a(r-p)/(rb), a(r-p)/(pb)) of admissible truncation levels."""
    a, b, p, r = params.a, params.b, params.p, params.r
    return a * (r - p) / (r * b), a * (r - p) / (p * b)


@dataclass(frozen=True)
class TruncationParams:
    k: float

    @classmethod
    def midpoint(cls, params):
        lo, hi = truncation_interval(params)
        return cls(0.5 * (lo + hi))

    def validate(self, params):
        if params.regime is not Regime.R_LT_2P:
            raise WrongRegimeError("truncation is only defined for p < r < 2p")
        lo, hi = truncation_interval(params)
        if not lo < self.k < hi:
            raise ValidationError(f"trunc.k: requires {lo:g} < k < {hi:g} (got {self.k})")
        return self


def kirchhoff_M(t, params):
    return params.a + params.b * t


def kirchhoff_M_hat(t, params):
    return params.a * t + 0.5 * params.b * t * t


def _require_truncation(params):
    if params.regime is not Regime.R_LT_2P:
        raise WrongRegimeError("truncated coefficient requires regime R_LT_2P")


def truncated_M(t, trunc, params):
    _require_truncation(params)
    return kirchhoff_M(min(t, trunc.k), params)


def truncated_M_hat(t, trunc, params):
    _require_truncation(params)
    k = trunc.k
    if t <= k:
        return kirchhoff_M_hat(t, params)
    return kirchhoff_M_hat(k, params) + kirchhoff_M(k, params) * (t - k)


def _M_and_hat(A, params, trunc):
    if trunc is None:
        return kirchhoff_M(A, params), kirchhoff_M_hat(A, params)
    return truncated_M(A, trunc, params), truncated_M_hat(A, trunc, params)


@dataclass(frozen=True)
class EnergyPieces:
    """Seminorm power A, weight integrals F and G of one nodal vector."""

    A: float
    F: float
    G: float


def energy_pieces(u, params):
    grid = u.grid
    v = u.values
    df, dg = params.f.on(grid), params.g.on(grid)
    A = seminorm_p_values(v, grid)
    av = np.abs(v)
    F = float(np.dot(df.cell_integrals, av**params.q))
    G = float(np.dot(dg.cell_integrals, av**params.r))
    return EnergyPieces(A, F, G)


def energy_from_pieces(pc, params, trunc=None):
    _, Mhat = _M_and_hat(pc.A, params, trunc)
    return Mhat / params.p - params.lam * pc.F / params.q - pc.G / params.r


def energy(u, params):
    """J_lambda(u) = M^(||u||^p)/p - lam/q int f|u|^q - 1/r int g|u|^r."""
    return energy_from_pieces(energy_pieces(u, params), params)


def energy_truncated(u, trunc, params):
    _require_truncation(params)
    return energy_from_pieces(energy_pieces(u, params), params, trunc)


def gradient_values(values, grid, params, trunc=None, A=None):
    """Gradient of J (or J_k) with respect to nodal values.

    Entry i is the weak form tested against the indicator of cell i.
    """
    v = np.asarray(values, dtype=float)
    if A is None:
        A = seminorm_p_values(v, grid)
    M, _ = _M_and_hat(A, params, trunc)
    df, dg = params.f.on(grid), params.g.on(grid)
    return (
        M * seminorm_p_gradient(v, grid) / params.p
        - params.lam * df.cell_integrals * signed_power(v, params.q)
        - dg.cell_integrals * signed_power(v, params.r)
    )


def energy_gradient(u, params, trunc=None):
    return gradient_values(u.values, u.grid, params, trunc)


def weak_residual(u, params, trunc=None):
    """Max-norm of the energy gradient; zero exactly at discrete weak solutions."""
    return float(np.max(np.abs(energy_gradient(u, params, trunc))))
