"""
Fiber maps ``t -> J(t u)`` and the scalar function psi_u.

Everything here depends on ``u`` only through three numbers:
``A = ||u||^p``, ``F = int f|u|^q`` and ``G = int g|u|^r``. ``FiberMap`` works on
those scalars directly so the same code serves real nodal vectors and synthetic
test surrogates.

Useful identities (``T = t^p A``):

    phi'_{tu}(1)  = M(T) T - lam t^q F - t^r G = t^q (psi(t) - lam F)
    phi''_{tu}(1) = t^(q+1) psi'(t) + (q - 1) phi'_{tu}(1)

so on a Nehari point the sign of psi' decides the branch.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import (
    BoundViolationError,
    NoRootError,
    NonConvergedError,
    ThresholdExceededError,
    WrongClassError,
    WrongRegimeError,
    ZeroFunctionError,
)
from .functional import Regime, energy_pieces, kirchhoff_M

CLASS_RTOL = 1e-12
ROOT_MAXITER = 200
T0_RTOL = 1e-8


class Branch(str, enum.Enum):
    PLUS = "PLUS"
    MINUS = "MINUS"
    STAR = "STAR"


class SignClass(str, enum.Enum):
    POS = "+"
    NEG = "-"
    ZERO = "0"


@dataclass(frozen=True)
class FiberRoot:
    t: float
    branch: Branch
    psi_prime: float
    residual: float  # relative, see FiberMap.root_residual


@dataclass
class FiberReport:
    h_class: SignClass
    g_class: SignClass
    t_max: float | None = None
    roots: list = field(default_factory=list)
    psi_at_tmax: float | None = None
    lambda_line: float | None = None
    T0: float | None = None

    @property
    def plus(self):
        return [r for r in self.roots if r.branch is Branch.PLUS]

    @property
    def minus(self):
        return [r for r in self.roots if r.branch is Branch.MINUS]


@dataclass(frozen=True)
class FiberMap:
    """Scalar fiber data for one direction; ``k`` switches on the truncated coefficient."""

    A: float
    F: float
    G: float
    params: object
    k: float | None = None

    @classmethod
    def from_function(cls, u, params, k=None):
        """Scalars of ``u``; weight integrals inside the class tolerance are set to 0."""
        if u.is_zero():
            raise ZeroFunctionError("fiber map of the zero function")
        A = energy_pieces(u, params).A
        F, mF, G, mG = class_integrals(u, params)
        if _sign_class(F, mF) is SignClass.ZERO:
            F = 0.0
        if _sign_class(G, mG) is SignClass.ZERO:
            G = 0.0
        return cls(A, F, G, params, k)

    # coefficient and its primitive, truncated when k is set
    def M(self, T):
        return kirchhoff_M(T if self.k is None else min(T, self.k), self.params)

    def M_prime(self, T):
        # left derivative at the kink
        return self.params.b if (self.k is None or T <= self.k) else 0.0

    def M_hat(self, T):
        a, b = self.params.a, self.params.b
        if self.k is None or T <= self.k:
            return a * T + 0.5 * b * T * T
        k = self.k
        return a * k + 0.5 * b * k * k + (a + b * k) * (T - k)

    @property
    def t_k(self):
        """Scale at which ``t^p A`` hits the truncation level."""
        return None if self.k is None else (self.k / self.A) ** (1.0 / self.params.p)

    @property
    def lambda_line(self):
        return self.params.lam * self.F

    def psi(self, t):
        p, q, r = self.params.p, self.params.q, self.params.r
        T = t**p * self.A
        return self.M(T) * t ** (p - q) * self.A - t ** (r - q) * self.G

    def h(self, t):
        """``psi'(t) / t^(p-q-1)``; same sign as psi' and finite at t = 0."""
        P = self.params
        p, q, r = P.p, P.q, P.r
        T = t**p * self.A
        return (
            self.M(T) * (p - q) * self.A
            + self.M_prime(T) * p * T * self.A
            - (r - q) * self.G * t ** (r - p)
        )

    def psi_prime(self, t):
        p, q = self.params.p, self.params.q
        return t ** (p - q - 1.0) * self.h(t)

    def phi1(self, t=1.0):
        """phi'_{tu}(1) = d/ds J(s t u) at s = 1."""
        P = self.params
        T = t**P.p * self.A
        return self.M(T) * T - P.lam * t**P.q * self.F - t**P.r * self.G

    def phi2(self, t=1.0):
        """phi''_{tu}(1)."""
        P = self.params
        T = t**P.p * self.A
        return (
            (P.p - 1.0) * self.M(T) * T
            + self.M_prime(T) * P.p * T * T
            - P.lam * (P.q - 1.0) * t**P.q * self.F
            - (P.r - 1.0) * t**P.r * self.G
        )

    def energy(self, t):
        P = self.params
        T = t**P.p * self.A
        return self.M_hat(T) / P.p - P.lam * t**P.q * self.F / P.q - t**P.r * self.G / P.r

    def scale(self, t):
        """Magnitude of the terms entering phi'_{tu}(1); used for relative tolerances."""
        P = self.params
        T = t**P.p * self.A
        return abs(self.M(T) * T) + abs(P.lam * t**P.q * self.F) + abs(t**P.r * self.G)

    def root_residual(self, t):
        """|psi(t) - lam F| relative to the size of the terms involved."""
        P = self.params
        T = t**P.p * self.A
        size = abs(self.M(T) * t ** (P.p - P.q) * self.A) + abs(t ** (P.r - P.q) * self.G)
        size += abs(self.lambda_line)
        return abs(self.psi(t) - self.lambda_line) / size

    @property
    def natural_scale(self):
        return self.A ** (-1.0 / self.params.p)

    # --- stationary structure -------------------------------------------------

    def _h_extremum(self):
        """Interior extremum of the untruncated h, if any."""
        P = self.params
        p, q, r = P.p, P.q, P.r
        if self.G <= 0 or math.isclose(r, 2 * p, rel_tol=1e-12):
            return None
        ratio = (r - p) * (r - q) * self.G / (p * (2 * p - q) * P.b * self.A**2)
        return ratio ** (1.0 / (2 * p - r))

    def breakpoints(self):
        """Sorted points splitting (0, inf) into pieces where psi is monotone.

        Contains every zero of psi' and the truncation kink ``t_k``.
        """
        te = self._h_extremum()
        tk = self.t_k
        lower = self._h_untruncated
        if tk is None:
            edges = [0.0] + ([te] if te is not None else []) + [math.inf]
            pieces = [(lower, lo, hi) for lo, hi in zip(edges[:-1], edges[1:])]
        else:
            # h jumps at t_k; use the smooth formula of each side on its pieces
            edges = [0.0] + ([te] if te is not None and te < tk else []) + [tk]
            pieces = [(lower, lo, hi) for lo, hi in zip(edges[:-1], edges[1:])]
            pieces.append((self._h_capped, tk, math.inf))
        pts = []
        for fn, lo, hi in pieces:
            pts.extend(_monotone_roots(fn, lo, hi, self.natural_scale))
        if tk is not None:
            pts.append(tk)
        return sorted(set(pts))

    def _h_untruncated(self, t):
        P = self.params
        p, q, r = P.p, P.q, P.r
        return (
            P.a * (p - q) * self.A
            + P.b * (2 * p - q) * self.A**2 * t**p
            - (r - q) * self.G * t ** (r - p)
        )

    def _h_capped(self, t):
        P = self.params
        return (
            kirchhoff_M(self.k, P) * (P.p - P.q) * self.A
            - (P.r - P.q) * self.G * t ** (P.r - P.p)
        )

    def _piece_signs(self, bps):
        """Sign of psi' on each piece between consecutive breakpoints."""
        edges = [0.0] + list(bps) + [math.inf]
        signs = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            if hi == math.inf:
                mid = 2.0 * lo if lo > 0 else self.natural_scale
            elif lo == 0.0:
                mid = 0.5 * hi
            else:
                mid = math.sqrt(lo * hi)
            signs.append(np.sign(self.h(mid)))
        return signs

    def t_max(self):
        """First local maximizer of psi (None when psi has none)."""
        bps = self.breakpoints()
        signs = self._piece_signs(bps)
        for i, t in enumerate(bps):
            if signs[i] > 0 and signs[i + 1] < 0:
                return t
        return None

    def roots(self):
        """All t > 0 with psi(t) = lam F, labelled by the sign of psi'."""
        line = self.lambda_line

        def resid(t):
            return self.psi(t) - line

        # psi(0+) = 0; with a zero lambda line the sign just right of 0 is that of psi
        sign0 = -np.sign(line) if line != 0 else 1.0
        edges = [0.0] + self.breakpoints() + [math.inf]
        found = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            for t in _monotone_roots(resid, lo, hi, self.natural_scale,
                                     sign_lo=sign0 if lo == 0.0 else None):
                t = self._polish(t, resid, lo, hi)
                dp = self.psi_prime(t)
                branch = Branch.PLUS if dp > 0 else Branch.MINUS
                found.append(FiberRoot(t, branch, dp, self.root_residual(t)))
        return found

    def _polish(self, t, resid, lo, hi):
        """One safeguarded Newton step."""
        d = self.psi_prime(t)
        if d == 0 or not math.isfinite(d):
            return t
        t_new = t - resid(t) / d
        if lo < t_new < hi and abs(resid(t_new)) < abs(resid(t)):
            return t_new
        return t


def _eval_wide(fn, x):
    """fn(x) with overflow mapped to inf/nan instead of raising."""
    with np.errstate(over="ignore", invalid="ignore"):
        return float(fn(np.float64(x)))


def _monotone_roots(fn, lo, hi, scale, sign_lo=None):
    """Zero of ``fn`` on an interval where it is monotone (list of 0 or 1 items).

    ``hi`` may be infinite; the bracket is then grown geometrically.
    """
    f_lo = sign_lo if sign_lo is not None else fn(lo)
    if lo > 0 and f_lo == 0:
        return [lo]
    if hi == math.inf:
        x = max(2.0 * lo, scale)
        f_x = _eval_wide(fn, x)
        for _ in range(2000):
            if np.sign(f_x) != np.sign(f_lo) or not math.isfinite(f_x):
                break
            x *= 2.0
            f_x = _eval_wide(fn, x)
        if not math.isfinite(f_x):
            # left the float range without a sign change: no representable root
            return []
        hi, f_hi = x, f_x
    else:
        f_hi = fn(hi)
    if np.sign(f_lo) == np.sign(f_hi) or f_hi == 0:
        return []
    a = lo
    if lo == 0.0:
        # walk in from the left end so brentq sees finite values of the right sign
        a = hi
        for _ in range(2000):
            a *= 0.5
            fa = fn(a)
            if np.sign(fa) == np.sign(f_lo) and fa != 0:
                break
        else:
            return []
    t, info = brentq(fn, a, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                     maxiter=ROOT_MAXITER, full_output=True, disp=False)
    if not info.converged:
        raise NonConvergedError("fiber root bisection did not converge")
    return [t]


def _sign_class(value, mass):
    if abs(value) <= CLASS_RTOL * mass:
        return SignClass.ZERO
    return SignClass.POS if value > 0 else SignClass.NEG


def _abs_cell_integrals(weight):
    _, wts = weight.grid.gauss
    return np.sum(wts * np.abs(weight.gauss_values), axis=1)


def class_integrals(u, params):
    """(F, |F| mass, G, |G| mass) for the sign-class decision."""
    grid = u.grid
    av = np.abs(u.values)
    df, dg = params.f.on(grid), params.g.on(grid)
    F = float(np.dot(df.cell_integrals, av**params.q))
    G = float(np.dot(dg.cell_integrals, av**params.r))
    mF = float(np.dot(_abs_cell_integrals(df), av**params.q))
    mG = float(np.dot(_abs_cell_integrals(dg), av**params.r))
    return F, mF, G, mG


def classify(u, params):
    """Sign classes of ``u`` with respect to f (exponent q) and g (exponent r)."""
    if u.is_zero():
        raise ZeroFunctionError("classification of the zero function")
    F, mF, G, mG = class_integrals(u, params)
    return FiberReport(h_class=_sign_class(F, mF), g_class=_sign_class(G, mG),
                       lambda_line=params.lam * F)


def psi(u, t, params, trunc=None):
    return FiberMap.from_function(u, params, _k(trunc)).psi(t)


def psi_prime(u, t, params, trunc=None):
    return FiberMap.from_function(u, params, _k(trunc)).psi_prime(t)


def fiber_first_derivative(u, params, trunc=None):
    """Nehari residual phi'_u(1); vanishes exactly on the Nehari set."""
    return FiberMap.from_function(u, params, _k(trunc)).phi1()


def fiber_second_derivative(u, params, trunc=None):
    return FiberMap.from_function(u, params, _k(trunc)).phi2()


def _k(trunc):
    return None if trunc is None else trunc.k


def t0_lower_bound(A, params, S_r, g_sup):
    """T0 = A^(-1/p) [a(p-q) S_r^r / ((r-q) ||g||_inf)]^(1/(r-p))."""
    p, q, r, a = params.p, params.q, params.r, params.a
    return A ** (-1.0 / p) * (a * (p - q) * S_r**r / ((r - q) * g_sup)) ** (1.0 / (r - p))


@dataclass(frozen=True)
class TMax:
    t_max: float
    T0: float | None
    psi_at_tmax: float


def find_t_max(u, params, S_r=None, trunc=None):
    """Maximizer of psi_u for a direction with positive g-integral.

    When ``S_r`` is given, the lower bound T0 is computed and enforced.
    """
    rep = classify(u, params)
    if rep.g_class is not SignClass.POS:
        raise WrongClassError(f"t_max requires a G+ direction (got G{rep.g_class.value})")
    fm = FiberMap.from_function(u, params, _k(trunc))
    t = fm.t_max()
    if t is None:
        raise NoRootError("psi has no interior maximum for this direction")
    if t != fm.t_k and abs(fm.h(t)) > 1e-10 * (fm.scale(t) / max(t**params.p, 1e-300) + 1.0):
        raise NonConvergedError("t_max root of psi' not resolved")
    T0 = None
    if S_r is not None:
        T0 = t0_lower_bound(fm.A, params, S_r, params.g.on(u.grid).sup_abs)
        if t < T0 * (1.0 - T0_RTOL):
            raise BoundViolationError(f"t_max={t!r} below the lower bound T0={T0!r}")
    return TMax(t, T0, fm.psi(t))


def find_fiber_roots(u, params, trunc=None, threshold=None):
    """Solve psi_u(t) = lam int f|u|^q on (0, inf).

    Args:
        threshold: optional ``(name, value)``; when no root exists and
            ``lam >= value`` the failure is reported as THRESHOLD_EXCEEDED.

    Returns:
        FiberReport with roots sorted by t, each labelled by the sign of psi'.
    """
    rep = classify(u, params)
    fm = FiberMap.from_function(u, params, _k(trunc))
    rep.roots = fm.roots()
    rep.lambda_line = fm.lambda_line
    tm = fm.t_max()
    if tm is not None:
        rep.t_max = tm
        rep.psi_at_tmax = fm.psi(tm)
    if not rep.roots:
        if threshold is not None and params.lam >= threshold[1]:
            raise ThresholdExceededError(
                f"no fiber root; lambda={params.lam!r} >= {threshold[0]}={threshold[1]!r}",
                threshold[0],
            )
        raise NoRootError(
            f"lambda line {fm.lambda_line!r} misses the range of psi "
            f"(class H{rep.h_class.value} G{rep.g_class.value})"
        )
    return rep


def E_lambda(u, params):
    """[(r-p) a A + (r-2p) b A^2] / (r-q) - lam F.

    On the Nehari set, phi''_u(1) = -(r-q) E_lambda(u).
    """
    if u.is_zero():
        raise ZeroFunctionError("E_lambda of the zero function")
    pc = energy_pieces(u, params)
    return e_lambda_scalar(pc.A, pc.F, params)


def e_lambda_scalar(A, F, params):
    a, b, p, q, r = params.a, params.b, params.p, params.q, params.r
    return ((r - p) * a * A + (r - 2 * p) * b * A * A) / (r - q) - params.lam * F


@dataclass(frozen=True)
class BoundCheck:
    holds: bool
    lhs: float
    rhs: float
    L: float
    C0: float
    C1: float


def L_of_lambda(lam, C0, C1, C_star, q, r, measure):
    return (lam * C0 * C_star ** (q + 1) + C1 * C_star ** (r + 1)) * measure


def apriori_bound_check(u, params, C0=None, C1=None):
    """Check ||u||^p < max{M^((q-r+2)/(r-1)), M^(2/(r-1))} L(lam) for r < 2p."""
    if params.regime is not Regime.R_LT_2P:
        raise WrongRegimeError("a-priori bound applies only for p < r < 2p")
    grid = u.grid
    C0 = params.f.on(grid).sup_abs if C0 is None else C0
    C1 = params.g.on(grid).sup_abs if C1 is None else C1
    q, r = params.q, params.r
    A = energy_pieces(u, params).A
    Mv = kirchhoff_M(A, params)
    L = L_of_lambda(params.lam, C0, C1, params.C_star, q, r, grid.measure)
    rhs = max(Mv ** ((q - r + 2) / (r - 1)), Mv ** (2 / (r - 1))) * L
    return BoundCheck(A < rhs, A, rhs, L, C0, C1)
