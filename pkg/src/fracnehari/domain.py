"""
One-dimensional grid, weights and quadrature for the fractional p-Kirchhoff solver.

A nodal vector ``u`` on ``GridDomain`` stands for the piecewise-constant function
that equals ``u[i]`` on the cell around interior node ``i`` and vanishes outside
``(left, right)``. Interior cells are ``[x_i - h/2, x_i + h/2]``; the two end cells
are stretched to the endpoints so the cells tile the interval exactly. For such
functions the Gagliardo double integral reduces to exact kernel moments:

    [u]^p = sum_{i != j} |u_i - u_j|^p K_ij + 2 sum_i |u_i|^p T_i

with ``K_ij`` the integral of ``|x - y|^(-1-ps)`` over cell i times cell j and
``T_i`` the integral over cell i times the exterior of the interval.
"""

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import minimize

from .errors import (
    BadBoundsError,
    EvalError,
    InfeasibleError,
    NonConvergedError,
    OrderWindowError,
)
from .expr import compile_expression

GAUSS_POINTS = 8
DEFAULT_RESTARTS = 16
DEFAULT_SEED = 42


@dataclass(frozen=True)
class GridDomain:
    left: float
    right: float
    n_nodes: int
    s: float
    p: float
    dim: int = 1

    def __post_init__(self):
        if not self.left < self.right:
            raise BadBoundsError(f"left={self.left} must be < right={self.right}")
        if int(self.n_nodes) != self.n_nodes or self.n_nodes < 1:
            raise BadBoundsError(f"n_nodes={self.n_nodes} must be a positive integer")
        if not 0.0 < self.s < 1.0:
            raise OrderWindowError(f"s={self.s} must lie in (0, 1)")
        if self.p < 2.0:
            raise OrderWindowError(f"p={self.p} must be >= 2")
        ps = self.p * self.s
        if not (ps < self.dim < 2.0 * ps):
            raise OrderWindowError(
                f"p*s={ps:g} violates p*s < n < 2*p*s for n={self.dim}"
            )

    @property
    def h(self):
        return (self.right - self.left) / (self.n_nodes + 1)

    @property
    def measure(self):
        return self.right - self.left

    @property
    def ps(self):
        return self.p * self.s

    @property
    def critical_exponent(self):
        return self.dim * self.p / (self.dim - self.ps)

    @cached_property
    def nodes(self):
        return self.left + self.h * np.arange(1, self.n_nodes + 1)

    @cached_property
    def edges(self):
        inner = self.nodes[:-1] + 0.5 * self.h
        return np.concatenate(([self.left], inner, [self.right]))

    @cached_property
    def cell_lengths(self):
        return np.diff(self.edges)

    @cached_property
    def kernel(self):
        """Symmetric matrix of cell-cell kernel moments, zero diagonal."""
        e = self.edges
        a, b = e[:-1], e[1:]
        # x in cell i, y in cell j to the right of i
        diff = lambda u, v: np.maximum(u[None, :] - v[:, None], 0.0)
        K = (
            _second_primitive(diff(b, a), self.ps)
            - _second_primitive(diff(b, b), self.ps)
            - _second_primitive(diff(a, a), self.ps)
            + _second_primitive(diff(a, b), self.ps)
        )
        K = np.triu(K, k=1)
        return K + K.T

    @cached_property
    def tails(self):
        """Kernel moment of each cell against the complement of (left, right)."""
        ps = self.ps
        a, b = self.edges[:-1], self.edges[1:]
        c = 1.0 / (ps * (1.0 - ps))
        e = 1.0 - ps
        left_part = (b - self.left) ** e - (a - self.left) ** e
        right_part = (self.right - a) ** e - (self.right - b) ** e
        return c * (left_part + right_part)

    @cached_property
    def gauss(self):
        """Quadrature points (n_nodes, GAUSS_POINTS) and matching weights."""
        xg, wg = np.polynomial.legendre.leggauss(GAUSS_POINTS)
        a, b = self.edges[:-1, None], self.edges[1:, None]
        pts = 0.5 * (a + b) + 0.5 * (b - a) * xg[None, :]
        wts = 0.5 * (b - a) * wg[None, :]
        return pts, wts

    def profile_x(self):
        """Node coordinates including both boundary nodes."""
        return np.concatenate(([self.left], self.nodes, [self.right]))


def _second_primitive(z, ps):
    # Phi'' = z^(-1-ps) on z > 0 with Phi(0) = 0
    return -np.power(z, 1.0 - ps) / (ps * (1.0 - ps))


def build_grid(left, right, n_nodes, s, p):
    """Uniform grid with ``n_nodes`` interior nodes and spacing (right-left)/(n_nodes+1)."""
    return GridDomain(float(left), float(right), int(n_nodes), float(s), float(p))


@dataclass(frozen=True, eq=False)
class DiscreteFunction:
    values: np.ndarray
    grid: GridDomain

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"expected {self.grid.n_nodes} nodal values, got shape {v.shape}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def scaled(self, t):
        return DiscreteFunction(t * self.values, self.grid)

    def with_values(self, values):
        return DiscreteFunction(values, self.grid)

    def is_zero(self):
        return not np.any(self.values)

    def profile(self):
        """(x, u) including the zero boundary values."""
        return self.grid.profile_x(), np.concatenate(([0.0], self.values, [0.0]))


class WeightSign(enum.Enum):
    NONNEGATIVE = "nonnegative"
    NONPOSITIVE = "nonpositive"
    SIGN_CHANGING = "sign-changing"


@dataclass(frozen=True, eq=False)
class DiscreteWeight:
    """Weight sampled on one grid: node values, cell integrals, norms."""

    grid: GridDomain
    node_values: np.ndarray
    cell_integrals: np.ndarray
    gauss_values: np.ndarray
    sup_abs: float
    sign: WeightSign

    def lebesgue_integral(self, exponent):
        """Quadrature of ``|w|^exponent`` over the interval."""
        _, wts = self.grid.gauss
        return float(np.sum(wts * np.abs(self.gauss_values) ** exponent))

    def lebesgue_norm(self, exponent):
        return self.lebesgue_integral(exponent) ** (1.0 / exponent)

    @property
    def positive_part_nontrivial(self):
        return bool(np.any(self.node_values > 0) or np.any(self.gauss_values > 0))


class WeightSpec:
    """Parsed weight expression; discretizations are cached per grid."""

    def __init__(self, expression):
        self.expression = str(expression)
        self._fn = compile_expression(self.expression)
        self._cache = {}

    def __repr__(self):
        return f"WeightSpec({self.expression!r})"

    # the compiled closure is not picklable; rebuild it from the text
    def __getstate__(self):
        return {"expression": self.expression}

    def __setstate__(self, state):
        self.__init__(state["expression"])

    def __call__(self, x):
        with np.errstate(all="ignore"):
            return self._fn(np.asarray(x, dtype=float))

    def on(self, grid):
        key = grid
        if key not in self._cache:
            self._cache[key] = self._discretize(grid)
        return self._cache[key]

    def _discretize(self, grid):
        node_values = np.broadcast_to(self(grid.nodes), grid.nodes.shape).astype(float)
        pts, wts = grid.gauss
        gauss_values = np.broadcast_to(self(pts), pts.shape).astype(float)
        for label, vals, where in (
            ("node", node_values, grid.nodes),
            ("quadrature point", gauss_values.ravel(), pts.ravel()),
        ):
            bad = ~np.isfinite(vals)
            if np.any(bad):
                x_bad = where[np.argmax(bad)]
                raise EvalError(
                    f"weight {self.expression!r} is not finite at {label} x={x_bad:g}"
                )
        allv = np.concatenate((node_values, gauss_values.ravel()))
        if np.all(allv >= 0):
            sign = WeightSign.NONNEGATIVE
        elif np.all(allv <= 0):
            sign = WeightSign.NONPOSITIVE
        else:
            sign = WeightSign.SIGN_CHANGING
        return DiscreteWeight(
            grid=grid,
            node_values=node_values,
            cell_integrals=np.sum(wts * gauss_values, axis=1),
            gauss_values=gauss_values,
            sup_abs=float(np.max(np.abs(allv))),
            sign=sign,
        )

    def sign_on(self, grid):
        return self.on(grid).sign


def parse_weight(expression, grid=None):
    """Parse a weight expression; if ``grid`` is given, evaluate it there right away."""
    spec = WeightSpec(expression)
    if grid is not None:
        spec.on(grid)
    return spec


def _values(u):
    return u.values if isinstance(u, DiscreteFunction) else np.asarray(u, dtype=float)


def signed_power(v, e):
    """``|v|^(e-1) * v`` extended by 0 at v = 0 (e > 1)."""
    out = np.zeros_like(v)
    nz = v != 0
    out[nz] = np.abs(v[nz]) ** (e - 1.0) * np.sign(v[nz])
    return out


def seminorm_p_values(values, grid):
    v = np.asarray(values, dtype=float)
    d = np.abs(v[:, None] - v[None, :])
    return float(np.sum(d**grid.p * grid.kernel) + 2.0 * np.sum(np.abs(v) ** grid.p * grid.tails))


def gagliardo_seminorm_p(u):
    """p-th power of the X0 seminorm: double integral of |u(x)-u(y)|^p |x-y|^(-1-ps)."""
    return seminorm_p_values(u.values, u.grid)


def seminorm_p_gradient(values, grid):
    """Gradient of ``seminorm_p_values`` with respect to the nodal values."""
    v = np.asarray(values, dtype=float)
    p = grid.p
    d = v[:, None] - v[None, :]
    pair = np.sum(np.abs(d) ** (p - 2.0) * d * grid.kernel, axis=1)
    return 2.0 * p * (pair + signed_power(v, p) * grid.tails)


def x0_norm(u):
    return gagliardo_seminorm_p(u) ** (1.0 / u.grid.p)


def weighted_integral(u, w, exponent):
    """Quadrature of ``w |u|^exponent`` over the interval (may be negative)."""
    if exponent <= 0:
        raise ValueError("exponent must be positive")
    dw = w.on(u.grid) if isinstance(w, WeightSpec) else w
    return float(np.dot(dw.cell_integrals, np.abs(u.values) ** exponent))


def lebesgue_norm(u, r):
    """L^r norm of the piecewise-constant function."""
    return float(np.dot(u.grid.cell_lengths, np.abs(u.values) ** r)) ** (1.0 / r)


def sobolev_quotient(u, r):
    """||u||_X0 / ||u||_{L^r}; scale invariant."""
    return x0_norm(u) / lebesgue_norm(u, r)


def _random_starts(grid, rng, count):
    """Deterministic start list: the first sine mode, then random positive vectors."""
    xi = (grid.nodes - grid.left) / grid.measure
    starts = [np.sin(np.pi * xi)]
    while len(starts) < count:
        starts.append(np.abs(rng.standard_normal(grid.n_nodes)) + 0.05)
    return starts


def _multistart_minimize(fun, starts, stat_tol, relative=False):
    """L-BFGS from each start; returns (best value, best x, stationary flag).

    Ties go to the earlier start. With ``relative`` the stationarity test is
    scaled by the objective magnitude.
    """
    best = None
    for k, x0 in enumerate(starts):
        x0 = x0 / np.linalg.norm(x0)
        res = minimize(
            fun,
            x0,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": 5000, "maxcor": 30, "ftol": 1e-15, "gtol": 1e-13},
        )
        x = res.x / np.linalg.norm(res.x)
        val, grad = fun(x)
        scale = abs(val) if relative else 1.0
        stationary = np.linalg.norm(grad) < stat_tol * scale
        key = (val, k)
        if best is None or key < best[0]:
            best = (key, x, stationary)
    (val, _), x, stationary = best
    return val, x, stationary


def estimate_sobolev_constant(grid, r, restarts=DEFAULT_RESTARTS, seed=DEFAULT_SEED,
                              return_minimizer=False):
    """Estimate S_r = inf ||u||_X0 / ||u||_{L^r} over the discrete space.

    Minimizes the log of the quotient by L-BFGS from ``restarts`` seeded starts and
    keeps the lowest value. Raises NonConvergedError when the best run is not
    stationary.
    """
    if not 1.0 < r <= grid.critical_exponent * (1 + 1e-12):
        raise ValueError(f"r={r} must lie in (1, {grid.critical_exponent:g}]")
    p = grid.p
    c = grid.cell_lengths

    def fun(v):
        A = seminorm_p_values(v, grid)
        Lr = float(np.dot(c, np.abs(v) ** r))
        if A <= 0 or Lr <= 0:
            return np.inf, np.zeros_like(v)
        val = math.log(A) / p - math.log(Lr) / r
        grad = seminorm_p_gradient(v, grid) / (p * A) - c * signed_power(v, r) / Lr
        return val, grad

    rng = np.random.default_rng(seed)
    val, x, stationary = _multistart_minimize(fun, _random_starts(grid, rng, restarts), 1e-6)
    if not stationary:
        raise NonConvergedError("Sobolev quotient minimization did not reach stationarity")
    S = math.exp(val)
    if return_minimizer:
        return S, DiscreteFunction(np.abs(x), grid)
    return S


def normalize_constraint(u, g, exponent):
    """Rescale u so that the integral of g|u|^exponent equals 1 (must be positive)."""
    G = weighted_integral(u, g, exponent)
    if G <= 0:
        raise InfeasibleError("constraint integral is not positive for this direction")
    return u.scaled(G ** (-1.0 / exponent))


def estimate_capital_lambda(grid, g, p=None, restarts=DEFAULT_RESTARTS, seed=DEFAULT_SEED,
                            return_minimizer=False):
    """Estimate inf { ||u||^(2p) : integral g|u|^(2p) = 1 }.

    Equivalent to the reciprocal of sup G(u)/||u||^(2p) over directions with
    positive constraint integral; the sup form has no feasibility boundary so
    L-BFGS can run unconstrained.
    """
    p = grid.p if p is None else p
    if not math.isclose(p, grid.p):
        raise ValueError("p must match the grid exponent")
    dg = g.on(grid) if isinstance(g, WeightSpec) else g
    e = 2.0 * p
    w = dg.cell_integrals
    if not np.any(w > 0):
        raise InfeasibleError("g has no positive part on the grid; constraint set is empty")

    def fun(v):
        A = seminorm_p_values(v, grid)
        G = float(np.dot(w, np.abs(v) ** e))
        ratio = G / A**2
        grad = e * w * signed_power(v, e) / A**2 - 2.0 * G / A**3 * seminorm_p_gradient(v, grid)
        return -ratio, -grad

    rng = np.random.default_rng(seed)
    starts = []
    for v in _random_starts(grid, rng, restarts):
        # bias the start toward where g is positive
        starts.append(v * (np.maximum(dg.node_values, 0) + 1e-3))
    val, x, stationary = _multistart_minimize(fun, starts, 1e-6, relative=True)
    best_ratio = -val
    if best_ratio <= 0:
        raise InfeasibleError("no sampled direction has a positive constraint integral")
    if not stationary:
        raise NonConvergedError("constrained minimization for Lambda did not reach stationarity")
    Lam = 1.0 / best_ratio
    if return_minimizer:
        u = normalize_constraint(DiscreteFunction(np.abs(x), grid), dg, e)
        return Lam, u
    return Lam
