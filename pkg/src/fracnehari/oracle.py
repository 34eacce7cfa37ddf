"""Brute-force branch minima on micro-grids by scanning the direction sphere.

Fiber roots are found here by vectorized bisection over all sampled directions
at once, independently of the scalar root finder used by the solver.
"""

import numpy as np

from .errors import WrongRegimeError
from .functional import Regime

BISECT_STEPS = 200


def sphere_directions(n, resolution):
    """Spherical-coordinate grid on the unit sphere in R^n (n >= 2)."""
    grids = [np.linspace(0.0, np.pi, resolution)] * (n - 2)
    grids.append(np.linspace(0.0, 2 * np.pi, 2 * resolution, endpoint=False))
    mesh = np.meshgrid(*grids, indexing="ij")
    angles = np.stack([m.ravel() for m in mesh], axis=1)
    return angles_to_points(angles), angles


def angles_to_points(angles):
    m, k = angles.shape
    pts = np.ones((m, k + 1))
    sin_prod = np.ones(m)
    for j in range(k):
        pts[:, j] = sin_prod * np.cos(angles[:, j])
        sin_prod = sin_prod * np.sin(angles[:, j])
    pts[:, k] = sin_prod
    return pts


def _pieces(V, grid, params):
    """A, F, G for each row of V."""
    p, q, r = params.p, params.q, params.r
    D = np.abs(V[:, :, None] - V[:, None, :])
    A = np.einsum("mij,ij->m", D**p, grid.kernel) + 2.0 * (np.abs(V) ** p) @ grid.tails
    aV = np.abs(V)
    F = aV**q @ params.f.on(grid).cell_integrals
    G = aV**r @ params.g.on(grid).cell_integrals
    return A, F, G


def _bisect(fn, lo, hi, active):
    """Vectorized bisection for a sign change fn(lo) * fn(hi) < 0 on active rows."""
    lo, hi = lo.copy(), hi.copy()
    f_lo = fn(lo)
    for _ in range(BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        f_mid = fn(mid)
        left = np.sign(f_mid) == np.sign(f_lo)
        lo = np.where(active & left, mid, lo)
        f_lo = np.where(active & left, f_mid, f_lo)
        hi = np.where(active & ~left, mid, hi)
    return 0.5 * (lo + hi)


def _grow(fn, start, active, want_negative=True):
    """Double ``start`` until fn < 0 on the active rows (or give up)."""
    x = start.copy()
    for _ in range(400):
        f = fn(x)
        todo = active & (f >= 0) if want_negative else active & (f <= 0)
        if not np.any(todo):
            break
        x = np.where(todo, 2.0 * x, x)
    return x


def fiber_energies(A, F, G, params):
    """Energy at the PLUS and MINUS fiber roots per direction (inf when absent)."""
    a, b, p, q, r, lam = params.a, params.b, params.p, params.q, params.r, params.lam

    def psi(t):
        return a * t ** (p - q) * A + b * t ** (2 * p - q) * A**2 - t ** (r - q) * G

    def h(t):
        return a * (p - q) * A + b * (2 * p - q) * A**2 * t**p - (r - q) * G * t ** (r - p)

    def J(t):
        T = t**p * A
        return (a * T + 0.5 * b * T * T) / p - lam * t**q * F / q - t**r * G / r

    m = A.shape[0]
    start = A ** (-1.0 / p)
    # psi has an interior maximum exactly when h eventually turns negative
    if np.isclose(r, 2 * p, rtol=1e-12):
        has_max = G > b * A**2
    else:
        has_max = G > 0
    hi = _grow(h, start, has_max)
    t_max = _bisect(h, np.zeros(m), hi, has_max)
    psi_max = np.where(has_max, psi(t_max), np.inf)
    line = lam * F

    def resid(t):
        return psi(t) - line

    plus_ok = (F > 0) & (line < psi_max)
    minus_ok = has_max & (line < psi_max)
    up = np.where(has_max, t_max, _grow(lambda t: -resid(t), start, plus_ok & ~has_max))
    t_plus = _bisect(resid, np.zeros(m), up, plus_ok)
    hi2 = _grow(resid, np.where(has_max, t_max, start), minus_ok)
    t_minus = _bisect(resid, np.where(has_max, t_max, 0.0), hi2, minus_ok)
    with np.errstate(all="ignore"):
        e_plus = np.where(plus_ok, J(t_plus), np.inf)
        e_minus = np.where(minus_ok, J(t_minus), np.inf)
    return e_plus, e_minus


def scan_directions(params, grid, directions):
    """Branch energies for each direction (rows of ``directions``)."""
    if params.regime is Regime.R_LT_2P:
        raise WrongRegimeError("the direction-scan oracle covers r >= 2p only")
    V = np.asarray(directions, dtype=float)
    A, F, G = _pieces(V, grid, params)
    return fiber_energies(A, F, G, params)


def _zoom(params, grid, angles, energies, branch, keep, rounds, shrink, width):
    """Refine the best angle tuples on shrinking local grids."""
    k = angles.shape[1]
    order = np.argsort(energies, kind="stable")[:keep]
    best_angles, best_e = angles[order], energies[order]
    delta = width
    offs = np.linspace(-1.0, 1.0, 9)
    local = np.stack([m.ravel() for m in np.meshgrid(*([offs] * k), indexing="ij")], axis=1)
    for _ in range(rounds):
        cand = (best_angles[:, None, :] + delta * local[None, :, :]).reshape(-1, k)
        V = angles_to_points(cand)
        e = scan_directions(params, grid, V)[branch]
        allA = np.concatenate([best_angles, cand])
        allE = np.concatenate([best_e, e])
        order = np.argsort(allE, kind="stable")[:keep]
        best_angles, best_e = allA[order], allE[order]
        delta /= shrink
    return float(best_e[0]), best_angles[0]


def brute_force_oracle(params, grid, resolution=48, keep=8, rounds=20, shrink=4.0):
    """Global branch minima (theta_plus, theta_minus) by sphere scan plus zoom.

    Returns ``inf`` for a branch with no admissible direction.
    """
    if grid.n_nodes > 5:
        raise ValueError("the brute-force oracle is meant for at most 5 nodes")
    V, angles = sphere_directions(grid.n_nodes, resolution)
    e_plus, e_minus = scan_directions(params, grid, V)
    width = np.pi / (resolution - 1)
    out = []
    for branch, e in enumerate((e_plus, e_minus)):
        if not np.any(np.isfinite(e)):
            out.append(np.inf)
            continue
        val, _ = _zoom(params, grid, angles, e, branch, keep, rounds, shrink, width)
        out.append(val)
    return tuple(out)
