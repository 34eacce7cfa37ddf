"""
Branch minimization on the Nehari set.

Each unit direction ``v`` is mapped to its fiber root ``t_b(v)`` on the requested
branch, and the reduced energy ``j(v) = J(t_b(v) v)`` is minimized by projected
steepest descent on the sphere. Because ``t_b(v) v`` is stationary along its own
fiber, the gradient of ``j`` is ``t * grad J(t v)``; a zero of it is a critical
point of ``J`` itself, so the stopping test uses the weak residual directly.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .domain import (
    DEFAULT_RESTARTS,
    DEFAULT_SEED,
    DiscreteFunction,
    seminorm_p_values,
    x0_norm,
)
from .errors import (
    EnergyIncreasedError,
    InvariantViolationError,
    NehariError,
    NoAdmissibleStartError,
    NoRootError,
    NotAdmissibleError,
    ThresholdExceededError,
)
from .fiber import (
    Branch,
    FiberMap,
    SignClass,
    apriori_bound_check,
    classify,
    find_fiber_roots,
)
from .functional import (
    Regime,
    TruncationParams,
    energy_from_pieces,
    energy_pieces,
    gradient_values,
)
from .thresholds import compute_thresholds, critical_threshold

PROJ_RTOL = 1e-9
ARMIJO_C = 1e-4
MAX_STEP = 0.5
ACCEPT_RESIDUAL = 1e-6
ROUNDOFF_FACTOR = 1e-15


@dataclass
class SolverOptions:
    restarts: int = DEFAULT_RESTARTS
    seed: int = DEFAULT_SEED
    tol: float = 1e-8
    max_iter: int = 10_000
    workers: int = 1
    k: float | None = None
    theta: float | None = None
    accept_residual: float = ACCEPT_RESIDUAL
    # sampling attempts per requested restart before giving up on admissible starts
    start_attempts: int = 50


@dataclass
class NehariPoint:
    u: DiscreteFunction
    branch: Branch
    energy: float
    fiber_residual: float
    fiber_scale: float
    second_deriv: float
    weak_residual: float
    t: float = 1.0
    converged: bool = True
    iterations: int = 0
    restart_index: int = -1
    trace: list = field(default_factory=list, repr=False)

    @property
    def norm_p(self):
        return seminorm_p_values(self.u.values, self.u.grid)

    @property
    def relative_fiber_residual(self):
        return self.fiber_residual / self.fiber_scale

    def check(self, proj_rtol=PROJ_RTOL):
        """Raise InvariantViolationError unless the point is a valid branch member."""
        problems = []
        if self.u.is_zero():
            problems.append("u is identically zero")
        if not self.relative_fiber_residual < proj_rtol:
            problems.append(f"fiber residual {self.relative_fiber_residual:.3e} >= {proj_rtol:g}")
        want = 1.0 if self.branch is Branch.PLUS else -1.0
        if np.sign(self.second_deriv) != want:
            problems.append(f"phi'' = {self.second_deriv!r} has the wrong sign for {self.branch.value}")
        if problems:
            raise InvariantViolationError("; ".join(problems))
        return self


def _make_point(w, branch, params, trunc, t=1.0, **extra):
    fm = FiberMap.from_function(w, params, None if trunc is None else trunc.k)
    grad = gradient_values(w.values, w.grid, params, trunc)
    return NehariPoint(
        u=w,
        branch=Branch.PLUS if branch is Branch.STAR else branch,
        energy=fm.energy(1.0),
        fiber_residual=abs(fm.phi1()),
        fiber_scale=fm.scale(1.0),
        second_deriv=fm.phi2(),
        weak_residual=float(np.max(np.abs(grad))),
        t=t,
        **extra,
    )


def _select_root(fm, roots, branch):
    """Fiber scale on the requested branch, or None."""
    if branch is Branch.STAR:
        return roots[0].t if len(roots) == 1 and roots[0].branch is Branch.PLUS else None
    cands = [r.t for r in roots if r.branch is branch]
    if not cands:
        return None
    if branch is Branch.PLUS:
        return min(cands, key=fm.energy)
    return max(cands, key=fm.energy)


def project_to_nehari(u, branch, params, trunc=None, threshold=None):
    """Scale ``u`` onto the requested branch of the Nehari set.

    PLUS takes the local-minimum root with the lowest energy, MINUS the
    local-maximum root with the highest energy, STAR the single root of an
    H+ G- direction.
    """
    branch = Branch(branch)
    rep = classify(u, params)
    if branch is Branch.STAR and not (rep.h_class is SignClass.POS and rep.g_class is SignClass.NEG):
        raise NotAdmissibleError(
            f"STAR projection needs an H+ G- direction (got H{rep.h_class.value} G{rep.g_class.value})"
        )
    rep = find_fiber_roots(u, params, trunc, threshold)
    fm = FiberMap.from_function(u, params, None if trunc is None else trunc.k)
    t = _select_root(fm, rep.roots, branch)
    if t is None:
        raise NotAdmissibleError(
            f"direction (H{rep.h_class.value} G{rep.g_class.value}) has no {branch.value} fiber root"
        )
    return _make_point(u.scaled(t), branch, params, trunc, t=t)


def nonneg_projectize(u):
    """Replace u by |u|; the seminorm can only decrease."""
    v = DiscreteFunction(np.abs(u.values), u.grid)
    before = seminorm_p_values(u.values, u.grid)
    after = seminorm_p_values(v.values, v.grid)
    if after > before * (1.0 + 1e-12) + 1e-300:
        raise EnergyIncreasedError(f"seminorm grew from {before!r} to {after!r} under |u|")
    return v


class _Reduced:
    """Reduced energy j(v) = J(t_b(v) v) for one branch."""

    def __init__(self, grid, params, branch, trunc):
        self.grid = grid
        self.params = params
        self.branch = branch
        self.trunc = trunc
        self.k = None if trunc is None else trunc.k
        self.wf = params.f.on(grid).cell_integrals
        self.wg = params.g.on(grid).cell_integrals

    def project(self, v):
        """(t, energy, A) or None when v has no root on the branch."""
        av = np.abs(v)
        A = seminorm_p_values(v, self.grid)
        if A <= 0:
            return None
        F = float(np.dot(self.wf, av**self.params.q))
        G = float(np.dot(self.wg, av**self.params.r))
        fm = FiberMap(A, F, G, self.params, self.k)
        try:
            roots = fm.roots()
        except NehariError:
            return None
        t = _select_root(fm, roots, self.branch)
        if t is None:
            return None
        return t, fm.energy(t), A * t**self.params.p

    def gradient(self, v, t):
        """(reduced gradient, weak residual, roundoff floor for the residual)."""
        w = t * v
        g_w = gradient_values(w, self.grid, self.params, self.trunc)
        P = self.params
        aw = np.abs(w)
        A = seminorm_p_values(w, self.grid)
        Mv = P.a + P.b * (A if self.k is None else min(A, self.k))
        # size of the largest term in any component; the residual cannot drop
        # much below machine precision times this
        d = np.abs(w[:, None] - w[None, :])
        semi = 2.0 * P.p * (np.sum(d ** (P.p - 1) * self.grid.kernel, axis=1)
                            + aw ** (P.p - 1) * self.grid.tails)
        size = (
            Mv * semi / P.p
            + P.lam * np.abs(self.wf) * aw ** (P.q - 1)
            + np.abs(self.wg) * aw ** (P.r - 1)
        )
        floor = ROUNDOFF_FACTOR * float(np.max(size))
        return t * g_w, float(np.max(np.abs(g_w))), floor


def _descend(red, v0, options, restart_index):
    """Projected steepest descent with BB steps and Armijo backtracking."""
    v = v0 / np.linalg.norm(v0)
    pr = red.project(v)
    if pr is None:
        return None
    t, E, Aw = pr
    g, res, floor = red.gradient(v, t)
    trace = [(E, Aw)]
    alpha = None
    prev = None
    converged = res < max(options.tol, floor)
    it = 0
    while not converged and it < options.max_iter:
        it += 1
        gnorm2 = float(np.dot(g, g))
        if alpha is None:
            alpha = 0.1 / math.sqrt(gnorm2)
        elif prev is not None:
            s_vec = v - prev[0]
            y_vec = g - prev[1]
            sy = float(np.dot(s_vec, y_vec))
            alpha = float(np.dot(s_vec, s_vec)) / sy if sy > 0 else 2.0 * alpha
        alpha = min(alpha, MAX_STEP / math.sqrt(gnorm2))
        accepted = False
        for _ in range(80):
            trial = v - alpha * g
            trial /= np.linalg.norm(trial)
            pr = red.project(trial)
            if pr is not None and pr[1] <= E - ARMIJO_C * alpha * gnorm2 + 1e-14 * (1 + abs(E)):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        prev = (v, g)
        v = trial
        t, E, Aw = pr
        g, res, floor = red.gradient(v, t)
        trace.append((E, Aw))
        converged = res < max(options.tol, floor)
    w = DiscreteFunction(t * v, red.grid)
    return w, t, converged, it, trace


def _run_restart(args):
    grid, params, branch, trunc, options, idx, v0 = args
    red = _Reduced(grid, params, branch, trunc)
    out = _descend(red, v0, options, idx)
    if out is None:
        return None
    w, t, converged, it, trace = out
    w = nonneg_projectize(w)
    try:
        pt = project_to_nehari(w, branch, params, trunc)
    except NehariError:
        return None
    pt.converged = converged
    pt.iterations = it
    pt.restart_index = idx
    pt.trace = trace
    return pt


def admissible_starts(grid, params, branch, trunc, restarts, seed, attempts=50):
    """Seeded random directions that admit a root on the branch.

    Directions in the degenerate classes H0 or G0 are skipped.
    """
    red = _Reduced(grid, params, branch, trunc)
    rng = np.random.default_rng(seed)
    xi = (grid.nodes - grid.left) / grid.measure
    candidates = [np.sin(np.pi * xi)]
    starts = []
    n_tried = 0
    while len(starts) < restarts and n_tried < attempts * restarts:
        v = candidates.pop() if candidates else np.abs(rng.standard_normal(grid.n_nodes))
        n_tried += 1
        u = DiscreteFunction(v, grid)
        rep = classify(u, params)
        if SignClass.ZERO in (rep.h_class, rep.g_class):
            continue
        if red.project(v) is not None:
            starts.append(v)
    if not starts:
        raise NoAdmissibleStartError(
            f"no sampled direction admits the {branch.value} branch after {n_tried} draws"
        )
    return starts


def _pick_best(points):
    """Lowest energy; near-ties go to the lower residual, then the earlier seed."""
    e_min = min(p.energy for p in points)
    tie = 1e-12 * (1.0 + abs(e_min))
    close = [p for p in points if p.energy <= e_min + tie]
    return min(close, key=lambda p: (p.weak_residual, p.restart_index))


def minimize_branch(branch, params, grid, options=None, trunc=None):
    """Minimize the energy over one branch of the Nehari set from several starts."""
    options = options or SolverOptions()
    branch = Branch(branch)
    starts = admissible_starts(grid, params, branch, trunc, options.restarts, options.seed,
                               options.start_attempts)
    jobs = [(grid, params, branch, trunc, options, i, v0) for i, v0 in enumerate(starts)]
    if options.workers > 1:
        with ProcessPoolExecutor(max_workers=options.workers) as ex:
            results = list(ex.map(_run_restart, jobs))
    else:
        results = [_run_restart(j) for j in jobs]
    points = [r for r in results if r is not None]
    if not points:
        raise NoAdmissibleStartError(f"every {branch.value} restart left the branch")
    return _pick_best(points)


@dataclass
class SolveReport:
    regime: Regime
    thresholds: object
    lam: float
    plus_solution: NehariPoint | None = None
    minus_solution: NehariPoint | None = None
    distinctness: float | None = None
    truncation: TruncationParams | None = None
    truncation_verdict: dict | None = None
    critical_diagnostic: dict | None = None
    seed: int = DEFAULT_SEED
    restarts: int = DEFAULT_RESTARTS
    flags: list = field(default_factory=list)

    @property
    def theta_plus(self):
        return None if self.plus_solution is None else self.plus_solution.energy

    @property
    def theta_minus(self):
        return None if self.minus_solution is None else self.minus_solution.energy

    def solutions(self):
        return [s for s in (self.plus_solution, self.minus_solution) if s is not None]


def _branch_plan(params, table):
    """Branches to attempt, the threshold governing them, and notes for the report."""
    lam = params.lam
    notes = []
    regime = table.regime
    if regime is Regime.SUBCRITICAL_HIGH:
        if lam >= table.lambda0:
            notes.append("THRESHOLD_EXCEEDED:lambda0")
        return [Branch.PLUS, Branch.MINUS], ("lambda0", table.lambda0), notes
    if regime is Regime.R_EQ_2P:
        if table.lambda_sup0 is None:
            notes.append("MINUS_SKIPPED:b>=1/Lambda so every Nehari point is a local minimum")
            return [Branch.PLUS], None, notes
        if lam >= table.lambda_sup0:
            notes.append("MINUS_SKIPPED:lambda>=lambda_sup0")
            return [Branch.PLUS], None, notes
        return [Branch.PLUS, Branch.MINUS], ("lambda_sup0", table.lambda_sup0), notes
    if regime is Regime.R_LT_2P:
        if lam >= table.lambda_hat0:
            notes.append("THRESHOLD_EXCEEDED:lambda_hat0")
        return [Branch.PLUS, Branch.MINUS], ("lambda_hat0", table.lambda_hat0), notes
    if lam >= table.lambda0:
        notes.append("THRESHOLD_EXCEEDED:lambda0")
    return [Branch.PLUS], ("lambda0", table.lambda0), notes


def solve(params, grid, options=None, table=None):
    """Run the regime-appropriate branch minimizations and assemble a report."""
    options = options or SolverOptions()
    params.check_grid(grid)
    if table is None:
        table = compute_thresholds(grid, params, theta=options.theta, k=options.k,
                                   restarts=options.restarts, seed=options.seed)
    report = SolveReport(regime=table.regime, thresholds=table, lam=params.lam,
                         seed=options.seed, restarts=options.restarts)
    report.flags.extend(table.flags)
    if params.regime is Regime.CRITICAL and params.m0_defaulted and "M0_DEFAULTED" not in report.flags:
        report.flags.append("M0_DEFAULTED")
    trunc = None
    if table.regime is Regime.R_LT_2P:
        trunc = TruncationParams(table.k).validate(params)
        report.truncation = trunc
    branches, _, notes = _branch_plan(params, table)
    report.flags.extend(notes)

    for br in branches:
        try:
            pt = minimize_branch(br, params, grid, options, trunc)
        except (NoAdmissibleStartError, NoRootError, NotAdmissibleError,
                ThresholdExceededError) as exc:
            report.flags.append(f"{exc.code}:{br.value}")
            continue
        if not pt.converged:
            report.flags.append(f"NONCONVERGED:{br.value}")
        if not pt.weak_residual < options.accept_residual:
            report.flags.append(f"RESIDUAL_ABOVE_TOL:{br.value}")
        if br is Branch.PLUS:
            report.plus_solution = pt
        else:
            report.minus_solution = pt

    if report.plus_solution is not None and report.minus_solution is not None:
        diff = report.plus_solution.u.values - report.minus_solution.u.values
        report.distinctness = x0_norm(DiscreteFunction(diff, grid))
    if report.plus_solution is not None and not report.theta_plus < 0:
        report.flags.append("THETA_PLUS_NONNEGATIVE")

    if trunc is not None:
        verdict = {"k": trunc.k}
        for pt in report.solutions():
            A = pt.norm_p
            pc = energy_pieces(pt.u, params)
            bound = apriori_bound_check(pt.u, params)
            verdict[pt.branch.value] = {
                "norm_p": A,
                "below_k": A <= trunc.k,
                "energy_gap": abs(energy_from_pieces(pc, params, trunc) - energy_from_pieces(pc, params)),
                "apriori_holds": bound.holds,
                "apriori_rhs": bound.rhs,
            }
            if A > trunc.k:
                report.flags.append(f"TRUNCATION_NOT_VERIFIED:{pt.branch.value}")
        report.truncation_verdict = verdict

    if table.regime is Regime.CRITICAL and report.plus_solution is not None:
        level = critical_threshold(params, table.S_r, table.l)
        achieved = report.plus_solution.energy
        report.critical_diagnostic = {
            "level": level,
            "energy": achieved,
            "certified": achieved < level,
        }
        if not achieved < level:
            report.flags.append("COMPACTNESS_NOT_CERTIFIED")
    return report
