"""Dense equality-constrained SQP solver with simple bounds.

Problems have the form::

    minimize f(x)  subject to  c(x) = 0,  lower <= x <= upper

The Lagrangian convention is ``L = f + lam @ c``; every multiplier returned by
:func:`solve` and consumed by :func:`kkt_residuals` follows it.

Derivatives default to central finite differences.  A problem may supply a
boolean Jacobian sparsity pattern, in which case columns that never share a
row are perturbed together (Curtis-Powell-Reid compression).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, TextIO

import numpy as np
import scipy.linalg

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITER = "max_iter"
NUMERICAL_FAILURE = "numerical_failure"


class NonFiniteError(FloatingPointError):
    """A function returned NaN or inf during differencing."""


@dataclass(eq=False)
class NLPProblem:
    objective: Callable[[np.ndarray], float]
    eq_constraints: Callable[[np.ndarray], np.ndarray]
    n_vars: int
    n_cons: int
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    jac_sparsity: np.ndarray | None = None

    def __post_init__(self):
        if self.n_cons > self.n_vars:
            raise ValueError("more equality constraints than variables")
        self.lower = (
            np.full(self.n_vars, -np.inf) if self.lower is None else np.asarray(self.lower, float)
        )
        self.upper = (
            np.full(self.n_vars, np.inf) if self.upper is None else np.asarray(self.upper, float)
        )
        if self.lower.shape != (self.n_vars,) or self.upper.shape != (self.n_vars,):
            raise ValueError("bound vectors must have length n_vars")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        self._groups = None
        if self.jac_sparsity is not None:
            self.jac_sparsity = np.asarray(self.jac_sparsity, dtype=bool)
            if self.jac_sparsity.shape != (self.n_cons, self.n_vars):
                raise ValueError("jac_sparsity must have shape (n_cons, n_vars)")
            self._groups = column_groups(self.jac_sparsity)

    def constraint_jacobian(self, x, step=1e-6) -> np.ndarray:
        if self.jacobian is not None:
            return np.asarray(self.jacobian(x), dtype=float)
        if self._groups is not None:
            return finite_difference_jacobian(
                self.eq_constraints, x, step, groups=self._groups, sparsity=self.jac_sparsity
            )
        return finite_difference_jacobian(self.eq_constraints, x, step)

    def objective_gradient(self, x, step=1e-6) -> np.ndarray:
        return finite_difference_jacobian(lambda v: np.atleast_1d(self.objective(v)), x, step)[0]


@dataclass
class SolverOptions:
    tol_constraint: float = 1e-8
    tol_stationarity: float = 1e-6
    max_major_iterations: int = 500
    fd_step: float = 1e-6
    penalty_init: float = 1.0
    penalty_margin: float = 1.0
    max_backtracks: int = 30
    restoration_iterations: int = 200
    verbosity: int = 0
    log_stream: TextIO | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("tol_constraint", "tol_stationarity", "fd_step", "penalty_init"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_major_iterations < 1:
            raise ValueError("max_major_iterations must be at least 1")


@dataclass
class SolverResult:
    x_star: np.ndarray
    multipliers: np.ndarray
    status: str
    message: str
    constraint_norm: float
    stationarity_norm: float
    iterations: int
    n_fev: int
    n_jev: int

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    @property
    def kkt(self) -> tuple[float, float]:
        return self.constraint_norm, self.stationarity_norm


def column_groups(sparsity) -> list[np.ndarray]:
    """Greedy partition of columns into structurally orthogonal groups."""
    sparsity = np.asarray(sparsity, dtype=bool)
    groups: list[list[int]] = []
    rows_used: list[np.ndarray] = []
    # densest columns first keeps the greedy coloring small
    order = np.argsort(-sparsity.sum(axis=0), kind="stable")
    for j in order:
        col = sparsity[:, j]
        for g, used in enumerate(rows_used):
            if not np.any(used & col):
                groups[g].append(j)
                used |= col
                break
        else:
            groups.append([j])
            rows_used.append(col.copy())
    return [np.array(sorted(g)) for g in groups]


def finite_difference_jacobian(f, x, step=1e-6, groups=None, sparsity=None) -> np.ndarray:
    """Central-difference Jacobian of a vector function.

    Column ``j`` is ``(f(x + step e_j) - f(x - step e_j)) / (2 step)``.  With
    ``groups`` and ``sparsity`` the columns of each group are perturbed at once
    and unpacked through the sparsity pattern.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    n = x.size
    if groups is None:
        groups = [np.array([j]) for j in range(n)]
        sparsity = None
    jac = None
    for group in groups:
        e = np.zeros(n)
        e[group] = step
        fp = np.asarray(f(x + e), dtype=float)
        fm = np.asarray(f(x - e), dtype=float)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise NonFiniteError(f"non-finite function value perturbing column(s) {group.tolist()}")
        d = (fp - fm) / (2.0 * step)
        if jac is None:
            jac = np.zeros((d.size, n))
        if sparsity is None:
            jac[:, group[0]] = d
        else:
            for j in group:
                rows = sparsity[:, j]
                jac[rows, j] = d[rows]
    return jac


def _at_bounds(x, lower, upper):
    tol = 1e-10 * (1.0 + np.abs(x))
    return x - lower <= tol, upper - x <= tol


def _project(r, x, lower, upper):
    at_lo, at_hi = _at_bounds(x, lower, upper)
    r = r.copy()
    r[at_lo & (r > 0)] = 0.0
    r[at_hi & (r < 0)] = 0.0
    return r


def kkt_residuals(p: NLPProblem, x, multipliers, step=1e-6) -> tuple[float, float]:
    """Constraint violation and projected Lagrangian-gradient norms.

    Stationarity is measured on ``grad f + J.T @ multipliers``; components of
    variables held at a bound whose gradient points out of the box are dropped.
    """
    x = np.asarray(x, dtype=float)
    multipliers = np.asarray(multipliers, dtype=float)
    if multipliers.shape != (p.n_cons,):
        raise ValueError("one multiplier per equality constraint expected")
    c = np.asarray(p.eq_constraints(x), dtype=float)
    cnorm = float(np.max(np.abs(c))) if c.size else 0.0
    g = p.objective_gradient(x, step)
    r = g
    if p.n_cons:
        r = g + p.constraint_jacobian(x, step).T @ multipliers
    r = _project(r, x, p.lower, p.upper)
    return cnorm, float(np.max(np.abs(r))) if r.size else 0.0


class _Evaluator:
    def __init__(self, problem: NLPProblem, step: float):
        self.p = problem
        self.step = step
        self.n_fev = 0
        self.n_jev = 0

    def values(self, x):
        self.n_fev += 1
        f = float(self.p.objective(x))
        c = np.asarray(self.p.eq_constraints(x), dtype=float)
        if not np.isfinite(f) or not np.all(np.isfinite(c)):
            raise NonFiniteError("non-finite objective or constraint value")
        return f, c

    def derivatives(self, x):
        self.n_jev += 1
        g = self.p.objective_gradient(x, self.step)
        jac = self.p.constraint_jacobian(x, self.step)
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(jac))):
            raise NonFiniteError("non-finite derivative")
        return g, jac


def _try_values(ev, x):
    try:
        return ev.values(x)
    except (NonFiniteError, ArithmeticError, ValueError):
        return None


def _solve_kkt(B, J, g, c, free):
    """Equality-QP step on the free variables; pinned variables do not move."""
    nf = int(free.sum())
    m = J.shape[0]
    Bf = B[np.ix_(free, free)]
    Jf = J[:, free]
    K = np.zeros((nf + m, nf + m))
    K[:nf, :nf] = Bf
    K[:nf, nf:] = Jf.T
    K[nf:, :nf] = Jf
    rhs = -np.concatenate([g[free], c])
    try:
        sol = scipy.linalg.solve(K, rhs, check_finite=False)
    except (scipy.linalg.LinAlgError, ValueError):
        sol = None
    if sol is None or not np.all(np.isfinite(sol)):
        sol = scipy.linalg.lstsq(K, rhs, check_finite=False)[0]
    p = np.zeros(g.size)
    p[free] = sol[:nf]
    return p, sol[nf:]


def _max_step(x, p, lower, upper):
    alpha = 1.0
    blocking = -1
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = np.where(p < 0, (lower - x) / p, np.inf)
        hi = np.where(p > 0, (upper - x) / p, np.inf)
    ratio = np.minimum(lo, hi)
    j = int(np.argmin(ratio))
    if ratio[j] < alpha:
        alpha = max(float(ratio[j]), 0.0)
        blocking = j
    return alpha, blocking


def restore_feasibility(p: NLPProblem, x, step=1e-6, tol=1e-10, max_iter=200):
    """Drive ``||c(x)||`` toward zero with minimum-norm Levenberg-Marquardt steps.

    Each step solves ``(J J.T + mu I) w = c`` and moves by ``-J.T w`` (clipped
    to the bounds); ``mu`` shrinks after a successful decrease and grows after
    a rejected one.  Returns the best point found and its residual.
    """
    x = np.clip(np.asarray(x, dtype=float), p.lower, p.upper)
    c = np.asarray(p.eq_constraints(x), dtype=float)
    mu = 1e-3
    for _ in range(max_iter):
        if np.max(np.abs(c)) <= tol:
            break
        J = p.constraint_jacobian(x, step)
        A = J @ J.T
        eye = np.eye(A.shape[0])
        improved = False
        while mu < 1e10:
            try:
                w = scipy.linalg.solve(A + mu * eye, c, assume_a="pos", check_finite=False)
            except (scipy.linalg.LinAlgError, ValueError):
                mu *= 10.0
                continue
            trial = np.clip(x - J.T @ w, p.lower, p.upper)
            try:
                ct = np.asarray(p.eq_constraints(trial), dtype=float)
            except (ArithmeticError, ValueError):
                ct = None
            if ct is not None and np.all(np.isfinite(ct)) and ct @ ct < (1.0 - 1e-4) * (c @ c):
                x, c = trial, ct
                mu = max(mu / 3.0, 1e-12)
                improved = True
                break
            mu *= 4.0
        if not improved:
            break
    return x, c


def _multiplier_estimate(g, J, free):
    if J.shape[0] == 0:
        return np.zeros(0)
    return -scipy.linalg.lstsq(J[:, free].T, g[free], check_finite=False)[0]


def solve(p: NLPProblem, x0, opts: SolverOptions | None = None) -> SolverResult:
    """Minimize ``p.objective`` subject to ``p.eq_constraints(x) = 0`` and bounds.

    Sequential quadratic programming: each major iteration solves the
    equality-constrained QP built from a damped BFGS approximation of the
    Lagrangian Hessian, then backtracks on the l1 merit
    ``f + rho * ||c||_1`` with a second-order correction on the first trial.
    Variables sitting on a bound with an outward-pointing Lagrangian gradient
    are held fixed for the QP.
    """
    opts = opts or SolverOptions()
    x = np.clip(np.asarray(x0, dtype=float).copy(), p.lower, p.upper)
    if x.shape != (p.n_vars,):
        raise ValueError("x0 has the wrong length")
    ev = _Evaluator(p, opts.fd_step)
    stream = opts.log_stream
    if stream is not None:
        stream.write("iter merit constraint_norm stationarity step_length\n")

    def fail(msg, x, lam, it):
        cnorm, snorm = np.nan, np.nan
        try:
            cnorm, snorm = kkt_residuals(p, x, lam, opts.fd_step)
        except (NonFiniteError, ArithmeticError, ValueError):
            pass
        return SolverResult(x, lam, NUMERICAL_FAILURE, msg, cnorm, snorm, it, ev.n_fev, ev.n_jev)

    n, m = p.n_vars, p.n_cons
    lam = np.zeros(m)
    try:
        if m and opts.restoration_iterations:
            x, _ = restore_feasibility(
                p, x, opts.fd_step, 0.1 * opts.tol_constraint, opts.restoration_iterations
            )
        f, c = ev.values(x)
        g, J = ev.derivatives(x)
    except (NonFiniteError, ArithmeticError, ValueError) as exc:
        return fail(f"evaluation failed at the starting point: {exc}", x, lam, 0)

    B = np.eye(n)
    scaled = False
    rho = opts.penalty_init
    free = np.ones(n, dtype=bool)
    lam = _multiplier_estimate(g, J, free)
    status, message = MAX_ITER, "iteration limit reached"
    it = 0
    for it in range(1, opts.max_major_iterations + 1):
        at_lo, at_hi = _at_bounds(x, p.lower, p.upper)
        grad_l = g + J.T @ lam
        pinned = (at_lo & (grad_l > 0)) | (at_hi & (grad_l < 0))
        free = ~pinned
        cnorm = float(np.max(np.abs(c))) if m else 0.0
        snorm = float(np.max(np.abs(_project(grad_l, x, p.lower, p.upper))))
        if cnorm <= opts.tol_constraint and snorm <= opts.tol_stationarity:
            status, message = CONVERGED, "KKT tolerances satisfied"
            it -= 1
            break

        step, lam_qp = _solve_kkt(B, J, g, c, free)
        alpha_max, _ = _max_step(x, step, p.lower, p.upper)
        rho = max(rho, float(np.max(np.abs(lam_qp), initial=0.0)) + opts.penalty_margin)
        merit = f + rho * np.sum(np.abs(c))
        slope = g @ step - rho * np.sum(np.abs(c))
        if slope > 0:
            slope = -abs(g @ step) - rho * np.sum(np.abs(c))

        alpha = alpha_max
        accepted = None
        for k in range(opts.max_backtracks):
            trial = np.clip(x + alpha * step, p.lower, p.upper)
            vals = _try_values(ev, trial)
            if vals is not None:
                ft, ct = vals
                mt = ft + rho * np.sum(np.abs(ct))
                if mt <= merit + 1e-4 * alpha * slope:
                    accepted = trial, ft, ct
                    break
                if k == 0 and alpha == 1.0 and m:
                    # second-order correction against the Maratos effect
                    corr = -scipy.linalg.lstsq(J[:, free], ct, check_finite=False)[0]
                    soc = trial.copy()
                    soc[free] += corr
                    soc = np.clip(soc, p.lower, p.upper)
                    vals = _try_values(ev, soc)
                    if vals is not None:
                        fs, cs = vals
                        if fs + rho * np.sum(np.abs(cs)) <= merit + 1e-4 * slope:
                            accepted = soc, fs, cs
                            break
            alpha *= 0.5
        if accepted is None:
            status = NUMERICAL_FAILURE
            message = "line search failed to reduce the merit function"
            break

        x_new, f_new, c_new = accepted
        try:
            g_new, J_new = ev.derivatives(x_new)
        except (NonFiniteError, ArithmeticError, ValueError) as exc:
            return fail(f"derivative evaluation failed: {exc}", x_new, lam_qp, it)

        s = x_new - x
        y = (g_new + J_new.T @ lam_qp) - (g + J.T @ lam_qp)
        sy = float(s @ y)
        if not scaled and sy > 0:
            B *= (y @ y) / sy
            scaled = True
        Bs = B @ s
        sBs = float(s @ Bs)
        if sBs > 1e-300:
            # Powell damping keeps B positive definite
            theta = 1.0 if sy >= 0.2 * sBs else 0.8 * sBs / (sBs - sy)
            r = theta * y + (1.0 - theta) * Bs
            B += np.outer(r, r) / (s @ r) - np.outer(Bs, Bs) / sBs

        if stream is not None:
            stream.write(f"{it} {merit:.12e} {cnorm:.6e} {snorm:.6e} {alpha:.6e}\n")
        if opts.verbosity:
            log.info("iter %d merit %.6e |c| %.3e |grad L| %.3e alpha %.3e", it, merit, cnorm, snorm, alpha)

        x, f, c, g, J, lam = x_new, f_new, c_new, g_new, J_new, lam_qp

    cnorm, snorm = kkt_residuals(p, x, lam, opts.fd_step)
    if status == CONVERGED and not (cnorm <= opts.tol_constraint and snorm <= opts.tol_stationarity):
        status, message = NUMERICAL_FAILURE, "KKT re-check failed after convergence"
    return SolverResult(x, lam, status, message, cnorm, snorm, it, ev.n_fev, ev.n_jev)
