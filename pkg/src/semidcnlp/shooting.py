"""Indirect single-shooting validator for the saddle-point boundary-value problem.

Both players steer by their pointwise Hamiltonian optimality laws, so the
16-dimensional state/costate system is closed once the 8 initial costates are
known.  Together with the free final time these 9 unknowns are fitted to the
9 terminal conditions by damped Newton iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .collocation import R_FLOOR, Trajectory
from .game import (
    GameDefinition,
    control_curvature,
    costate_rates,
    hamiltonian,
    leader_costate_derivative,
    optimal_evader_control,
    optimal_pursuer_control,
    player_derivative,
)

RK4 = "rk4"
ADAPTIVE_METHODS = ("RK45", "DOP853")


class PropagationError(RuntimeError):
    """Integration left the admissible region (orbital radius below the floor)."""

    def __init__(self, message, time):
        super().__init__(message)
        self.time = time


@dataclass(frozen=True)
class IntegratorOptions:
    method: str = "DOP853"
    rtol: float = 1e-10
    atol: float = 1e-12
    n_steps: int = 2000
    n_samples: int = 201
    r_floor: float = R_FLOOR

    def __post_init__(self):
        if self.method not in ADAPTIVE_METHODS + (RK4,):
            raise ValueError(f"unknown integrator {self.method!r}")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("integrator tolerances must be positive")
        if self.n_steps < 1 or self.n_samples < 2:
            raise ValueError("n_steps >= 1 and n_samples >= 2 required")


@dataclass
class ShootingResult:
    unknowns: np.ndarray
    trajectory: Trajectory | None
    converged: bool
    residual: np.ndarray
    iterations: int
    step_norms: list = field(default_factory=list)
    message: str = ""

    @property
    def t_f(self) -> float:
        return float(self.unknowns[8])


class _CoupledSystem:
    """Right-hand side of the closed 16-dimensional system.

    Holds the last regular control angles so a singular costate direction
    reuses them; one instance per integration.
    """

    def __init__(self, params):
        self.params = params
        self.last = [0.0, 0.0]

    def controls(self, y):
        dp = optimal_pursuer_control(y[8], y[9])
        de = optimal_evader_control(y[12], y[13])
        if dp.singular:
            delta_p = self.last[0]
        else:
            delta_p = self.last[0] = dp.delta
        if de.singular:
            delta_e = self.last[1]
        else:
            delta_e = self.last[1] = de.delta
        return delta_p, delta_e

    def __call__(self, t, y):
        p = self.params
        delta_p, delta_e = self.controls(y)
        return np.concatenate(
            [
                player_derivative(y[0:4], p.T_p, delta_p, p.mu),
                player_derivative(y[4:8], p.T_e, delta_e, p.mu),
                costate_rates(y[0:4], y[8:12], p.mu),
                costate_rates(y[4:8], y[12:16], p.mu),
            ]
        )


def _rk4(fun, y0, t_f, n_steps, r_floor):
    h = t_f / n_steps
    y = np.array(y0, dtype=float)
    ys = [y.copy()]
    for k in range(n_steps):
        t = k * h
        k1 = fun(t, y)
        k2 = fun(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = fun(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = fun(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if y[2] <= r_floor or y[6] <= r_floor:
            raise PropagationError("orbital radius fell below the floor", t + h)
        ys.append(y.copy())
    return np.linspace(0.0, t_f, n_steps + 1), np.array(ys).T


def _terminal_angles(y, mu):
    """Left limits of both control laws where the velocity costates vanish."""
    rp = costate_rates(y[0:4], y[8:12], mu)
    re = costate_rates(y[4:8], y[12:16], mu)
    return np.arctan2(rp[0], rp[1]), np.arctan2(-re[0], -re[1])


def _sampled_trajectory(t, Y, t_f, params) -> Trajectory:
    dp = optimal_pursuer_control(Y[8], Y[9])
    de = optimal_evader_control(Y[12], Y[13])
    delta_p = np.array(dp.delta, dtype=float)
    delta_e = np.array(de.delta, dtype=float)
    singular = np.asarray(dp.singular) | np.asarray(de.singular)
    # the follower's terminal costate condition makes the last sample singular
    singular[-1] = True
    delta_p[-1], delta_e[-1] = _terminal_angles(Y[:, -1], params.mu)
    for k in range(1, t.size - 1):
        if singular[k]:
            delta_p[k], delta_e[k] = delta_p[k - 1], delta_e[k - 1]
    ham = hamiltonian(Y[:8], Y[8:16], np.vstack([delta_p, delta_e]), params)
    diagnostics = {
        "hamiltonian": ham.tolist(),
        "second_order": control_curvature(Y[8], Y[9], delta_p, params.T_p).tolist(),
        "evader_second_order": (-control_curvature(Y[12], Y[13], delta_e, params.T_e)).tolist(),
    }
    return Trajectory(
        t=t,
        states=Y[:8].copy(),
        costates=Y[8:12].copy(),
        delta_p=delta_p,
        delta_e=delta_e,
        t_f=float(t_f),
        singular=singular,
        evader_costates=Y[12:16].copy(),
        diagnostics=diagnostics,
    )


def integrate_coupled_system(s0, lam0, t_f, g: GameDefinition, opts: IntegratorOptions | None = None):
    """Propagate states and both players' costates over ``[0, t_f]``.

    Returns ``(terminal_state, terminal_costate, trajectory)`` where the
    trajectory is sampled uniformly with ``opts.n_samples`` points (or at every
    step for the fixed-step method).
    """
    opts = opts or IntegratorOptions()
    s0 = np.asarray(s0.as_array() if hasattr(s0, "as_array") else s0, dtype=float)
    lam0 = np.asarray(lam0.as_array() if hasattr(lam0, "as_array") else lam0, dtype=float)
    if not t_f > 0:
        raise ValueError("t_f must be positive")
    y0 = np.concatenate([s0, lam0])
    if not np.all(np.isfinite(y0)):
        raise ValueError("initial data must be finite")
    rhs = _CoupledSystem(g.params)
    if opts.method == RK4:
        t, Y = _rk4(rhs, y0, t_f, opts.n_steps, opts.r_floor)
    else:

        def low_p(t, y):
            return y[2] - opts.r_floor

        def low_e(t, y):
            return y[6] - opts.r_floor

        low_p.terminal = low_e.terminal = True
        sol = solve_ivp(
            rhs,
            (0.0, t_f),
            y0,
            method=opts.method,
            rtol=opts.rtol,
            atol=opts.atol,
            dense_output=True,
            events=(low_p, low_e),
        )
        if sol.status == 1:
            raise PropagationError("orbital radius fell below the floor", float(sol.t[-1]))
        if sol.status != 0:
            raise PropagationError(f"integrator failed: {sol.message}", float(sol.t[-1]))
        t = np.linspace(0.0, t_f, opts.n_samples)
        Y = sol.sol(t)
        Y[:, -1] = sol.y[:, -1]
    traj = _sampled_trajectory(t, Y, t_f, g.params)
    return Y[:8, -1].copy(), Y[8:16, -1].copy(), traj


def _terminal_residual(xf, lamf):
    lp, le = lamf[:4], lamf[4:]
    return np.array(
        [
            xf[2] - xf[6],
            xf[3] - xf[7],
            lp[0],
            lp[1],
            le[0],
            le[1],
            le[2] + lp[2],
            le[3] + lp[3],
            1.0 + lp[2] * (xf[0] - xf[4]) + lp[3] * (xf[1] / xf[2] - xf[5] / xf[6]),
        ]
    )


def tpbvp_residual(u, g: GameDefinition, opts: IntegratorOptions | None = None) -> np.ndarray:
    """Nine terminal conditions for unknowns ``u = (lam_p(0), lam_e(0), t_f)``.

    Order: capture (2); pursuer velocity costates (2); evader velocity
    costates (2); radial and angular costate sums (2); transversality (1).
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (9,) or not np.all(np.isfinite(u)):
        raise ValueError("shooting unknowns must be 9 finite values")
    xf, lamf, _ = integrate_coupled_system(g.initial_state, u[:8], u[8], g, _terminal_only(opts))
    return _terminal_residual(xf, lamf)


def _terminal_only(opts):
    opts = opts or IntegratorOptions()
    if opts.method == RK4:
        return opts
    return IntegratorOptions(opts.method, opts.rtol, opts.atol, opts.n_steps, 2, opts.r_floor)


def _jacobian(g, u, r0, opts, rel_step):
    J = np.empty((9, 9))
    for j in range(9):
        h = rel_step * max(1.0, abs(u[j]))
        up, um = u.copy(), u.copy()
        up[j] += h
        um[j] -= h
        J[:, j] = (tpbvp_residual(up, g, opts) - tpbvp_residual(um, g, opts)) / (2.0 * h)
    return J


def solve_tpbvp(
    u0,
    g: GameDefinition,
    opts: IntegratorOptions | None = None,
    tol: float = 1e-10,
    max_iter: int = 50,
    fd_step: float = 1e-7,
    max_halvings: int = 30,
) -> ShootingResult:
    """Damped Newton iteration on :func:`tpbvp_residual`.

    The Jacobian is a central difference with relative step ``fd_step``.  The
    Newton step is halved until the residual 2-norm decreases.  Failures
    (singular Jacobian, no decrease, propagation error) are reported through
    ``converged=False`` with the last iterate.
    """
    opts = opts or IntegratorOptions()
    u = np.asarray(u0, dtype=float).copy()
    try:
        r = tpbvp_residual(u, g, opts)
    except PropagationError as exc:
        return ShootingResult(u, None, False, np.full(9, np.nan), 0, [], f"initial propagation failed: {exc}")
    steps: list[float] = []
    message = "iteration limit reached"
    it = 0
    for it in range(max_iter + 1):
        if np.max(np.abs(r)) <= tol:
            message = "converged"
            break
        if it == max_iter:
            break
        try:
            J = _jacobian(g, u, r, opts, fd_step)
            du = np.linalg.solve(J, -r)
        except PropagationError as exc:
            message = f"propagation failed while differencing: {exc}"
            break
        except np.linalg.LinAlgError:
            message = "singular shooting Jacobian"
            break
        lam = 1.0
        norm0 = np.linalg.norm(r)
        for _ in range(max_halvings + 1):
            trial = u + lam * du
            if trial[8] > 0:
                try:
                    rt = tpbvp_residual(trial, g, opts)
                    if np.linalg.norm(rt) < norm0:
                        break
                except PropagationError:
                    pass
            lam *= 0.5
        else:
            message = "backtracking failed to reduce the residual"
            break
        steps.append(float(np.linalg.norm(lam * du)))
        u, r = trial, rt
    converged = bool(np.max(np.abs(r)) <= tol)
    traj = None
    if converged:
        traj = integrate_coupled_system(g.initial_state, u[:8], u[8], g, opts)[2]
        traj.diagnostics["residual_norm"] = float(np.max(np.abs(r)))
    return ShootingResult(u, traj, converged, r, it, steps, message)


def seed_from_trajectory(traj: Trajectory, g: GameDefinition, opts: IntegratorOptions | None = None):
    """Shooting unknowns from a transcribed (follower-costate-only) solution.

    Pursuer costates and ``t_f`` are read off directly.  The evader costates,
    which the transcription never carries, are recovered by integrating their
    adjoint equations backward along a cubic spline of the evader's states,
    starting from the terminal values the multipliers elimination implies.
    """
    opts = opts or IntegratorOptions()
    t = np.asarray(traj.t, dtype=float)
    spline = CubicSpline(t, traj.states[4:8], axis=1)
    lam_f = traj.costates[:, -1]
    le_f = np.array([0.0, 0.0, -lam_f[2], -lam_f[3]])

    def rhs(time, le):
        return leader_costate_derivative(spline(time), le, g.params.mu)

    sol = solve_ivp(rhs, (traj.t_f, 0.0), le_f, method="DOP853", rtol=opts.rtol, atol=opts.atol)
    le0 = sol.y[:, -1]
    return np.concatenate([traj.costates[:, 0], le0, [traj.t_f]])


def newton_contraction(step_norms) -> list[float]:
    """Ratios of successive Newton step lengths."""
    s = np.asarray(step_norms, dtype=float)
    return (s[1:] / s[:-1]).tolist() if s.size > 1 else []

