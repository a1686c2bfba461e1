"""Direct-collocation transcription of the follower-constrained game.

The leader's control history and the final time are the optimization
freedoms; node states, follower costates and the final time are tied together
by collocation defects of the joint state/costate system, the initial state,
capture, the follower's terminal costate conditions and transversality.

Decision-vector layout (Hermite-Simpson, ``N`` segments)::

    [ node 0: 8 states, 4 follower costates, delta_e | ... | node N: ... ]
    [ midpoint delta_e of segments 0..N-1 ]
    [ t_f ]

The fifth-degree Lobatto rule adds, per segment, the 12 state/costate values
at the segment midpoint and the leader angle at the two collocation points and
the midpoint.  Time is normalized: ``t = t_f * tau`` with ``tau`` in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .game import (
    GameDefinition,
    control_curvature,
    costate_rates,
    hamiltonian,
    optimal_pursuer_control,
    state_derivative,
)
from .nlp import NLPProblem

HERMITE_SIMPSON = "hermite-simpson"
GAUSS_LOBATTO_5 = "gauss-lobatto-5"
RULES = (HERMITE_SIMPSON, GAUSS_LOBATTO_5)

TF_BOUNDS = (0.5, 10.0)
R_FLOOR = 0.2
VAR_BOUND = 50.0
GUESS_COSTATE = (-0.1, -0.1, -0.1, 0.0)

NY = 12  # states + follower costates
NODE = NY + 1  # plus the leader angle


@dataclass(frozen=True, eq=False)
class Mesh:
    """Normalized node times ``0 = tau_0 < ... < tau_N = 1``."""

    tau: np.ndarray

    def __post_init__(self):
        tau = np.array(self.tau, dtype=float)
        if tau.ndim != 1 or tau.size < 3:
            raise ValueError("a mesh needs at least two segments")
        if tau[0] != 0.0 or tau[-1] != 1.0 or np.any(np.diff(tau) <= 0):
            raise ValueError("mesh nodes must increase strictly from 0 to 1")
        tau.flags.writeable = False
        object.__setattr__(self, "tau", tau)

    @classmethod
    def uniform(cls, n_segments: int) -> Mesh:
        if n_segments < 2:
            raise ValueError("n_segments must be at least 2")
        return cls(np.linspace(0.0, 1.0, n_segments + 1))

    @property
    def n_segments(self) -> int:
        return self.tau.size - 1

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.tau)


# ---------------------------------------------------------------------------
# collocation rules


def hermite_simpson_midpoint(x_k, x_k1, f_k, f_k1, h):
    """Cubic Hermite interpolant of the segment evaluated at its midpoint."""
    return 0.5 * (x_k + x_k1) + (h / 8.0) * (f_k - f_k1)


def hermite_simpson_defect(x_k, x_k1, f_k, f_k1, f_c, h):
    """Simpson-rule defect ``x_k1 - x_k - h/6 (f_k + 4 f_c + f_k1)``.

    ``f_c`` is the dynamics evaluated at :func:`hermite_simpson_midpoint`.
    Leading axes are components; trailing axes (if any) run over segments.
    """
    arrays = [np.asarray(a, dtype=float) for a in (x_k, x_k1, f_k, f_k1, f_c)]
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise ValueError("node values and slopes must share one shape")
    if np.any(np.asarray(h) <= 0):
        raise ValueError("segment length must be positive")
    x_k, x_k1, f_k, f_k1, f_c = arrays
    return x_k1 - x_k - (h / 6.0) * (f_k + 4.0 * f_c + f_k1)


# Five-point Lobatto nodes on [0, 1]: the interior pair is where the quintic
# interpolant is collocated; states at 0, 1/2 and 1 are decision variables.
GL5_COLLOCATION = np.array([0.5 - np.sqrt(21.0) / 14.0, 0.5 + np.sqrt(21.0) / 14.0])


def _gl5_weights():
    s_data = np.array([0.0, 0.5, 1.0])
    powers = np.arange(6)
    value_rows = s_data[:, None] ** powers
    slope_rows = np.where(powers > 0, powers * s_data[:, None] ** np.maximum(powers - 1, 0), 0.0)
    interp = np.linalg.inv(np.vstack([value_rows, slope_rows]))
    sc = GL5_COLLOCATION[:, None]
    value_at = sc**powers
    slope_at = np.where(powers > 0, powers * sc ** np.maximum(powers - 1, 0), 0.0)
    return value_at @ interp, slope_at @ interp


# rows: collocation points; columns: x_0, x_m, x_1, h f_0, h f_m, h f_1
GL5_VALUE_WEIGHTS, GL5_SLOPE_WEIGHTS = _gl5_weights()


def gauss_lobatto5_interpolate(x_0, x_m, x_1, f_0, f_m, f_1, h):
    """Quintic Hermite interpolant of a segment at its two collocation points."""
    data = (x_0, x_m, x_1, h * f_0, h * f_m, h * f_1)
    return tuple(sum(w * d for w, d in zip(row, data)) for row in GL5_VALUE_WEIGHTS)


def gauss_lobatto5_defect(x_0, x_m, x_1, f_0, f_m, f_1, f_c1, f_c2, h):
    """Fifth-degree Lobatto defects at the two interior collocation points.

    Returns the stacked ``(2 * n, ...)`` residual ``p'(s_c) - h f_c`` where
    ``p`` is the quintic matching values and slopes at the segment ends and
    midpoint, and ``f_c1, f_c2`` are the dynamics at the interpolated states.
    """
    arrays = [np.asarray(a, dtype=float) for a in (x_0, x_m, x_1, f_0, f_m, f_1, f_c1, f_c2)]
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise ValueError("node values and slopes must share one shape")
    if np.any(np.asarray(h) <= 0):
        raise ValueError("segment length must be positive")
    x_0, x_m, x_1, f_0, f_m, f_1, f_c1, f_c2 = arrays
    data = (x_0, x_m, x_1, h * f_0, h * f_m, h * f_1)
    out = []
    for row, f_c in zip(GL5_SLOPE_WEIGHTS, (f_c1, f_c2)):
        out.append(sum(w * d for w, d in zip(row, data)) - h * f_c)
    return np.concatenate(out, axis=0)


# ---------------------------------------------------------------------------
# decision vector


@dataclass(frozen=True)
class Layout:
    """Index bookkeeping for one mesh size and rule."""

    n_segments: int
    rule: str = HERMITE_SIMPSON

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown collocation rule {self.rule!r}; choose from {RULES}")

    @property
    def interior_size(self) -> int:
        return 1 if self.rule == HERMITE_SIMPSON else NY + 3

    @property
    def n_vars(self) -> int:
        n = self.n_segments
        return NODE * (n + 1) + self.interior_size * n + 1

    @property
    def n_cons(self) -> int:
        per_segment = NY if self.rule == HERMITE_SIMPSON else 2 * NY
        return 8 + per_segment * self.n_segments + 5

    def split(self, z):
        """Views ``(node_y (12, N+1), node_de (N+1,), interior (k, N), t_f)``."""
        z = np.asarray(z, dtype=float)
        if z.shape != (self.n_vars,):
            raise ValueError(f"decision vector must have length {self.n_vars}, got {z.shape}")
        n = self.n_segments
        nodes = z[: NODE * (n + 1)].reshape(n + 1, NODE).T
        interior = z[NODE * (n + 1) : -1].reshape(n, self.interior_size).T
        return nodes[:NY], nodes[NY], interior, z[-1]

    def pack(self, node_y, node_de, interior, t_f) -> np.ndarray:
        n = self.n_segments
        nodes = np.vstack([np.asarray(node_y, float), np.asarray(node_de, float)[None, :]])
        interior = np.asarray(interior, dtype=float).reshape(self.interior_size, n)
        return np.concatenate([nodes.T.ravel(), interior.T.ravel(), [float(t_f)]])

    def tf_index(self) -> int:
        return self.n_vars - 1


# ---------------------------------------------------------------------------
# constraints


def _augmented_rhs(g: GameDefinition, y, delta_e, terminal=False):
    """Rates of states and follower costates with the follower control eliminated."""
    x, lam = y[:8], y[8:NY]
    if terminal:
        delta_p = g.terminal_follower_control(x, lam)
    else:
        delta_p = g.follower_control(lam).delta
    return np.concatenate([g.dynamics(x, delta_p, delta_e), g.follower_costate_dynamics(x, lam)])


def _node_rates(g, node_y, node_de):
    rates = np.empty_like(node_y)
    rates[:, :-1] = _augmented_rhs(g, node_y[:, :-1], node_de[:-1])
    rates[:, -1] = _augmented_rhs(g, node_y[:, -1], node_de[-1], terminal=True)
    return rates


def _defects(g, layout: Layout, mesh: Mesh, node_y, node_de, interior, t_f):
    h = t_f * mesh.h
    f = _node_rates(g, node_y, node_de)
    y0, y1, f0, f1 = node_y[:, :-1], node_y[:, 1:], f[:, :-1], f[:, 1:]
    if layout.rule == HERMITE_SIMPSON:
        y_c = hermite_simpson_midpoint(y0, y1, f0, f1, h)
        f_c = _augmented_rhs(g, y_c, interior[0])
        return hermite_simpson_defect(y0, y1, f0, f1, f_c, h)
    y_m = interior[:NY]
    de_c1, de_m, de_c2 = interior[NY], interior[NY + 1], interior[NY + 2]
    f_m = _augmented_rhs(g, y_m, de_m)
    y_c1, y_c2 = gauss_lobatto5_interpolate(y0, y_m, y1, f0, f_m, f1, h)
    f_c1 = _augmented_rhs(g, y_c1, de_c1)
    f_c2 = _augmented_rhs(g, y_c2, de_c2)
    return gauss_lobatto5_defect(y0, y_m, y1, f0, f_m, f1, f_c1, f_c2, h)


def assemble_constraints(z, g: GameDefinition, mesh: Mesh, rule: str = HERMITE_SIMPSON):
    """Equality residuals of the transcribed problem.

    Order: initial state (8); per-segment defects, segment-major (12 per
    segment for Hermite-Simpson, 24 for the Lobatto rule); capture (2);
    follower velocity costates at t_f (2); transversality (1).
    """
    layout = Layout(mesh.n_segments, rule)
    node_y, node_de, interior, t_f = layout.split(z)
    if not np.all(np.isfinite(z)):
        raise ValueError("decision vector contains non-finite entries")
    defects = _defects(g, layout, mesh, node_y, node_de, interior, t_f)
    x_f, lam_f = node_y[:8, -1], node_y[8:NY, -1]
    return np.concatenate(
        [
            node_y[:8, 0] - g.initial_state,
            defects.T.ravel(),
            g.capture(x_f),
            g.terminal_costate(lam_f),
            np.atleast_1d(g.transversality(x_f, lam_f)),
        ]
    )


def objective(z) -> float:
    """The leader maximizes capture time: return ``-t_f``."""
    return -float(np.asarray(z)[-1])


def jacobian_sparsity(layout: Layout) -> np.ndarray:
    """Boolean pattern of the constraint Jacobian."""
    n = layout.n_segments
    pattern = np.zeros((layout.n_cons, layout.n_vars), dtype=bool)

    def node_cols(k):
        return np.arange(NODE * k, NODE * (k + 1))

    def interior_cols(k):
        start = NODE * (n + 1) + layout.interior_size * k
        return np.arange(start, start + layout.interior_size)

    tf = layout.tf_index()
    pattern[:8, node_cols(0)[:8]] = True
    per = NY if layout.rule == HERMITE_SIMPSON else 2 * NY
    for k in range(n):
        rows = slice(8 + per * k, 8 + per * (k + 1))
        cols = np.concatenate([node_cols(k), node_cols(k + 1), interior_cols(k), [tf]])
        pattern[rows, cols] = True
    pattern[-5:, node_cols(n)] = True
    return pattern


@dataclass(frozen=True, eq=False)
class TranscribedProblem:
    """Immutable transcription of a game on a mesh; evaluation is pure."""

    game: GameDefinition
    mesh: Mesh
    rule: str = HERMITE_SIMPSON
    layout: Layout = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "layout", Layout(self.mesh.n_segments, self.rule))

    @property
    def n_vars(self) -> int:
        return self.layout.n_vars

    @property
    def n_cons(self) -> int:
        return self.layout.n_cons

    def objective(self, z) -> float:
        return objective(z)

    def constraints(self, z) -> np.ndarray:
        return assemble_constraints(z, self.game, self.mesh, self.rule)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.mesh.n_segments
        node_lo = np.full((NODE, n + 1), -VAR_BOUND)
        node_hi = np.full((NODE, n + 1), VAR_BOUND)
        node_lo[[2, 6]] = R_FLOOR
        interior_lo = np.full((self.layout.interior_size, n), -VAR_BOUND)
        interior_hi = np.full((self.layout.interior_size, n), VAR_BOUND)
        if self.rule == GAUSS_LOBATTO_5:
            interior_lo[[2, 6]] = R_FLOOR
        lower = self.layout.pack(node_lo[:NY], node_lo[NY], interior_lo, TF_BOUNDS[0])
        upper = self.layout.pack(node_hi[:NY], node_hi[NY], interior_hi, TF_BOUNDS[1])
        return lower, upper

    def to_nlp(self) -> NLPProblem:
        lower, upper = self.bounds()
        return NLPProblem(
            objective=self.objective,
            eq_constraints=self.constraints,
            n_vars=self.n_vars,
            n_cons=self.n_cons,
            lower=lower,
            upper=upper,
            jac_sparsity=jacobian_sparsity(self.layout),
        )


# ---------------------------------------------------------------------------
# initial guess


def kepler_coast(x, times, mu):
    """Unthrusted two-body propagation of one polar player state.

    Elliptic orbits only; returns an array of shape ``(4, len(times))`` with
    the polar angle unwrapped.
    """
    v_r, v_t, r0, th0 = (float(v) for v in x)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    energy = 0.5 * (v_r**2 + v_t**2) - mu / r0
    if energy >= 0:
        raise ValueError("coasting orbit is not elliptic")
    a = -mu / (2.0 * energy)
    n = np.sqrt(mu / a**3)
    ecos0 = 1.0 - r0 / a
    esin0 = r0 * v_r / np.sqrt(mu * a)
    e = np.hypot(ecos0, esin0)
    E0 = np.arctan2(esin0, ecos0)
    M = E0 - esin0 + n * times
    E = M.copy()
    for _ in range(50):
        dE = (E - e * np.sin(E) - M) / (1.0 - e * np.cos(E))
        E -= dE
        if np.max(np.abs(dE)) < 1e-15:
            break
    beta = e / (1.0 + np.sqrt(1.0 - e**2))

    def anomaly(E):
        return E + 2.0 * np.arctan2(beta * np.sin(E), 1.0 - beta * np.cos(E))

    r = a * (1.0 - e * np.cos(E))
    ang_mom = r0 * v_t
    return np.array(
        [
            np.sqrt(mu * a) * e * np.sin(E) / r,
            ang_mom / r,
            r,
            th0 + np.sign(ang_mom) * (anomaly(E) - anomaly(E0)),
        ]
    )


def initial_guess(g: GameDefinition, mesh: Mesh, t_f_guess: float, rule: str = HERMITE_SIMPSON):
    """Deterministic starting point for the transcription.

    The evader coasts on its initial Kepler orbit; the pursuer moves linearly
    from its initial state to the evader's state at ``t_f_guess``, so the guess
    satisfies capture exactly.  Costates are constant and the leader does not
    steer.
    """
    if not t_f_guess > 0:
        raise ValueError("t_f_guess must be positive")
    layout = Layout(mesh.n_segments, rule)
    x0 = np.asarray(g.initial_state, dtype=float)
    mu = g.params.mu

    def guess_states(tau):
        evader = kepler_coast(x0[4:8], t_f_guess * tau, mu)
        end = kepler_coast(x0[4:8], t_f_guess, mu)[:, 0]
        pursuer = x0[:4, None] + (end - x0[:4])[:, None] * tau[None, :]
        costate = np.tile(np.array(GUESS_COSTATE)[:, None], (1, tau.size))
        return np.vstack([pursuer, evader, costate])

    node_y = guess_states(mesh.tau)
    node_y[:8, 0] = x0
    node_de = np.zeros(mesh.tau.size)
    if rule == HERMITE_SIMPSON:
        interior = np.zeros((1, mesh.n_segments))
    else:
        mid = 0.5 * (mesh.tau[:-1] + mesh.tau[1:])
        interior = np.vstack([guess_states(mid), np.zeros((3, mesh.n_segments))])
    return layout.pack(node_y, node_de, interior, t_f_guess)


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    """Time history of a solution, one column per sample.

    ``evader_costates`` is ``None`` for transcribed solutions, which carry
    only the follower's adjoints.  ``interior`` holds the raw per-segment
    decision variables so the decision vector can be rebuilt exactly.
    """

    t: np.ndarray
    states: np.ndarray
    costates: np.ndarray
    delta_p: np.ndarray
    delta_e: np.ndarray
    t_f: float
    singular: np.ndarray
    evader_costates: np.ndarray | None = None
    interior: np.ndarray | None = None
    rule: str | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.t.size
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("trajectory times must increase strictly")
        for name in ("states", "costates"):
            if getattr(self, name).shape[-1] != n:
                raise ValueError(f"{name} length does not match the time grid")


def extract_trajectory(z, g: GameDefinition, mesh: Mesh, rule: str = HERMITE_SIMPSON) -> Trajectory:
    """Map a decision vector to physical time and reconstruct the follower control.

    The terminal node is singular by construction (its velocity costates are
    constrained to zero); its angle is the left limit of the control law, the
    same value the defects use.
    """
    layout = Layout(mesh.n_segments, rule)
    node_y, node_de, interior, t_f = layout.split(z)
    states, lam = node_y[:8].copy(), node_y[8:NY].copy()
    law = optimal_pursuer_control(lam[0], lam[1])
    delta_p = np.array(law.delta, dtype=float)
    singular = np.array(law.singular, dtype=bool)
    singular[-1] = True
    delta_p[-1] = g.terminal_follower_control(states[:, -1], lam[:, -1])

    curvature = control_curvature(lam[0], lam[1], delta_p, g.params.T_p)
    full = np.zeros((8, lam.shape[1]))
    full[:4] = lam
    full[6, -1] = -lam[2, -1]
    full[7, -1] = -lam[3, -1]
    ham = hamiltonian(states, full, np.vstack([delta_p, node_de]), g.params)
    cons = assemble_constraints(z, g, mesh, rule)
    diagnostics = {
        "constraint_norm": float(np.max(np.abs(cons))),
        "second_order": curvature.tolist(),
        "hamiltonian": ham.tolist(),
    }
    return Trajectory(
        t=t_f * mesh.tau,
        states=states,
        costates=lam,
        delta_p=delta_p,
        delta_e=node_de.copy(),
        t_f=float(t_f),
        singular=singular,
        interior=interior.copy(),
        rule=rule,
        diagnostics=diagnostics,
    )


def decision_vector(traj: Trajectory, mesh: Mesh, rule: str = HERMITE_SIMPSON) -> np.ndarray:
    """Inverse of :func:`extract_trajectory`."""
    layout = Layout(mesh.n_segments, rule)
    if traj.interior is None:
        raise ValueError("trajectory carries no interior collocation data")
    return layout.pack(np.vstack([traj.states, traj.costates]), traj.delta_e, traj.interior, traj.t_f)




def control_histories(traj: Trajectory):
    """Piecewise-linear interpolants of both thrust angles (unwrapped).

    The leader's midpoint angles stored in ``traj.interior`` are used when the
    trajectory came from the Hermite-Simpson layout.
    """
    t = np.asarray(traj.t, dtype=float)
    tp, dp = t, np.unwrap(traj.delta_p)
    te, de = t, np.asarray(traj.delta_e, dtype=float)
    if traj.rule == HERMITE_SIMPSON and traj.interior is not None:
        te = np.empty(2 * t.size - 1)
        de = np.empty_like(te)
        te[0::2], te[1::2] = t, 0.5 * (t[:-1] + t[1:])
        de[0::2], de[1::2] = traj.delta_e, traj.interior[0]
    de = np.unwrap(de)
    return (lambda s: np.interp(s, tp, dp)), (lambda s: np.interp(s, te, de))


def reintegrate(traj: Trajectory, g: GameDefinition, rtol: float = 1e-10, atol: float = 1e-12) -> dict:
    """Propagate states and follower costates under the interpolated controls.

    Returns the terminal capture and follower-costate residuals of the
    propagated solution, a check that the discrete solution actually solves
    the continuous equations it was transcribed from.
    """
    dp, de = control_histories(traj)
    mu = g.params.mu
    p = g.params

    def rhs(t, y):
        f = state_derivative(y[:8], (dp(t), de(t)), p)
        return np.concatenate([f, costate_rates(y[:4], y[8:12], mu)])

    y0 = np.concatenate([traj.states[:, 0], traj.costates[:, 0]])
    sol = solve_ivp(rhs, (0.0, traj.t_f), y0, method="DOP853", rtol=rtol, atol=atol)
    if sol.status != 0:
        raise RuntimeError(f"reintegration failed: {sol.message}")
    yf = sol.y[:, -1]
    return {
        "capture": float(np.max(np.abs(g.capture(yf[:8])))),
        "terminal_costate": float(np.max(np.abs(g.terminal_costate(yf[8:12])))),
        "final_state": yf[:8],
        "final_costate": yf[8:12],
    }
