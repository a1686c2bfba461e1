"""Planar spacecraft pursuit-evasion game: dynamics, costates and optimality laws.

All state-like arrays keep their components on the leading axis so the same
functions evaluate a single point (shape ``(8,)``) or a whole mesh of points
(shape ``(8, n)``).  Component order is fixed throughout the package:

* player state: ``v_r, v_theta, r, theta``
* game state: pursuer block followed by evader block
* costate: ``l_vr, l_vtheta, l_r, l_theta`` (same order as the state it adjoins)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Protocol

import numpy as np

SINGULAR_EPS = 1e-10

STATE_NAMES = ("v_rp", "v_thp", "r_p", "th_p", "v_re", "v_the", "r_e", "th_e")
COSTATE_NAMES = ("lam_vrp", "lam_vthp", "lam_rp", "lam_thp")
EVADER_COSTATE_NAMES = ("lam_vre", "lam_vthe", "lam_re", "lam_the")


class DomainError(ValueError):
    """Raised when a state leaves the domain of the equations of motion."""


@dataclass(frozen=True)
class GameParameters:
    """Normalized thrust accelerations and gravitational parameter."""

    T_p: float = 0.05
    T_e: float = 0.0025
    mu: float = 1.0

    def __post_init__(self):
        for name in ("T_p", "T_e", "mu"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if self.T_p <= self.T_e:
            raise ValueError(
                f"T_p must exceed T_e for capture to be possible "
                f"(T_p={self.T_p!r}, T_e={self.T_e!r})"
            )


@dataclass(frozen=True)
class CoastingEvaderParameters(GameParameters):
    """Parameters of the degenerate game in which the evader cannot thrust.

    Only used as a regression counterpart of the benchmark: with ``T_e = 0``
    the leader has no influence and the game reduces to the pursuer's
    minimum-time intercept of a Kepler orbit.
    """

    T_e: float = 0.0

    def __post_init__(self):
        if self.T_e != 0.0:
            raise ValueError("a coasting evader has T_e = 0")
        for name in ("T_p", "mu"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class PlayerState:
    v_r: float
    v_theta: float
    r: float
    theta: float

    def __post_init__(self):
        if not self.r > 0:
            raise DomainError(f"orbital radius must be positive, got {self.r!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.v_r, self.v_theta, self.r, self.theta], dtype=float)

    @classmethod
    def from_array(cls, a) -> PlayerState:
        return cls(*(float(v) for v in np.asarray(a, dtype=float)[:4]))


@dataclass(frozen=True)
class GameState:
    pursuer: PlayerState
    evader: PlayerState

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.pursuer.as_array(), self.evader.as_array()])

    @classmethod
    def from_array(cls, a) -> GameState:
        a = np.asarray(a, dtype=float)
        return cls(PlayerState.from_array(a[:4]), PlayerState.from_array(a[4:8]))


@dataclass(frozen=True)
class FollowerCostate:
    l_vr: float
    l_vtheta: float
    l_r: float
    l_theta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.l_vr, self.l_vtheta, self.l_r, self.l_theta], dtype=float)

    @classmethod
    def from_array(cls, a) -> FollowerCostate:
        return cls(*(float(v) for v in np.asarray(a, dtype=float)[:4]))


@dataclass(frozen=True)
class FullCostate:
    pursuer: FollowerCostate
    evader: FollowerCostate

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.pursuer.as_array(), self.evader.as_array()])

    @classmethod
    def from_array(cls, a) -> FullCostate:
        a = np.asarray(a, dtype=float)
        return cls(FollowerCostate.from_array(a[:4]), FollowerCostate.from_array(a[4:8]))


@dataclass(frozen=True)
class ControlPair:
    delta_p: float
    delta_e: float

    def as_array(self) -> np.ndarray:
        return np.array([self.delta_p, self.delta_e], dtype=float)


class ThrustAngle(NamedTuple):
    """Optimal thrust direction and whether the control law was singular there."""

    delta: np.ndarray | float
    singular: np.ndarray | bool


# Benchmark start, pursuer on its circular orbit (v_theta = sqrt(mu/r)).
BENCHMARK_INITIAL_STATE = np.array([0.0, 1.0, 1.0, 0.0, 0.0, 0.9759, 1.05, 0.4])


def _array(x) -> np.ndarray:
    if hasattr(x, "as_array"):
        return x.as_array()
    return np.asarray(x, dtype=float)


def _check_radius(r, what="r"):
    r = np.asarray(r)
    if not np.all(np.isfinite(r)) or np.any(r <= 0):
        raise DomainError(f"{what} must be positive and finite")


def player_derivative(x, thrust, delta, mu):
    """Polar equations of motion of one thrusting point mass."""
    v_r, v_t, r, _ = x
    return np.array(
        [
            thrust * np.sin(delta) - mu / r**2 + v_t**2 / r,
            thrust * np.cos(delta) - v_r * v_t / r,
            v_r,
            v_t / r,
        ]
    )


def costate_rates(x, lam, mu):
    """Adjoint rates ``-dH/dx`` for one player; identical form for both players."""
    v_r, v_t, r, _ = x
    l_vr, l_vt, l_r, l_th = lam
    return np.array(
        [
            l_vt * v_t / r - l_r,
            (-2.0 * l_vr * v_t + l_vt * v_r - l_th) / r,
            (-2.0 * l_vr * mu + l_vr * v_t**2 * r - l_vt * v_r * v_t * r + l_th * v_t * r)
            / r**3,
            np.zeros_like(np.asarray(r, dtype=float)),
        ]
    )


def state_derivative(s, u, p: GameParameters) -> np.ndarray:
    """Right-hand side of the joint equations of motion.

    Parameters
    ----------
    s : GameState or array_like, shape (8, ...)
    u : ControlPair or array_like, shape (2, ...)
        Pursuer and evader thrust angles.
    p : GameParameters
    """
    s = _array(s)
    u = _array(u)
    if not np.all(np.isfinite(s)) or not np.all(np.isfinite(u)):
        raise DomainError("state and controls must be finite")
    _check_radius(s[2], "r_p")
    _check_radius(s[6], "r_e")
    return np.concatenate(
        [
            player_derivative(s[:4], p.T_p, u[0], p.mu),
            player_derivative(s[4:8], p.T_e, u[1], p.mu),
        ]
    )


def follower_costate_derivative(sp, lp, mu: float = 1.0) -> np.ndarray:
    """Pursuer costate rates; the ``l_theta`` rate is identically zero."""
    sp = _array(sp)
    lp = _array(lp)
    _check_radius(sp[2], "r_p")
    return costate_rates(sp, lp, mu)


def leader_costate_derivative(se, le, mu: float = 1.0) -> np.ndarray:
    """Evader costate rates, used only by the indirect validator."""
    se = _array(se)
    le = _array(le)
    _check_radius(se[2], "r_e")
    return costate_rates(se, le, mu)


def _control_law(a, b, sign):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    singular = np.hypot(a, b) < SINGULAR_EPS
    delta = np.where(singular, 0.0, np.arctan2(sign * a, sign * b))
    if delta.ndim == 0:
        return ThrustAngle(float(delta), bool(singular))
    return ThrustAngle(delta, singular)


def optimal_pursuer_control(l_vr, l_vtheta) -> ThrustAngle:
    """Thrust angle minimizing the Hamiltonian over the pursuer's direction.

    ``atan2(-l_vr, -l_vtheta)`` is the unique stationary point with positive
    curvature ``T_p * hypot(l_vr, l_vtheta)``.  Where the velocity costates
    vanish the direction is undefined; the angle is reported as 0 and flagged.
    """
    return _control_law(l_vr, l_vtheta, -1.0)


def optimal_evader_control(l_vr, l_vtheta) -> ThrustAngle:
    """Thrust angle maximizing the Hamiltonian over the evader's direction."""
    return _control_law(l_vr, l_vtheta, 1.0)


def control_gradient(l_vr, l_vtheta, delta, thrust):
    """dH/d(delta) for one player's thrust term."""
    return thrust * (l_vr * np.cos(delta) - l_vtheta * np.sin(delta))


def control_curvature(l_vr, l_vtheta, delta, thrust):
    """d2H/d(delta)2 for one player's thrust term (positive at a pursuer minimum)."""
    return -thrust * (l_vr * np.sin(delta) + l_vtheta * np.cos(delta))


def hold_singular(angle: ThrustAngle) -> np.ndarray:
    """Replace singular samples along a trajectory by the last regular angle."""
    delta = np.array(angle.delta, dtype=float, copy=True)
    singular = np.asarray(angle.singular, dtype=bool)
    last = 0.0
    for k in range(delta.shape[-1]):
        if singular[k]:
            delta[k] = last
        else:
            last = delta[k]
    return delta


def hamiltonian(s, lam, u, p: GameParameters):
    """Time-optimal Hamiltonian: 1 plus costate-weighted dynamics of both players."""
    s = _array(s)
    lam = _array(lam)
    f = state_derivative(s, u, p)
    return 1.0 + np.sum(lam * f, axis=0)


def capture_residual(s) -> np.ndarray:
    """Radius and (unwrapped) angle mismatch between pursuer and evader."""
    s = _array(s)
    return np.array([s[2] - s[6], s[3] - s[7]])


def transversality_residual(s, l_r, l_theta):
    """Free-final-time condition with the terminal multipliers substituted."""
    s = _array(s)
    _check_radius(s[2], "r_p")
    _check_radius(s[6], "r_e")
    return 1.0 + l_r * (s[0] - s[4]) + l_theta * (s[1] / s[2] - s[5] / s[6])


class GameDefinition(Protocol):
    """Surface a transcription or validator needs from a two-player game."""

    params: GameParameters
    initial_state: np.ndarray
    state_dim: int
    costate_dim: int
    leader_control_dim: int

    def dynamics(self, x, delta_p, delta_e) -> np.ndarray: ...

    def follower_costate_dynamics(self, x, lam) -> np.ndarray: ...

    def follower_control(self, lam) -> ThrustAngle: ...

    def terminal_follower_control(self, x, lam) -> np.ndarray: ...

    def capture(self, x) -> np.ndarray: ...

    def terminal_costate(self, lam) -> np.ndarray: ...

    def transversality(self, x, lam) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class SpacecraftGame:
    """The evader-leads spacecraft pursuit-evasion benchmark.

    The pursuer is the follower: its costates are carried explicitly and its
    thrust angle is eliminated through :func:`optimal_pursuer_control`.
    """

    params: GameParameters = field(default_factory=GameParameters)
    initial_state: np.ndarray = field(default_factory=lambda: BENCHMARK_INITIAL_STATE.copy())

    state_dim = 8
    costate_dim = 4
    leader_control_dim = 1

    def __post_init__(self):
        x0 = np.array(_array(self.initial_state), dtype=float)
        if x0.shape != (8,) or not np.all(np.isfinite(x0)):
            raise ValueError("initial_state must hold 8 finite values")
        _check_radius(x0[2], "r_p")
        _check_radius(x0[6], "r_e")
        x0.flags.writeable = False
        object.__setattr__(self, "initial_state", x0)

    def dynamics(self, x, delta_p, delta_e):
        return state_derivative(x, (delta_p, delta_e), self.params)

    def follower_costate_dynamics(self, x, lam):
        return follower_costate_derivative(x[:4], lam, self.params.mu)

    def follower_control(self, lam) -> ThrustAngle:
        return optimal_pursuer_control(lam[0], lam[1])

    def terminal_follower_control(self, x, lam):
        """Left limit of the pursuer's control law at capture.

        The velocity costates vanish at the final time, so the direction is
        taken from their rates there: ``-d(l_v)/dt`` points along ``-l_v`` just
        before capture.
        """
        rates = follower_costate_derivative(x[:4], lam, self.params.mu)
        return np.arctan2(rates[0], rates[1])

    def capture(self, x):
        return capture_residual(x)

    def terminal_costate(self, lam):
        return np.array([lam[0], lam[1]])

    def transversality(self, x, lam):
        return transversality_residual(x, lam[2], lam[3])
