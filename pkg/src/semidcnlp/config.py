"""Run configuration: JSON loading, validation and canonical serialization.

A config file is a JSON object; every key is optional and missing keys take
the benchmark defaults.  The canonical form produced by :func:`to_dict`
always carries every field, so ``to_dict(from_dict(d))`` is a fixed point
after one pass.

Example::

    {
      "schema_version": 1,
      "game": {"T_p": 0.05, "T_e": 0.0025, "mu": 1.0},
      "initial_state": {"v_rp": 0.0, "v_thp": 1.0, "r_p": 1.0, "th_p": 0.0,
                        "v_re": 0.0, "v_the": 0.9759, "r_e": 1.05, "th_e": 0.4},
      "leader": "evader",
      "mesh": {"segments": 40, "rule": "hermite-simpson"},
      "t_f_guess": 3.0,
      "solver": {...}, "integrator": {...}, "shooting": {...}, "compare": {...},
      "output_dir": "runs"
    }
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .collocation import RULES
from .game import (
    BENCHMARK_INITIAL_STATE,
    STATE_NAMES,
    CoastingEvaderParameters,
    GameParameters,
    SpacecraftGame,
)
from .nlp import SolverOptions
from .shooting import ADAPTIVE_METHODS, RK4, IntegratorOptions

SCHEMA_VERSION = 1
LEADERS = ("evader",)


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class SolverConfig:
    tol_constraint: float = 1e-8
    tol_stationarity: float = 1e-6
    max_major_iterations: int = 500
    fd_step: float = 1e-6


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "DOP853"
    rtol: float = 1e-10
    atol: float = 1e-12
    n_steps: int = 2000
    n_samples: int = 201


@dataclass(frozen=True)
class ShootingConfig:
    tol: float = 1e-10
    max_iter: int = 50
    fd_step: float = 1e-7


@dataclass(frozen=True)
class CompareConfig:
    t_f_rel: float = 0.08
    max_deviation: float = 0.1
    variables: tuple = ("r_p", "r_e", "th_p", "th_e")


@dataclass(frozen=True)
class RunConfig:
    game: GameParameters = field(default_factory=GameParameters)
    initial_state: tuple = tuple(float(v) for v in BENCHMARK_INITIAL_STATE)
    leader: str = "evader"
    segments: int = 40
    rule: str = "hermite-simpson"
    t_f_guess: float = 3.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    shooting: ShootingConfig = field(default_factory=ShootingConfig)
    compare: CompareConfig = field(default_factory=CompareConfig)
    output_dir: str = "runs"

    def build_game(self) -> SpacecraftGame:
        return SpacecraftGame(self.game, np.array(self.initial_state))

    def solver_options(self, **overrides) -> SolverOptions:
        return SolverOptions(**asdict(self.solver), **overrides)

    def integrator_options(self) -> IntegratorOptions:
        return IntegratorOptions(**asdict(self.integrator))


def _number(value, name, *, positive=False, nonnegative=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"expected a number, got {value!r}")
    if integer:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(name, f"expected an integer, got {value!r}")
        value = int(value)
    elif not math.isfinite(value):
        raise ConfigError(name, "must be finite")
    if positive and not value > 0:
        raise ConfigError(name, f"must be positive, got {value!r}")
    if nonnegative and value < 0:
        raise ConfigError(name, f"must be non-negative, got {value!r}")
    return value if integer else float(value)


def _section(data, name):
    value = data.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(name, "expected an object")
    return value


def _reject_unknown(data, allowed, prefix=""):
    for key in data:
        if key not in allowed:
            raise ConfigError(prefix + key, "unknown field")


def _simple_section(data, name, cls, checks):
    sec = _section(data, name)
    defaults = cls()
    _reject_unknown(sec, {f.name for f in fields(cls)}, name + ".")
    values = {}
    for f in fields(cls):
        value = sec.get(f.name, getattr(defaults, f.name))
        check = checks.get(f.name)
        values[f.name] = check(value, f"{name}.{f.name}") if check else value
    return cls(**values)


def _positive(value, name):
    return _number(value, name, positive=True)


def _count(minimum):
    def check(value, name):
        value = _number(value, name, integer=True)
        if value < minimum:
            raise ConfigError(name, f"must be at least {minimum}, got {value}")
        return value

    return check


def _method(value, name):
    if value not in ADAPTIVE_METHODS + (RK4,):
        raise ConfigError(name, f"unknown integrator {value!r}")
    return value


def _variables(value, name):
    if isinstance(value, str) or not isinstance(value, (list, tuple)):
        raise ConfigError(name, "expected a list of column names")
    allowed = set(STATE_NAMES) | {"delta_p", "delta_e"}
    for v in value:
        if v not in allowed:
            raise ConfigError(name, f"unknown trajectory column {v!r}")
    return tuple(value)


def from_dict(data: dict) -> RunConfig:
    """Validate a parsed JSON object and fill in defaults."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    allowed = {
        "schema_version", "game", "initial_state", "leader", "mesh", "t_f_guess",
        "solver", "integrator", "shooting", "compare", "output_dir",
    }
    _reject_unknown(data, allowed)
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version!r} (expected {SCHEMA_VERSION})")

    game = _section(data, "game")
    _reject_unknown(game, {"T_p", "T_e", "mu"}, "game.")
    base = GameParameters()
    T_p = _positive(game.get("T_p", base.T_p), "game.T_p")
    T_e = _number(game.get("T_e", base.T_e), "game.T_e", nonnegative=True)
    mu = _positive(game.get("mu", base.mu), "game.mu")
    if T_e >= T_p:
        raise ConfigError("game.T_e", f"must be smaller than T_p for capture ({T_e} >= {T_p})")
    params = _parameters(T_p, T_e, mu)

    state = _section(data, "initial_state")
    _reject_unknown(state, set(STATE_NAMES), "initial_state.")
    x0 = []
    for name, default in zip(STATE_NAMES, BENCHMARK_INITIAL_STATE):
        x0.append(_number(state.get(name, float(default)), f"initial_state.{name}"))
    for name in ("r_p", "r_e"):
        if not x0[STATE_NAMES.index(name)] > 0:
            raise ConfigError(f"initial_state.{name}", "orbital radius must be positive")

    leader = data.get("leader", "evader")
    if leader not in LEADERS:
        raise ConfigError("leader", f"only the evader-leads game is supported, got {leader!r}")

    mesh = _section(data, "mesh")
    _reject_unknown(mesh, {"segments", "rule"}, "mesh.")
    segments = _count(2)(mesh.get("segments", 40), "mesh.segments")
    rule = mesh.get("rule", "hermite-simpson")
    if rule not in RULES:
        raise ConfigError("mesh.rule", f"expected one of {', '.join(RULES)}, got {rule!r}")

    t_f_guess = _positive(data.get("t_f_guess", 3.0), "t_f_guess")
    output_dir = data.get("output_dir", "runs")
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir", "expected a non-empty path string")

    return RunConfig(
        game=params,
        initial_state=tuple(x0),
        leader=leader,
        segments=segments,
        rule=rule,
        t_f_guess=t_f_guess,
        solver=_simple_section(
            data, "solver", SolverConfig,
            {"tol_constraint": _positive, "tol_stationarity": _positive,
             "max_major_iterations": _count(1), "fd_step": _positive},
        ),
        integrator=_simple_section(
            data, "integrator", IntegratorConfig,
            {"method": _method, "rtol": _positive, "atol": _positive,
             "n_steps": _count(1), "n_samples": _count(2)},
        ),
        shooting=_simple_section(
            data, "shooting", ShootingConfig,
            {"tol": _positive, "max_iter": _count(1), "fd_step": _positive},
        ),
        compare=_simple_section(
            data, "compare", CompareConfig,
            {"t_f_rel": _positive, "max_deviation": _positive, "variables": _variables},
        ),
        output_dir=output_dir,
    )


def _parameters(T_p, T_e, mu) -> GameParameters:
    try:
        if T_e == 0.0:
            return CoastingEvaderParameters(T_p, 0.0, mu)
        return GameParameters(T_p, T_e, mu)
    except ValueError as exc:
        raise ConfigError("game", str(exc)) from exc


def to_dict(cfg: RunConfig) -> dict:
    """Canonical JSON-ready form carrying every field."""
    return {
        "schema_version": SCHEMA_VERSION,
        "game": {"T_p": cfg.game.T_p, "T_e": cfg.game.T_e, "mu": cfg.game.mu},
        "initial_state": dict(zip(STATE_NAMES, cfg.initial_state)),
        "leader": cfg.leader,
        "mesh": {"segments": cfg.segments, "rule": cfg.rule},
        "t_f_guess": cfg.t_f_guess,
        "solver": asdict(cfg.solver),
        "integrator": asdict(cfg.integrator),
        "shooting": asdict(cfg.shooting),
        "compare": {**asdict(cfg.compare), "variables": list(cfg.compare.variables)},
        "output_dir": cfg.output_dir,
    }


def dumps(cfg: RunConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2, sort_keys=True) + "\n"


def load_config(path) -> RunConfig:
    """Read and validate a JSON config file.

    Raises
    ------
    ConfigError
        For unreadable files, malformed JSON and every schema or invariant
        violation; the exception's ``field`` attribute names the entry.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", f"parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return from_dict(data)


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    """Apply command-line overrides (``None`` values are ignored) and revalidate."""
    data = to_dict(cfg)
    if changes.get("segments") is not None:
        data["mesh"]["segments"] = changes["segments"]
    if changes.get("rule") is not None:
        data["mesh"]["rule"] = changes["rule"]
    if changes.get("output_dir") is not None:
        data["output_dir"] = str(changes["output_dir"])
    return from_dict(data)
