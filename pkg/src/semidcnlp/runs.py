"""Run orchestration: solve, shoot, compare and plot-data emission.

Each persisted run directory holds ``config.json``, ``trajectory.csv``,
``diagnostics.json`` and ``status.json``.  Nothing time- or host-dependent is
written, so rerunning a config reproduces the directory byte for byte.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as config_mod
from .collocation import (
    Mesh,
    TranscribedProblem,
    Trajectory,
    extract_trajectory,
    initial_guess,
    reintegrate,
)
from .config import RunConfig
from .io import (
    COLUMNS,
    read_trajectory,
    trajectory_table,
    write_json,
    write_table,
    write_trajectory,
)
from .nlp import solve
from .shooting import (
    PropagationError,
    integrate_coupled_system,
    newton_contraction,
    seed_from_trajectory,
    solve_tpbvp,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_IO = 3

COMPARE_GRID = 200


@dataclass
class RunOutcome:
    trajectory: Trajectory | None
    result: object
    out_dir: Path
    exit_code: int
    diagnostics: dict = field(default_factory=dict)


def _status(out_dir, command, ok, message, extra=None):
    doc = {
        "command": command,
        "status": "converged" if ok else "not_converged",
        "exit_code": EXIT_OK if ok else EXIT_NOT_CONVERGED,
        "message": message,
    }
    doc.update(extra or {})
    write_json(out_dir / "status.json", doc)


def _snapshot(cfg, out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(config_mod.dumps(cfg))


def _radius_summary(traj):
    s = traj.states
    return {
        "min_r_p": float(s[2].min()),
        "min_r_e": float(s[6].min()),
        "capture_r_p": float(s[2, -1]),
        "capture_r_e": float(s[6, -1]),
    }


def run_solve(cfg: RunConfig, out_dir=None) -> RunOutcome:
    """Transcribe and solve the game, then persist the solution.

    The trajectory and diagnostics are written even when the solver stops
    short of convergence; ``exit_code`` then reports the failure.
    """
    out_dir = Path(out_dir or Path(cfg.output_dir) / "solve")
    _snapshot(cfg, out_dir)
    game = cfg.build_game()
    mesh = Mesh.uniform(cfg.segments)
    problem = TranscribedProblem(game, mesh, cfg.rule)
    z0 = initial_guess(game, mesh, cfg.t_f_guess, cfg.rule)
    result = solve(problem.to_nlp(), z0, cfg.solver_options())
    log.info("solve: %s after %d iterations", result.status, result.iterations)

    diagnostics = {
        "method": "semi-dcnlp",
        "rule": cfg.rule,
        "segments": cfg.segments,
        "n_vars": problem.n_vars,
        "n_cons": problem.n_cons,
        "solver_status": result.status,
        "solver_message": result.message,
        "iterations": result.iterations,
        "n_fev": result.n_fev,
        "n_jev": result.n_jev,
        "constraint_norm": result.constraint_norm,
        "stationarity_norm": result.stationarity_norm,
    }
    traj = None
    if np.all(np.isfinite(result.x_star)):
        traj = extract_trajectory(result.x_star, game, mesh, cfg.rule)
        write_trajectory(traj, out_dir / "trajectory.csv")
        second = np.asarray(traj.diagnostics["second_order"])
        diagnostics.update(
            t_f=traj.t_f,
            max_abs_hamiltonian=float(np.max(np.abs(traj.diagnostics["hamiltonian"]))),
            min_second_order_regular=float(second[~traj.singular].min()),
            **_radius_summary(traj),
        )
        try:
            re = reintegrate(traj, game)
            diagnostics["reintegration"] = {
                "capture": re["capture"],
                "terminal_costate": re["terminal_costate"],
            }
        except (RuntimeError, ValueError) as exc:
            diagnostics["reintegration"] = {"error": str(exc)}
    write_json(out_dir / "diagnostics.json", diagnostics)
    ok = result.converged
    _status(out_dir, "solve", ok, result.message, {"t_f": diagnostics.get("t_f")})
    return RunOutcome(traj, result, out_dir, EXIT_OK if ok else EXIT_NOT_CONVERGED, diagnostics)


def shooting_diagnostics(traj: Trajectory) -> dict:
    """Equilibrium checks along a dense shooting trajectory."""
    ham = np.asarray(traj.diagnostics["hamiltonian"])
    regular = ~traj.singular
    last = np.flatnonzero(regular)[-1]
    return {
        "t_f": traj.t_f,
        "max_abs_hamiltonian": float(np.max(np.abs(ham))),
        "lam_theta_p_spread": float(np.ptp(traj.costates[3])),
        "lam_theta_e_spread": float(np.ptp(traj.evader_costates[3])),
        "min_second_order_pursuer": float(np.min(np.asarray(traj.diagnostics["second_order"])[regular])),
        "min_second_order_evader": float(
            np.min(np.asarray(traj.diagnostics["evader_second_order"])[regular])
        ),
        "final_regular_control_gap": float(abs(traj.delta_e[last] - traj.delta_p[last])),
        "final_control_gap": float(abs(traj.delta_e[-1] - traj.delta_p[-1])),
        **_radius_summary(traj),
    }


def run_shoot(cfg: RunConfig, seed_path, out_dir=None) -> RunOutcome:
    """Indirect shooting seeded from a persisted trajectory."""
    out_dir = Path(out_dir or Path(cfg.output_dir) / "shoot")
    seed = read_trajectory(seed_path)
    _snapshot(cfg, out_dir)
    game = cfg.build_game()
    opts = cfg.integrator_options()
    u0 = seed_from_trajectory(seed, game, opts)
    sc = cfg.shooting
    result = solve_tpbvp(u0, game, opts, tol=sc.tol, max_iter=sc.max_iter, fd_step=sc.fd_step)
    log.info("shoot: %s after %d iterations", result.message, result.iterations)

    diagnostics = {
        "method": "shooting",
        "converged": result.converged,
        "message": result.message,
        "iterations": result.iterations,
        "residual": result.residual,
        "residual_norm": float(np.max(np.abs(result.residual))),
        "step_norms": result.step_norms,
        "step_ratios": newton_contraction(result.step_norms),
        "seed": u0,
        "unknowns": result.unknowns,
    }
    traj = result.trajectory
    if traj is None and result.unknowns[8] > 0:
        try:
            traj = integrate_coupled_system(game.initial_state, result.unknowns[:8], result.unknowns[8], game, opts)[2]
        except PropagationError as exc:
            diagnostics["propagation_error"] = str(exc)
    if traj is not None:
        write_trajectory(traj, out_dir / "trajectory.csv")
        diagnostics.update(shooting_diagnostics(traj))
    write_json(out_dir / "diagnostics.json", diagnostics)
    _status(out_dir, "shoot", result.converged, result.message, {"t_f": result.t_f})
    code = EXIT_OK if result.converged else EXIT_NOT_CONVERGED
    return RunOutcome(traj, result, out_dir, code, diagnostics)


@dataclass
class CompareReport:
    t_f_a: float
    t_f_b: float
    t_f_rel_diff: float
    deviations: dict
    checked: tuple
    tolerances: dict
    passed: bool

    def as_dict(self) -> dict:
        return {
            "t_f_a": self.t_f_a,
            "t_f_b": self.t_f_b,
            "t_f_rel_diff": self.t_f_rel_diff,
            "deviations": self.deviations,
            "checked": list(self.checked),
            "tolerances": self.tolerances,
            "passed": self.passed,
        }


def compare_trajectories(a: Trajectory, b: Trajectory, t_f_rel=0.08, max_deviation=0.1,
                         variables=("r_p", "r_e", "th_p", "th_e"), n_grid=COMPARE_GRID) -> CompareReport:
    """Resample both histories on a common grid and measure their disagreement.

    The relative final-time difference is taken with respect to ``a``.  Every
    column present in both trajectories gets a max-abs deviation; only
    ``variables`` count towards the verdict.
    """
    lo, hi = max(a.t[0], b.t[0]), min(a.t[-1], b.t[-1])
    if not hi > lo:
        raise ValueError("trajectories do not overlap in time")
    grid = np.linspace(lo, hi, n_grid)
    ta, tb = trajectory_table(a), trajectory_table(b)
    deviations = {}
    for j, name in enumerate(COLUMNS[1:], start=1):
        if np.any(np.isnan(ta[:, j])) or np.any(np.isnan(tb[:, j])):
            continue
        ya = np.interp(grid, ta[:, 0], ta[:, j])
        yb = np.interp(grid, tb[:, 0], tb[:, j])
        deviations[name] = float(np.max(np.abs(ya - yb)))
    missing = [v for v in variables if v not in deviations]
    if missing:
        raise ValueError(f"variables missing from a trajectory: {missing}")
    rel = abs(a.t_f - b.t_f) / abs(a.t_f)
    passed = rel <= t_f_rel and all(deviations[v] <= max_deviation for v in variables)
    return CompareReport(
        t_f_a=float(a.t_f),
        t_f_b=float(b.t_f),
        t_f_rel_diff=float(rel),
        deviations=deviations,
        checked=tuple(variables),
        tolerances={"t_f_rel": t_f_rel, "max_deviation": max_deviation},
        passed=bool(passed),
    )


def run_compare(path_a, path_b, tolerances=None, out_path=None) -> CompareReport:
    """Compare two trajectory files; optionally persist the report as JSON.

    ``tolerances`` may carry ``t_f_rel``, ``max_deviation`` and ``variables``.
    """
    tol = dict(tolerances or {})
    report = compare_trajectories(read_trajectory(path_a), read_trajectory(path_b), **tol)
    if out_path is not None:
        write_json(out_path, report.as_dict())
    return report


PLOT_FILES = {
    "planar_paths.csv": ("t", "x_p", "y_p", "x_e", "y_e"),
    "pursuer_costates.csv": ("t", "lam_vrp", "lam_vthp", "lam_rp", "lam_thp"),
    "pursuer_velocity.csv": ("t", "v_rp", "v_thp"),
    "evader_velocity.csv": ("t", "v_re", "v_the"),
    "controls.csv": ("t", "delta_p", "delta_e"),
}


def emit_plot_data(traj_path, out_dir) -> list[Path]:
    """Write plot-ready CSV files (one per figure panel) from a trajectory."""
    traj = read_trajectory(traj_path)
    out_dir = Path(out_dir)
    s, lam = traj.states, traj.costates
    data = {
        "t": traj.t,
        "x_p": s[2] * np.cos(s[3]),
        "y_p": s[2] * np.sin(s[3]),
        "x_e": s[6] * np.cos(s[7]),
        "y_e": s[6] * np.sin(s[7]),
        "v_rp": s[0],
        "v_thp": s[1],
        "v_re": s[4],
        "v_the": s[5],
        "lam_vrp": lam[0],
        "lam_vthp": lam[1],
        "lam_rp": lam[2],
        "lam_thp": lam[3],
        "delta_p": traj.delta_p,
        "delta_e": traj.delta_e,
    }
    return [write_table(out_dir / name, cols, [data[c] for c in cols]) for name, cols in PLOT_FILES.items()]
