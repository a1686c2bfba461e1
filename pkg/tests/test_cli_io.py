import json
import shutil

import numpy as np
import pytest
from scipy.interpolate import interp1d

from semidcnlp import cli
from semidcnlp.collocation import Trajectory
from semidcnlp.config import ConfigError, RunConfig, dumps, from_dict, load_config, to_dict, with_overrides
from semidcnlp.game import BENCHMARK_INITIAL_STATE, CoastingEvaderParameters
from semidcnlp.io import (
    COLUMNS,
    TrajectoryFormatError,
    read_table,
    read_trajectory,
    write_trajectory,
)
from semidcnlp.runs import (
    EXIT_IO,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    compare_trajectories,
    emit_plot_data,
    run_compare,
    run_shoot,
    run_solve,
)

RUN_FILES = {"config.json", "trajectory.csv", "diagnostics.json", "status.json"}


def write_config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


# --- configuration -----------------------------------------------------------------------


def test_empty_config_gives_benchmark_defaults(tmp_path):
    cfg = load_config(write_config(tmp_path, {}))
    assert (cfg.game.T_p, cfg.game.T_e, cfg.game.mu) == (0.05, 0.0025, 1.0)
    assert cfg.initial_state == tuple(BENCHMARK_INITIAL_STATE)
    assert cfg.initial_state[2:] == (1.0, 0.0, 0.0, 0.9759, 1.05, 0.4)
    assert cfg.segments == 40 and cfg.rule == "hermite-simpson"
    assert cfg.leader == "evader"
    assert cfg == RunConfig()


@pytest.mark.parametrize(
    "data, field",
    [
        ({"game": {"T_p": 0}}, "game.T_p"),
        ({"game": {"T_e": 0.1}}, "game.T_e"),
        ({"game": {"mu": -1}}, "game.mu"),
        ({"game": {"T_p": "fast"}}, "game.T_p"),
        ({"initial_state": {"r_e": 0.0}}, "initial_state.r_e"),
        ({"mesh": {"segments": 1}}, "mesh.segments"),
        ({"mesh": {"segments": 2.5}}, "mesh.segments"),
        ({"mesh": {"rule": "trapezoid"}}, "mesh.rule"),
        ({"leader": "pursuer"}, "leader"),
        ({"schema_version": 2}, "schema_version"),
        ({"t_f_guess": -1}, "t_f_guess"),
        ({"solver": {"tol_constraint": 0}}, "solver.tol_constraint"),
        ({"integrator": {"method": "euler"}}, "integrator.method"),
        ({"compare": {"variables": ["r_x"]}}, "compare.variables"),
        ({"colour": "blue"}, "colour"),
        ({"game": {"T_q": 1}}, "game.T_q"),
        ({"game": []}, "game"),
    ],
)
def test_config_errors_name_the_field(tmp_path, data, field):
    with pytest.raises(ConfigError) as err:
        load_config(write_config(tmp_path, data))
    assert err.value.field == field
    assert field in str(err.value)


def test_config_parse_and_file_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"game": ')
    with pytest.raises(ConfigError, match="parse error"):
        load_config(bad)
    with pytest.raises(ConfigError) as err:
        load_config(tmp_path / "missing.json")
    assert err.value.field == "<file>"
    with pytest.raises(ConfigError):
        from_dict([1, 2])


def test_coasting_evader_variant_accepted():
    cfg = from_dict({"game": {"T_e": 0}})
    assert isinstance(cfg.game, CoastingEvaderParameters)
    assert cfg.game.T_e == 0.0


def test_config_round_trip_is_idempotent(tmp_path):
    raw = {"game": {"T_p": 0.06}, "mesh": {"segments": 12}, "compare": {"variables": ["r_p"]}}
    once = to_dict(from_dict(raw))
    twice = to_dict(from_dict(once))
    assert once == twice
    assert dumps(from_dict(once)) == dumps(from_dict(twice))
    path = tmp_path / "snap.json"
    path.write_text(dumps(from_dict(raw)))
    assert load_config(path) == from_dict(raw)


def test_overrides():
    cfg = with_overrides(RunConfig(), segments=8, rule="gauss-lobatto-5", output_dir=None)
    assert (cfg.segments, cfg.rule, cfg.output_dir) == (8, "gauss-lobatto-5", "runs")
    with pytest.raises(ConfigError):
        with_overrides(RunConfig(), segments=0)


# --- trajectory files ------------------------------------------------------------------


def _random_trajectory(n=9, evader=True, seed=0):
    rng = np.random.default_rng(seed)
    states = rng.standard_normal((8, n))
    states[[2, 6]] = 1.0 + rng.random((2, n))
    return Trajectory(
        t=np.sort(rng.random(n)) + np.arange(n),
        states=states,
        costates=rng.standard_normal((4, n)) / 3.0,
        delta_p=rng.uniform(-3, 3, n),
        delta_e=rng.uniform(-3, 3, n),
        t_f=0.0,
        singular=np.zeros(n, dtype=bool),
        evader_costates=rng.standard_normal((4, n)) if evader else None,
    )


@pytest.mark.parametrize("evader", [True, False])
def test_csv_round_trip_is_exact(tmp_path, evader):
    traj = _random_trajectory(evader=evader)
    path = write_trajectory(traj, tmp_path / "t.csv")
    back = read_trajectory(path)
    assert np.array_equal(back.t, traj.t)
    assert np.array_equal(back.states, traj.states)
    assert np.array_equal(back.costates, traj.costates)
    assert np.array_equal(back.delta_p, np.unwrap(traj.delta_p))
    assert np.array_equal(back.delta_e, np.unwrap(traj.delta_e))
    assert back.t_f == traj.t[-1]
    if evader:
        assert np.array_equal(back.evader_costates, traj.evader_costates)
    else:
        assert back.evader_costates is None
    header = path.read_text().splitlines()[0]
    assert header == ",".join(COLUMNS)


def test_transcribed_solution_leaves_evader_costates_empty(benchmark):
    lines = benchmark.solve_csv.read_text().splitlines()
    i = COLUMNS.index("lam_vre")
    for line in lines[1:]:
        cells = line.split(",")
        assert cells[i : i + 4] == ["", "", "", ""]
        assert all(c for j, c in enumerate(cells) if not i <= j < i + 4)
    full = benchmark.shoot_csv.read_text().splitlines()[1].split(",")
    assert all(full)


def test_read_trajectory_errors(tmp_path):
    p = tmp_path / "x.csv"
    with pytest.raises(TrajectoryFormatError):
        read_trajectory(p)
    p.write_text("")
    with pytest.raises(TrajectoryFormatError):
        read_trajectory(p)
    p.write_text("a,b\n1,2\n")
    with pytest.raises(TrajectoryFormatError, match="header"):
        read_trajectory(p)
    good = write_trajectory(_random_trajectory(), tmp_path / "g.csv").read_text().splitlines()
    p.write_text("\n".join([good[0], good[1].replace(good[1].split(",")[3], "abc", 1)]) + "\n")
    with pytest.raises(TrajectoryFormatError):
        read_trajectory(p)
    cells = good[2].split(",")
    cells[COLUMNS.index("lam_vre")] = ""
    p.write_text("\n".join([good[0], good[1], ",".join(cells)]) + "\n")
    with pytest.raises(TrajectoryFormatError, match="partially"):
        read_trajectory(p)
    p.write_text("\n".join([good[0], good[1] + ",1"]) + "\n")
    with pytest.raises(TrajectoryFormatError, match="fields"):
        read_trajectory(p)


# --- runs -----------------------------------------------------------------------------------


def test_solve_run_directory_is_complete_and_reproducible(tmp_path):
    # a deliberately truncated solve: exercises the non-convergence path too
    cfg = from_dict({"mesh": {"segments": 4}, "solver": {"max_major_iterations": 3}})
    a = run_solve(cfg, tmp_path / "a")
    run_solve(cfg, tmp_path / "b")
    assert a.exit_code == EXIT_NOT_CONVERGED
    assert {p.name for p in (tmp_path / "a").iterdir()} == RUN_FILES
    for name in RUN_FILES:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    status = json.loads((tmp_path / "a" / "status.json").read_text())
    assert status["status"] == "not_converged" and status["exit_code"] == 2
    assert load_config(tmp_path / "a" / "config.json") == cfg


def test_benchmark_run_directories(benchmark):
    for run in (benchmark.solve, benchmark.shoot):
        assert run.exit_code == EXIT_OK
        assert RUN_FILES <= {p.name for p in run.out_dir.iterdir()}
        assert json.loads((run.out_dir / "status.json").read_text())["status"] == "converged"
    d = json.loads((benchmark.shoot.out_dir / "diagnostics.json").read_text())
    assert d["residual_norm"] <= 1e-8
    assert d["lam_theta_p_spread"] <= 1e-9


def test_shoot_rerun_is_bit_identical(benchmark, tmp_path):
    run_shoot(benchmark.cfg, benchmark.solve_csv, tmp_path / "again")
    for name in RUN_FILES:
        assert (tmp_path / "again" / name).read_bytes() == (benchmark.shoot.out_dir / name).read_bytes()


def test_written_shooting_trajectory_invariants(benchmark):
    traj = read_trajectory(benchmark.shoot_csv)
    assert np.ptp(traj.costates[3]) <= 1e-9
    assert traj.t[-1] == pytest.approx(3.01, rel=0.05)


def test_coasting_evader_is_caught_sooner(benchmark, tmp_path):
    cfg = from_dict({"game": {"T_e": 0.0}})
    run = run_solve(cfg, tmp_path / "coast")
    assert run.exit_code == EXIT_OK
    # regression pair: 2.8468 (coasting) against 2.8908 (benchmark)
    assert run.trajectory.t_f < benchmark.solve.trajectory.t_f
    assert run.trajectory.t_f == pytest.approx(2.84679, abs=1e-4)


def test_shoot_missing_seed(tmp_path):
    with pytest.raises(TrajectoryFormatError):
        run_shoot(RunConfig(), tmp_path / "nope.csv", tmp_path / "out")


# --- compare ----------------------------------------------------------------------------------


def test_compare_with_itself(benchmark, tmp_path):
    report = run_compare(benchmark.shoot_csv, benchmark.shoot_csv, out_path=tmp_path / "r.json")
    assert report.t_f_rel_diff == 0.0
    assert all(v == 0.0 for v in report.deviations.values())
    assert report.passed
    assert json.loads((tmp_path / "r.json").read_text())["passed"] is True


def test_compare_final_time_difference():
    a, b = _random_trajectory(seed=1), _random_trajectory(seed=2)
    a.t = a.t * 2.89 / a.t[-1]
    b.t = b.t * 3.01 / b.t[-1]
    a.t_f, b.t_f = 2.89, 3.01
    report = compare_trajectories(a, b)
    assert report.t_f_rel_diff == pytest.approx(0.0415, abs=5e-4)
    assert all(v >= 0 for v in report.deviations.values())


def test_compare_time_shift_against_independent_interpolation(benchmark, tmp_path):
    src = read_trajectory(benchmark.shoot_csv)
    shift = 0.01
    shifted = tmp_path / "shifted.csv"
    write_trajectory(
        Trajectory(src.t + shift, src.states, src.costates, src.delta_p, src.delta_e,
                   src.t_f + shift, src.singular, src.evader_costates),
        shifted,
    )
    report = run_compare(benchmark.shoot_csv, shifted)

    # oracle: resample both raw column sets with scipy on the overlap grid
    header, a = read_table(benchmark.shoot_csv)
    _, b = read_table(shifted)
    grid = np.linspace(shift, a[-1, 0], 200)
    for name in ("r_p", "th_e", "lam_rp", "delta_e"):
        j = header.index(name)
        ya = interp1d(a[:, 0], a[:, j])(grid)
        yb = interp1d(b[:, 0], b[:, j])(grid)
        assert report.deviations[name] == pytest.approx(np.max(np.abs(ya - yb)), rel=1e-9, abs=1e-15)
    assert report.deviations["th_e"] > 0


def test_compare_errors(tmp_path):
    a = _random_trajectory()
    b = _random_trajectory()
    b.t = b.t + 100.0
    with pytest.raises(ValueError, match="overlap"):
        compare_trajectories(a, b)


# --- plot data --------------------------------------------------------------------------------


def test_plot_data(benchmark, tmp_path):
    paths = emit_plot_data(benchmark.shoot_csv, tmp_path / "plots")
    assert {p.name for p in paths} == {
        "planar_paths.csv", "pursuer_costates.csv", "pursuer_velocity.csv",
        "evader_velocity.csv", "controls.csv",
    }
    traj = read_trajectory(benchmark.shoot_csv)
    header, xy = read_table(tmp_path / "plots" / "planar_paths.csv")
    assert header == ["t", "x_p", "y_p", "x_e", "y_e"]
    assert xy.shape[0] == traj.t.size
    assert np.max(np.abs(xy[:, 1] ** 2 + xy[:, 2] ** 2 - traj.states[2] ** 2)) <= 1e-12
    assert np.max(np.abs(xy[:, 3] ** 2 + xy[:, 4] ** 2 - traj.states[6] ** 2)) <= 1e-12
    for p in paths:
        h, data = read_table(p)
        assert len(h) >= 2 and h[0] == "t" and data.shape[0] == traj.t.size
    _, ctrl = read_table(tmp_path / "plots" / "controls.csv")
    assert abs(ctrl[-1, 2] - ctrl[-1, 1]) < 0.3


# --- command line ---------------------------------------------------------------------------


def test_cli_solve_nonconvergence_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path, {"solver": {"max_major_iterations": 2}})
    code = cli.main(["solve", "--config", str(cfg), "--mesh", "3", "--out", str(tmp_path / "s")])
    assert code == EXIT_NOT_CONVERGED
    assert json.loads((tmp_path / "s" / "config.json").read_text())["mesh"]["segments"] == 3
    assert "max_iter" in capsys.readouterr().out


def test_cli_io_errors(tmp_path, capsys):
    bad = write_config(tmp_path, {"game": {"T_p": 0}})
    assert cli.main(["solve", "--config", str(bad)]) == EXIT_IO
    assert "game.T_p" in capsys.readouterr().err
    assert cli.main(["shoot", "--seed", str(tmp_path / "none.csv"), "--out", str(tmp_path / "o")]) == EXIT_IO
    assert cli.main(["plotdata", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == EXIT_IO
    assert cli.main(["frobnicate"]) == EXIT_IO
    assert cli.main(["solve", "--rule", "nope"]) == EXIT_IO


def test_cli_compare_and_plotdata(benchmark, tmp_path, capsys):
    shutil.copy(benchmark.shoot_csv, tmp_path / "b.csv")
    code = cli.main(["compare", str(benchmark.solve_csv), str(tmp_path / "b.csv"), "--out", str(tmp_path / "rep.json")])
    report = json.loads(capsys.readouterr().out)
    assert code == EXIT_OK and report["passed"]
    assert cli.main(["compare", str(benchmark.solve_csv), str(tmp_path / "b.csv"), "--tf-tol", "1e-12"]) == EXIT_NOT_CONVERGED
    assert cli.main(["plotdata", str(tmp_path / "b.csv"), "--out", str(tmp_path / "plots")]) == EXIT_OK
    assert (tmp_path / "plots" / "controls.csv").exists()
