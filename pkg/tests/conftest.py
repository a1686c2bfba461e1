import time

import pytest

from semidcnlp.config import RunConfig
from semidcnlp.runs import run_shoot, run_solve

ACCEPTANCE_LINES = []


class Benchmark:
    """One solve plus one shoot of the default configuration, shared per session."""

    def __init__(self, root):
        self.cfg = RunConfig(output_dir=str(root))
        t0 = time.perf_counter()
        self.solve = run_solve(self.cfg, root / "solve")
        t1 = time.perf_counter()
        self.solve_csv = root / "solve" / "trajectory.csv"
        self.shoot = run_shoot(self.cfg, self.solve_csv, root / "shoot")
        t2 = time.perf_counter()
        self.shoot_csv = root / "shoot" / "trajectory.csv"
        self.solve_seconds, self.shoot_seconds = t1 - t0, t2 - t1
        self.game = self.cfg.build_game()


@pytest.fixture(scope="session")
def benchmark(tmp_path_factory):
    return Benchmark(tmp_path_factory.mktemp("benchmark"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
