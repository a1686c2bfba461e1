"""Flat-file persistence: trajectory CSV and JSON documents.

Trajectory files have one header row and a fixed column order.  Numbers are
written with 17 significant digits, so every float64 reads back bit for bit.
Columns a solution does not carry (the evader costates of a transcribed
solution) are left empty.  Angles are written unwrapped.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .collocation import Trajectory
from .game import COSTATE_NAMES, EVADER_COSTATE_NAMES, STATE_NAMES, optimal_pursuer_control

COLUMNS = ("t",) + STATE_NAMES + COSTATE_NAMES + EVADER_COSTATE_NAMES + ("delta_p", "delta_e")
FLOAT_FORMAT = "{:.17g}"


class TrajectoryFormatError(ValueError):
    """A trajectory file is missing, malformed or has the wrong columns."""


def trajectory_table(traj: Trajectory) -> np.ndarray:
    """Rows of the CSV as a float array; absent columns are NaN."""
    n = traj.t.size
    table = np.full((n, len(COLUMNS)), np.nan)
    table[:, 0] = traj.t
    table[:, 1:9] = traj.states.T
    table[:, 9:13] = traj.costates.T
    if traj.evader_costates is not None:
        table[:, 13:17] = traj.evader_costates.T
    table[:, 17] = np.unwrap(traj.delta_p)
    table[:, 18] = np.unwrap(traj.delta_e)
    return table


def write_trajectory(traj: Trajectory, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = trajectory_table(traj)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in table:
            w.writerow(["" if np.isnan(v) else FLOAT_FORMAT.format(v) for v in row])
    return path


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Header and float array of any CSV written by this module (empty -> NaN)."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise TrajectoryFormatError(f"cannot read {path}: {exc.strerror}") from exc
    if not rows:
        raise TrajectoryFormatError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    data = np.full((len(body), len(header)), np.nan)
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise TrajectoryFormatError(f"{path}: row {i + 2} has {len(row)} fields, expected {len(header)}")
        for j, cell in enumerate(row):
            if cell.strip():
                try:
                    data[i, j] = float(cell)
                except ValueError:
                    raise TrajectoryFormatError(
                        f"{path}: row {i + 2}, column {header[j]!r}: not a number ({cell!r})"
                    ) from None
    return header, data


def read_trajectory(path) -> Trajectory:
    """Load a trajectory CSV.

    Singular samples are re-derived from the pursuer's velocity costates, so
    the flag survives the round trip without its own column.
    """
    header, data = read_table(path)
    if tuple(header) != COLUMNS:
        raise TrajectoryFormatError(f"{path}: unexpected header {header}")
    if data.shape[0] < 2:
        raise TrajectoryFormatError(f"{path}: need at least two samples")
    required = [c for c in COLUMNS if c not in EVADER_COSTATE_NAMES]
    for name in required:
        if np.any(np.isnan(data[:, COLUMNS.index(name)])):
            raise TrajectoryFormatError(f"{path}: column {name!r} has empty or missing values")
    evader = data[:, 13:17].T
    if np.all(np.isnan(evader)):
        evader = None
    elif np.any(np.isnan(evader)):
        raise TrajectoryFormatError(f"{path}: evader costate columns are partially filled")
    costates = data[:, 9:13].T
    try:
        return Trajectory(
            t=data[:, 0].copy(),
            states=data[:, 1:9].T.copy(),
            costates=costates.copy(),
            delta_p=data[:, 17].copy(),
            delta_e=data[:, 18].copy(),
            t_f=float(data[-1, 0]),
            singular=np.asarray(optimal_pursuer_control(costates[0], costates[1]).singular),
            evader_costates=None if evader is None else evader.copy(),
        )
    except ValueError as exc:
        raise TrajectoryFormatError(f"{path}: {exc}") from exc


def write_table(path, header, columns) -> Path:
    """Write equal-length columns as a CSV with the module's number format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = [np.asarray(c, dtype=float) for c in columns]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([FLOAT_FORMAT.format(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def write_json(path, obj) -> Path:
    """Deterministic JSON (sorted keys, non-finite numbers as null)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())
