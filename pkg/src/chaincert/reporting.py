"""Result persistence: summary JSON, per-trial CSV, trajectory CSV, plot data.

Everything written here is deterministic given the payload: floats go through
``repr`` (shortest round-trip form), rows keep their trial order, and the only
volatile summary fields are the timestamp and software version, which
``comparable_summary`` strips for equality checks. CSV cells never need
quoting because headers are fixed identifiers and values are numbers.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from . import __version__
from .errors import InvalidInputError
from .generators import Trajectory
from .metric import MetricSpec, SeedSpec

VOLATILE_SUMMARY_KEYS = ("created_at", "software_version")

PLOT_KINDS = {
    "contraction_curve": ("n", "w1"),
    "coverage_sweep": ("n", "coverage_pop", "coverage_emp", "confidence"),
}


@dataclass(frozen=True)
class ResultBundle:
    """One command's outputs: a summary object plus optional per-trial rows."""

    kind: str
    summary: dict
    row_header: tuple = ()
    rows: tuple = ()

    def __post_init__(self):
        if self.rows and not self.row_header:
            raise InvalidInputError("result rows need a header")
        for row in self.rows:
            if len(row) != len(self.row_header):
                raise InvalidInputError(
                    f"row width {len(row)} does not match header width {len(self.row_header)}"
                )


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, str):
        if "," in value or "\n" in value:
            raise InvalidInputError(f"CSV cell may not contain separators: {value!r}")
        return value
    raise InvalidInputError(f"unsupported CSV cell type {type(value).__name__}")


def _jsonable(value: Any) -> Any:
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    if isinstance(value, (str, type(None))):
        return value
    if isinstance(value, SeedSpec):
        return {"master_seed": int(value.master_seed), "stream_index": int(value.stream_index)}
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in np.asarray(value).tolist()] \
            if isinstance(value, np.ndarray) else [_jsonable(v) for v in value]
    raise InvalidInputError(f"cannot serialize {type(value).__name__} into a summary")


def write_rows_csv(header, rows, path: str) -> None:
    lines = [",".join(str(h) for h in header)]
    lines.extend(",".join(_cell(v) for v in row) for row in rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_summary(bundle: ResultBundle, path: str, config_sha256: Optional[str] = None) -> dict:
    """Write the summary JSON; returns the payload that was written."""
    payload = {str(k): _jsonable(v) for k, v in bundle.summary.items()}
    payload["kind"] = bundle.kind
    payload["software_version"] = __version__
    payload["created_at"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    if config_sha256 is not None:
        payload["config_sha256"] = config_sha256
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    return payload


def comparable_summary(payload: dict) -> dict:
    """Summary minus the fields allowed to differ between identical runs."""
    return {k: v for k, v in payload.items() if k not in VOLATILE_SUMMARY_KEYS}


def read_summary(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# -- trajectory files ------------------------------------------------------------


def trajectory_header(metric: MetricSpec) -> list:
    return (["step"]
            + [f"x_{i}" for i in range(metric.dim_x)]
            + [f"y_{i}" for i in range(metric.dim_y)])


def write_trajectory_csv(traj: Trajectory, path: str) -> None:
    xs = np.asarray(traj.xs, dtype=float).reshape(len(traj), -1)
    ys = np.asarray(traj.ys, dtype=float).reshape(len(traj), -1)
    rows = [(t, *xs[t], *ys[t]) for t in range(len(traj))]
    write_rows_csv(trajectory_header(traj.metric), rows, path)


def read_trajectory_csv(path: str, kappa: float) -> Trajectory:
    """Load a trajectory written by ``write_trajectory_csv``.

    The file carries no draw provenance, so the result has a placeholder seed
    and an ``external`` initial law; it supports risk evaluation and window
    selection but not suffix regeneration.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidInputError(f"trajectory file {path!r} is empty") from None
        body = [row for row in reader if row]
    dim_x = sum(1 for name in header if name.startswith("x_"))
    dim_y = sum(1 for name in header if name.startswith("y_"))
    if header != trajectory_header(MetricSpec(dim_x or 1, dim_y or 1, kappa)) or not body:
        raise InvalidInputError(
            f"trajectory file {path!r} needs header step,x_0..,y_0.. and at least one row"
        )
    data = np.asarray([[float(v) for v in row] for row in body], dtype=float)
    if data.shape[1] != 1 + dim_x + dim_y:
        raise InvalidInputError(f"trajectory file {path!r} has ragged rows")
    metric = MetricSpec(dim_x, dim_y, kappa)
    return Trajectory(
        xs=data[:, 1 : 1 + dim_x],
        ys=data[:, 1 + dim_x :],
        theta_indices=np.zeros(max(data.shape[0] - 1, 0), dtype=int),
        seed=SeedSpec(0),
        draw_offset=0,
        metric=metric,
        initial_law=("external", path),
    )


def read_atoms_csv(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Read an atom list: header x_0..x_{dx-1},y_0..y_{dy-1}, one atom per row."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidInputError(f"atom file {path!r} is empty") from None
        body = [row for row in reader if row]
    dim_x = sum(1 for name in header if name.startswith("x_"))
    dim_y = sum(1 for name in header if name.startswith("y_"))
    expected = [f"x_{i}" for i in range(dim_x)] + [f"y_{i}" for i in range(dim_y)]
    if dim_x == 0 or dim_y == 0 or header != expected or not body:
        raise InvalidInputError(
            f"atom file {path!r} needs header x_0..,y_0.. and at least one row"
        )
    data = np.asarray([[float(v) for v in row] for row in body], dtype=float)
    if data.shape[1] != dim_x + dim_y:
        raise InvalidInputError(f"atom file {path!r} has ragged rows")
    return data[:, :dim_x], data[:, dim_x:]


def read_loss_matrix_csv(path: str) -> np.ndarray:
    """Read a headerless loss matrix: one row per hypothesis, one column per step."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        body = [row for row in csv.reader(fh) if row]
    if not body:
        raise InvalidInputError(f"loss matrix file {path!r} is empty")
    try:
        values = np.asarray([[float(v) for v in row] for row in body], dtype=float)
    except ValueError:
        raise InvalidInputError(
            f"loss matrix file {path!r} must be numeric with no header"
        ) from None
    return values


def emit_plot_data(bundle: ResultBundle, kind: str, path: str) -> None:
    """Write a tidy one-observation-per-row CSV for external plotting."""
    if kind not in PLOT_KINDS:
        raise InvalidInputError(f"unknown plot kind {kind!r}; known: {sorted(PLOT_KINDS)}")
    if bundle.kind != kind:
        raise InvalidInputError(f"bundle kind {bundle.kind!r} does not match plot kind {kind!r}")
    header = PLOT_KINDS[kind]
    if bundle.rows and tuple(bundle.row_header) != header:
        raise InvalidInputError(
            f"bundle rows have header {bundle.row_header}, plot kind needs {header}"
        )
    write_rows_csv(header, bundle.rows, path)
