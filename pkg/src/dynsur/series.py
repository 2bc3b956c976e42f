"""Time grids, trajectories and lagged regression matrices.

These types are the common currency between the excitation generators,
the reference simulators and every surrogate variant. Lags are always
integer step counts on a uniform grid; all arrays are dense and
immutable after construction.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid: times are t0 + k*dt, computed directly (never by
    repeated addition)."""

    t0: float
    dt: float
    n_steps: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 2:
            raise ConfigError(f"n_steps must be >= 2, got {self.n_steps}")

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps)

    def time_at(self, k: int) -> float:
        return self.t0 + k * self.dt

    @property
    def t_max(self) -> float:
        return self.t0 + (self.n_steps - 1) * self.dt

    def steps_from_seconds(self, seconds: float) -> int:
        """Convert a user-facing lag in seconds to a step count.

        Errors out when the value is not (numerically) a grid multiple.
        """
        steps = round(seconds / self.dt)
        if abs(seconds - steps * self.dt) > 1e-6 * self.dt:
            raise ConfigError(
                f"lag {seconds} s is not a multiple of dt={self.dt} s"
            )
        return steps


@dataclass(frozen=True)
class Trajectory:
    """One variable sampled on a TimeGrid. Values are finite and read-only."""

    grid: TimeGrid
    values: np.ndarray
    label: str = "y"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.shape[0] != self.grid.n_steps:
            raise DimensionError(
                f"trajectory '{self.label}': {v.shape} values for "
                f"{self.grid.n_steps} grid steps"
            )
        if not np.all(np.isfinite(v)):
            raise ConfigError(f"trajectory '{self.label}' contains non-finite values")
        object.__setattr__(self, "values", _freeze(v))

    def __len__(self) -> int:
        return self.grid.n_steps

    def with_label(self, label: str) -> "Trajectory":
        return Trajectory(self.grid, self.values, label)


@dataclass(frozen=True)
class Scenario:
    """One realization: exogenous excitations, static parameters and
    (optionally) the simulated responses, all on a shared grid."""

    excitations: tuple[Trajectory, ...]
    static_params: np.ndarray = field(default_factory=lambda: np.empty(0))
    response: dict[str, Trajectory] | None = None

    def __post_init__(self):
        object.__setattr__(self, "excitations", tuple(self.excitations))
        object.__setattr__(
            self, "static_params", _freeze(np.atleast_1d(self.static_params))
        )
        grids = {t.grid for t in self.all_trajectories()}
        if len(grids) > 1:
            raise ConfigError("scenario trajectories do not share one TimeGrid")
        if not self.excitations:
            raise ConfigError("scenario needs at least one excitation")

    def all_trajectories(self):
        yield from self.excitations
        if self.response:
            yield from self.response.values()

    @property
    def grid(self) -> TimeGrid:
        return self.excitations[0].grid

    def trajectory(self, label: str) -> Trajectory:
        for t in self.all_trajectories():
            if t.label == label:
                return t
        raise ConfigError(f"scenario has no trajectory labelled '{label}'")

    def has_label(self, label: str) -> bool:
        return any(t.label == label for t in self.all_trajectories())

    def with_response(self, response: dict[str, Trajectory]) -> "Scenario":
        return Scenario(self.excitations, self.static_params, response)


@dataclass(frozen=True)
class LaggedMatrix:
    """Matrix of delayed values: entry (r, c) is the variable at step
    t_min_index + r - lags[c]."""

    variable: str
    lags: tuple[int, ...]
    rows: np.ndarray
    t_min_index: int

    def __post_init__(self):
        object.__setattr__(self, "rows", _freeze(self.rows))
        object.__setattr__(self, "lags", tuple(self.lags))


def build_lagged_matrix(
    traj: Trajectory, lags, t_min_index: int
) -> LaggedMatrix:
    """Build the delayed-value matrix of one variable.

    Row count is N - t_min_index; every entry is a value of the source
    trajectory (no interpolation).
    """
    lags = tuple(int(l) for l in lags)
    if not lags:
        raise ConfigError("lags must be nonempty")
    if list(lags) != sorted(set(lags)):
        raise ConfigError(f"lags must be sorted and distinct, got {lags}")
    if min(lags) < 0:
        raise ConfigError(f"negative lag in {lags}")
    if max(lags) > t_min_index:
        raise ConfigError(
            f"max lag {max(lags)} exceeds t_min_index {t_min_index}"
        )
    n = len(traj)
    if not t_min_index < n:
        raise ConfigError(f"t_min_index {t_min_index} >= trajectory length {n}")
    n_rows = n - t_min_index
    idx = t_min_index + np.arange(n_rows)[:, None] - np.asarray(lags)[None, :]
    return LaggedMatrix(traj.label, lags, traj.values[idx], t_min_index)


def concat_designs(blocks):
    """Row-stack (matrix, output) blocks from multiple traces, in order."""
    blocks = list(blocks)
    if not blocks:
        raise ConfigError("no design blocks to concatenate")
    n_cols = blocks[0][0].shape[1]
    for m, y in blocks:
        if m.shape[1] != n_cols:
            raise DimensionError(
                f"design block has {m.shape[1]} columns, expected {n_cols}"
            )
        if m.shape[0] != len(y):
            raise DimensionError(
                f"design block rows {m.shape[0]} != output length {len(y)}"
            )
    return (
        np.vstack([m for m, _ in blocks]),
        np.concatenate([np.asarray(y, dtype=float) for _, y in blocks]),
    )


def subsample_rows(matrix, vector, row_indices):
    """Select rows (in the order given, duplicates allowed) from a design."""
    idx = np.asarray(row_indices, dtype=int)
    n = matrix.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"row index out of bounds for {n} rows")
    return matrix[idx], np.asarray(vector)[idx]


def draw_row_indices(n_total, k, rng, replace=True, stride=None):
    """Row indices for design subsampling.

    Default is uniform with replacement; alternatives are a
    without-replacement draw and a deterministic strided selection.
    """
    if stride is not None:
        return np.arange(0, n_total, stride)[:k]
    return rng.choice(n_total, size=k, replace=replace)


def cumulative_integral(traj: Trajectory, label: str | None = None) -> Trajectory:
    """Cumulative trapezoidal integral with zero initial value."""
    dt = traj.grid.dt
    v = traj.values
    out = np.empty_like(v)
    out[0] = 0.0
    np.cumsum(0.5 * dt * (v[1:] + v[:-1]), out=out[1:])
    return Trajectory(traj.grid, out, label or f"int_{traj.label}")


# ---------------------------------------------------------------------------
# CSV interchange


def trajectory_to_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", traj.label])
    for t, v in zip(traj.grid.times(), traj.values):
        w.writerow([f"{t:.10g}", f"{v:.17g}"])
    return buf.getvalue()


def trajectories_to_csv(trajs) -> str:
    """Multi-variable CSV: header t,x1,...,y1,... (shared grid)."""
    trajs = list(trajs)
    grid = trajs[0].grid
    if any(t.grid != grid for t in trajs):
        raise ConfigError("trajectories do not share one TimeGrid")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [t.label for t in trajs])
    times = grid.times()
    for k in range(grid.n_steps):
        w.writerow([f"{times[k]:.10g}"] + [f"{t.values[k]:.17g}" for t in trajs])
    return buf.getvalue()


def trajectories_from_csv(text: str) -> list[Trajectory]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][0] != "t":
        raise ConfigError("trajectory CSV must start with a 't,...' header")
    labels = rows[0][1:]
    data = np.array([[float(x) for x in r] for r in rows[1:]])
    if data.shape[0] < 2:
        raise ConfigError("trajectory CSV needs at least 2 rows")
    t = data[:, 0]
    dt = (t[-1] - t[0]) / (len(t) - 1)
    if not np.allclose(np.diff(t), dt, rtol=0, atol=1e-6 * max(dt, 1e-12)):
        raise ConfigError("trajectory CSV time column is not uniform")
    grid = TimeGrid(float(t[0]), float(dt), len(t))
    return [
        Trajectory(grid, data[:, i + 1], label) for i, label in enumerate(labels)
    ]


def trajectory_from_csv(text: str) -> Trajectory:
    trajs = trajectories_from_csv(text)
    if len(trajs) != 1:
        raise ConfigError(f"expected one variable column, found {len(trajs)}")
    return trajs[0]
