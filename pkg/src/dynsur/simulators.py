"""Reference solvers for the two benchmark systems.

Both systems are integrated with classical fixed-step RK4 on the
excitation grid, with linear interpolation of the excitation at
half-steps. Batched variants integrate many excitations at once (the
dominant cost of reference Monte Carlo ensembles).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DivergenceError
from .series import TimeGrid, Trajectory

_OVERFLOW_GUARD = 1e12


@dataclass(frozen=True)
class QuarterCarParams:
    """Two-mass suspension with a cubic spring between the masses.

    Values are used verbatim (the benchmark is treated as
    nondimensionalized; converting the mixed units would change the
    dynamics)."""

    k1: float = 5000.0
    k2: float = 1000.0
    m1: float = 50.0
    m2: float = 10.0
    c: float = 50.0

    def __post_init__(self):
        if min(self.k1, self.k2, self.m1, self.m2, self.c) <= 0:
            raise ConfigError("quarter-car parameters must be strictly positive")


@dataclass(frozen=True)
class BoucWenParams:
    """Hysteretic single-degree-of-freedom oscillator."""

    zeta: float = 0.02
    omega: float = 10.0
    rho: float = 0.2
    gamma: float = 0.5
    alpha: float = 25.0
    beta: float = 25.0
    n: float = 1.0

    def __post_init__(self):
        if self.zeta <= 0 or self.omega <= 0:
            raise ConfigError("zeta and omega must be positive")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError("rho must be in [0, 1]")
        if self.alpha + self.beta <= 0:
            raise ConfigError("alpha + beta must be positive")
        if self.n < 1:
            raise ConfigError("n < 1 makes |z|^(n-1) singular at z = 0")

    @property
    def z_bound(self) -> float:
        """Fixed point of the z-equation: |z| never exceeds
        (gamma/(alpha+beta))^(1/n)."""
        return (self.gamma / (self.alpha + self.beta)) ** (1.0 / self.n)


@dataclass
class SimResult:
    """Simulated trajectories plus solver diagnostics."""

    outputs: dict[str, Trajectory]
    step_count: int
    max_state_norm: float

    def __getitem__(self, label: str) -> Trajectory:
        return self.outputs[label]


def _rk4(rhs, y0, excitation: np.ndarray, dt: float, substeps: int = 1):
    """Batched fixed-step RK4.

    ``y0`` is (batch, d); ``excitation`` is (batch, n_steps). The
    excitation is linearly interpolated at RK half-steps. Returns the
    state history (batch, n_steps, d) and the largest state norm seen.
    """
    batch, d = y0.shape
    n = excitation.shape[1]
    out = np.empty((batch, n, d))
    out[:, 0] = y0
    y = y0.copy()
    h = dt / substeps
    max_norm = float(np.max(np.abs(y0))) if y0.size else 0.0
    for k in range(n - 1):
        x0, x1 = excitation[:, k], excitation[:, k + 1]
        for s in range(substeps):
            f0 = (s) / substeps
            f1 = (s + 1) / substeps
            fm = (s + 0.5) / substeps
            xa = x0 + (x1 - x0) * f0
            xm = x0 + (x1 - x0) * fm
            xb = x0 + (x1 - x0) * f1
            k1 = rhs(y, xa)
            k2 = rhs(y + 0.5 * h * k1, xm)
            k3 = rhs(y + 0.5 * h * k2, xm)
            k4 = rhs(y + h * k3, xb)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        step_max = float(np.max(np.abs(y)))
        if not np.isfinite(step_max) or step_max > _OVERFLOW_GUARD:
            raise DivergenceError(
                f"state norm exceeded {_OVERFLOW_GUARD:g} at step {k + 1}",
                step=k + 1,
            )
        max_norm = max(max_norm, step_max)
        out[:, k + 1] = y
    return out, max_norm


def quarter_car_rhs(params: QuarterCarParams):
    k1, k2, m1, m2, c = params.k1, params.k2, params.m1, params.m2, params.c

    def rhs(state, x):
        y1, v1, y2, v2 = state[:, 0], state[:, 1], state[:, 2], state[:, 3]
        cubic = k2 * (y2 - y1) ** 3
        damp = c * (v2 - v1)
        a2 = (-cubic - damp) / m2
        a1 = (cubic + damp + k1 * (x - y1)) / m1
        return np.stack([v1, a1, v2, a2], axis=1)

    return rhs


def bouc_wen_rhs(params: BoucWenParams):
    zeta, omega = params.zeta, params.omega
    rho, gam, alpha, beta, n = (
        params.rho,
        params.gamma,
        params.alpha,
        params.beta,
        params.n,
    )

    def rhs(state, x):
        y, v, z = state[:, 0], state[:, 1], state[:, 2]
        a = -2.0 * zeta * omega * v - omega**2 * (rho * y + (1.0 - rho) * z) - x
        if n == 1:
            # |z|^(n-1) z reduces exactly to z, avoiding 0**0
            zdot = gam * v - alpha * np.abs(v) * z - beta * v * np.abs(z)
        else:
            zdot = (
                gam * v
                - alpha * np.abs(v) * np.abs(z) ** (n - 1) * z
                - beta * v * np.abs(z) ** n
            )
        return np.stack([v, a, zdot], axis=1)

    return rhs


def simulate_quarter_car_batch(
    params: QuarterCarParams,
    excitations: np.ndarray,
    grid: TimeGrid,
    substeps: int = 1,
):
    """Responses of many excitations at once; returns label -> (batch, n)."""
    excitations = np.atleast_2d(excitations)
    y0 = np.zeros((excitations.shape[0], 4))
    hist, max_norm = _rk4(
        quarter_car_rhs(params), y0, excitations, grid.dt, substeps
    )
    arrays = {
        "y1": hist[:, :, 0],
        "v1": hist[:, :, 1],
        "y2": hist[:, :, 2],
        "v2": hist[:, :, 3],
    }
    return arrays, max_norm


def simulate_quarter_car(
    params: QuarterCarParams, excitation: Trajectory, substeps: int = 1
) -> SimResult:
    """Integrate the quarter-car from rest under one road excitation."""
    arrays, max_norm = simulate_quarter_car_batch(
        params, excitation.values[None, :], excitation.grid, substeps
    )
    outputs = {
        label: Trajectory(excitation.grid, arr[0], label)
        for label, arr in arrays.items()
    }
    return SimResult(outputs, excitation.grid.n_steps, max_norm)


def simulate_bouc_wen_batch(
    params: BoucWenParams,
    excitations: np.ndarray,
    grid: TimeGrid,
    substeps: int = 1,
):
    excitations = np.atleast_2d(excitations)
    y0 = np.zeros((excitations.shape[0], 3))
    hist, max_norm = _rk4(bouc_wen_rhs(params), y0, excitations, grid.dt, substeps)
    arrays = {
        "y": hist[:, :, 0],
        "ydot": hist[:, :, 1],
        "z": hist[:, :, 2],
    }
    return arrays, max_norm


def simulate_bouc_wen(
    params: BoucWenParams, excitation: Trajectory, substeps: int = 1
) -> SimResult:
    """Integrate the Bouc-Wen oscillator from rest under one ground
    acceleration."""
    arrays, max_norm = simulate_bouc_wen_batch(
        params, excitation.values[None, :], excitation.grid, substeps
    )
    outputs = {
        label: Trajectory(excitation.grid, arr[0], label)
        for label, arr in arrays.items()
    }
    return SimResult(outputs, excitation.grid.n_steps, max_norm)
