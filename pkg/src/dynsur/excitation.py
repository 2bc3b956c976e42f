"""Seeded stochastic excitation generators.

Two families feed the benchmarks: a random superposition of harmonics
(road excitation) and a modulated filtered-white-noise ground-motion
process with a time-varying filter frequency and a gamma-type amplitude
envelope calibrated to a target Arias intensity and 5-95% duration.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.stats import gamma as gamma_dist

from .errors import CalibrationError, ConfigError
from .seeding import rng_for
from .series import TimeGrid, Trajectory


@dataclass(frozen=True)
class HarmonicSuperpositionSpec:
    """x(t) = (1/K) sum_i A_i sin(2 pi B_i t + C_i), K uniform on {1..n_omega_max},
    A, B, C i.i.d. uniform on the given intervals."""

    grid: TimeGrid
    n_omega_max: int = 5
    amplitude_range: tuple[float, float] = (-1.0, 1.0)
    frequency_range: tuple[float, float] = (-1.0, 1.0)
    phase_range: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        if self.n_omega_max < 1:
            raise ConfigError("n_omega_max must be >= 1")
        for name in ("amplitude_range", "frequency_range", "phase_range"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ConfigError(f"{name} is empty: ({lo}, {hi})")


def sample_harmonic(
    spec: HarmonicSuperpositionSpec, seed: int, label: str = "x"
) -> Trajectory:
    rng = np.random.default_rng(seed)
    n_omega = int(rng.integers(1, spec.n_omega_max + 1))
    a = rng.uniform(*spec.amplitude_range, n_omega)
    b = rng.uniform(*spec.frequency_range, n_omega)
    c = rng.uniform(*spec.phase_range, n_omega)
    t = spec.grid.times()
    x = np.sin(2.0 * np.pi * b[:, None] * t[None, :] + c[:, None])
    return Trajectory(spec.grid, (a @ x) / n_omega, label)


def harmonic_draws(spec: HarmonicSuperpositionSpec, seed: int):
    """The (N_omega, A, B, C) draws behind :func:`sample_harmonic` for the
    same seed, exposed for verification."""
    rng = np.random.default_rng(seed)
    n_omega = int(rng.integers(1, spec.n_omega_max + 1))
    a = rng.uniform(*spec.amplitude_range, n_omega)
    b = rng.uniform(*spec.frequency_range, n_omega)
    c = rng.uniform(*spec.phase_range, n_omega)
    return n_omega, a, b, c


@dataclass(frozen=True)
class GroundMotionSpec:
    """Modulated filtered-white-noise ground acceleration.

    Arias intensity is handled in units of s*g: I_a[s*g] =
    pi/(2 g^2) * integral of acc(t)^2 dt with acc in m/s^2.
    """

    grid: TimeGrid
    arias_intensity: float = 0.109  # s*g
    effective_duration: float = 7.96  # s, 5-95% Arias
    t_mid: float = 7.78  # s, time of 45% Arias
    omega_mid: float = 4.66 * 2.0 * np.pi  # rad/s
    omega_slope: float = -0.09 * 2.0 * np.pi  # rad/s per s
    filter_damping: float = 0.24
    gravity: float = 9.81

    def __post_init__(self):
        if self.arias_intensity <= 0 or self.effective_duration <= 0:
            raise ConfigError("arias_intensity and effective_duration must be > 0")
        if not 0.0 < self.filter_damping < 1.0:
            raise ConfigError("filter_damping must be in (0, 1)")
        if self.omega_mid <= 0:
            raise ConfigError("omega_mid must be > 0")
        t = self.grid.times()
        if np.any(self.instantaneous_frequency(t) <= 0):
            raise ConfigError(
                "instantaneous filter frequency is nonpositive on the grid"
            )

    def instantaneous_frequency(self, t):
        return self.omega_mid + self.omega_slope * (np.asarray(t) - self.t_mid)


def _calibrate_envelope(spec: GroundMotionSpec):
    """Gamma-type envelope q(t) = c * t^(a-1) * exp(-b t) whose squared
    integral reproduces the Arias targets.

    q(t)^2 is proportional to a gamma density with shape 2a-1 and rate 2b,
    so the 45% quantile pins t_mid and the 5-95% quantile spread pins the
    duration; c scales the total (grid-trapezoid) Arias integral.
    """
    ratio_target = spec.t_mid / spec.effective_duration

    def ratio(shape):
        q05, q45, q95 = gamma_dist.ppf([0.05, 0.45, 0.95], shape)
        return q45 / (q95 - q05) - ratio_target

    try:
        shape = brentq(ratio, 1e-3, 1e6, xtol=1e-12, rtol=1e-14)
    except ValueError as exc:
        raise CalibrationError(
            "no gamma envelope shape reproduces t_mid / D_5_95 = "
            f"{ratio_target:.6g}",
            residuals={"ratio": ratio_target},
        ) from exc
    q05, q45, q95 = gamma_dist.ppf([0.05, 0.45, 0.95], shape)
    scale = spec.effective_duration / (q95 - q05)  # theta = 1/rate of q^2
    rate = 1.0 / scale

    t = spec.grid.times()
    # q^2 before amplitude scaling: gamma(shape, rate) density kernel
    with np.errstate(divide="ignore"):
        log_q2 = np.where(t > 0, (shape - 1) * np.log(np.maximum(t, 1e-300)) - rate * t, -np.inf)
    q2 = np.exp(log_q2 - log_q2.max())
    integral = np.trapezoid(q2, t)
    if not integral > 0:
        raise CalibrationError(
            "degenerate envelope on the grid",
            residuals={"integral": float(integral)},
        )
    # target: pi/(2 g) * int acc^2 dt = I_a[s*g] * g  (acc in m/s^2)
    target = 2.0 * spec.gravity**2 * spec.arias_intensity / np.pi
    q = np.sqrt(q2 * (target / integral))

    # verify the duration actually realized on the (possibly truncating) grid
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (q2[1:] + q2[:-1]) * spec.grid.dt)])
    cum /= cum[-1]
    t05 = np.interp(0.05, cum, t)
    t95 = np.interp(0.95, cum, t)
    resid = abs((t95 - t05) - spec.effective_duration)
    if resid > 1e-2 * spec.effective_duration:
        raise CalibrationError(
            "grid truncates the envelope: achieved 5-95% duration "
            f"{t95 - t05:.4g} s vs target {spec.effective_duration:.4g} s",
            residuals={"duration": float(resid)},
        )
    return q


@functools.lru_cache(maxsize=4)
def _generator_matrix(spec: GroundMotionSpec) -> np.ndarray:
    """Precomputed linear map from one standard-normal draw per step to the
    ground acceleration: superposed unit-variance filter responses scaled
    by the envelope. Depends only on the spec, not the seed."""
    t = spec.grid.times()
    n = spec.grid.n_steps
    zeta = spec.filter_damping
    omega_i = spec.instantaneous_frequency(t)  # frozen at the impulse time
    u = t[:, None] - t[None, :]  # u[k, i] = t_k - t_i
    damp = np.sqrt(1.0 - zeta**2)
    h = np.where(
        u > 0,
        (omega_i[None, :] / damp)
        * np.exp(-zeta * omega_i[None, :] * np.maximum(u, 0.0))
        * np.sin(omega_i[None, :] * damp * np.maximum(u, 0.0)),
        0.0,
    )
    sig = np.sqrt(np.einsum("ki,ki->k", h, h))
    sig[sig == 0] = 1.0  # first rows have no past impulses; output stays 0
    q = _calibrate_envelope(spec)
    return (q / sig)[:, None] * h


def sample_ground_motion(
    spec: GroundMotionSpec, seed: int, label: str = "acc"
) -> Trajectory:
    w = np.random.default_rng(seed).standard_normal(spec.grid.n_steps)
    return Trajectory(spec.grid, _generator_matrix(spec) @ w, label)


def sample_ground_motion_batch(spec: GroundMotionSpec, seeds) -> np.ndarray:
    """Accelerations for many seeds, one row per seed."""
    mat = _generator_matrix(spec)
    out = np.empty((len(seeds), spec.grid.n_steps))
    for i, s in enumerate(seeds):
        out[i] = mat @ np.random.default_rng(int(s)).standard_normal(
            spec.grid.n_steps
        )
    return out


def envelope(spec: GroundMotionSpec) -> np.ndarray:
    """The calibrated deterministic amplitude envelope q(t)."""
    return _calibrate_envelope(spec)


def arias_intensity(traj: Trajectory, gravity: float = 9.81) -> float:
    """Arias intensity in s*g: pi/(2 g^2) * trapezoid(acc^2)."""
    t = traj.grid.times()
    return float(np.pi / (2.0 * gravity**2) * np.trapezoid(traj.values**2, t))


def arias_duration(traj: Trajectory, lo: float = 0.05, hi: float = 0.95) -> float:
    """Time between the lo and hi fractions of the cumulative Arias integral."""
    v2 = traj.values**2
    t = traj.grid.times()
    cum = np.concatenate(
        [[0.0], np.cumsum(0.5 * (v2[1:] + v2[:-1]) * traj.grid.dt)]
    )
    total = cum[-1]
    if total <= 0:
        raise ConfigError("zero-energy trajectory has no Arias duration")
    cum /= total
    return float(np.interp(hi, cum, t) - np.interp(lo, cum, t))


def max_abs_amplitude(traj: Trajectory) -> float:
    """Largest absolute value over the grid."""
    if len(traj) == 0:
        raise ConfigError("empty trajectory")
    return float(np.max(np.abs(traj.values)))
