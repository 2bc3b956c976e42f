"""First-passage failure probability estimation from trajectory ensembles.

The cumulative failure event "response exceeds the admissible threshold
at any time" reduces to thresholding the per-trajectory maximum
response, so estimation works on vectors of maxima. Confidence bounds
are exact (Clopper-Pearson) binomial intervals.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import beta as beta_dist

from .errors import ConfigError
from .series import Trajectory


@dataclass(frozen=True)
class FailureSpec:
    """Threshold excess of one response variable; mode 'absolute' fails on
    |y| > y_adm, 'signed' on y > y_adm."""

    response_label: str
    threshold: float
    mode: str = "absolute"

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise ConfigError("threshold must be finite")
        if self.mode not in ("absolute", "signed"):
            raise ConfigError(f"unknown failure mode '{self.mode}'")


@dataclass
class ReliabilityCurve:
    """Failure probability and reliability index versus threshold."""

    thresholds: np.ndarray
    pf: np.ndarray
    beta: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_samples: int

    def beta_at(self, threshold: float) -> float:
        """Reliability index at an arbitrary threshold, recomputed from the
        stored sample size and interpolated pf."""
        pf = float(np.interp(threshold, self.thresholds, self.pf))
        return reliability_index(pf)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "pf", "beta", "ci_low", "ci_high"])
        for row in zip(self.thresholds, self.pf, self.beta, self.ci_low, self.ci_high):
            w.writerow([f"{v:.12g}" for v in row])
        return buf.getvalue()


def max_response(traj: Trajectory, mode: str = "absolute") -> float:
    """Per-trajectory maximum (absolute or signed) response."""
    if mode == "absolute":
        return float(np.max(np.abs(traj.values)))
    if mode == "signed":
        return float(np.max(traj.values))
    raise ConfigError(f"unknown failure mode '{mode}'")


def max_responses(values: np.ndarray, mode: str = "absolute") -> np.ndarray:
    """Row-wise maxima of a (batch x n_steps) response array."""
    if mode == "absolute":
        return np.max(np.abs(values), axis=1)
    if mode == "signed":
        return np.max(values, axis=1)
    raise ConfigError(f"unknown failure mode '{mode}'")


def estimate_pf(maxima, threshold: float, confidence: float = 0.95):
    """MCS estimator of the exceedance probability with exact binomial CI."""
    m = np.asarray(maxima, dtype=float)
    if m.size < 1:
        raise ConfigError("need at least one sample")
    n = m.size
    k = int(np.count_nonzero(m > threshold))
    pf = k / n
    alpha = 1.0 - confidence
    lo = 0.0 if k == 0 else float(beta_dist.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta_dist.ppf(1 - alpha / 2, k + 1, n - k))
    return pf, (lo, hi)


def pf_curve(maxima, thresholds, confidence: float = 0.95) -> ReliabilityCurve:
    """Exceedance probability per threshold over one sample of maxima."""
    thresholds = np.asarray(thresholds, dtype=float)
    if np.any(np.diff(thresholds) < 0):
        raise ConfigError("thresholds must be sorted ascending")
    m = np.sort(np.asarray(maxima, dtype=float))
    n = m.size
    # count of maxima strictly above each threshold
    counts = n - np.searchsorted(m, thresholds, side="right")
    pf = counts / n
    alpha = 1.0 - confidence
    lo = np.where(
        counts == 0, 0.0, beta_dist.ppf(alpha / 2, counts, n - counts + 1)
    )
    hi = np.where(
        counts == n, 1.0, beta_dist.ppf(1 - alpha / 2, counts + 1, n - counts)
    )
    betas = np.array([reliability_index(p) for p in pf])
    return ReliabilityCurve(thresholds, pf, betas, lo, hi, n)


# ---------------------------------------------------------------------------
# Standard-normal quantile: rational approximation + Newton refinement
# against the complementary error function.

_A = (
    -3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
    1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00,
)
_B = (
    -5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
    6.680131188771972e01, -1.328068155288572e01,
)
_C = (
    -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
    -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00,
)
_D = (
    7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
    3.754408661907416e00,
)


def _ndtri(p: float) -> float:
    """Inverse standard normal CDF (Acklam's rational approximation,
    polished by two Newton steps on Phi(x) - p via erfc)."""
    if p <= 0.0:
        return -math.inf
    if p >= 1.0:
        return math.inf
    p_low, p_high = 0.02425, 1 - 0.02425
    if p < p_low:
        q = math.sqrt(-2 * math.log(p))
        x = (
            ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        ) / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    elif p <= p_high:
        q = p - 0.5
        r = q * q
        x = (
            (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5])
            * q
            / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1)
        )
    else:
        q = math.sqrt(-2 * math.log(1 - p))
        x = -(
            ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        ) / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    # Newton refinement: Phi(x) = erfc(-x/sqrt(2))/2
    for _ in range(2):
        cdf = 0.5 * math.erfc(-x / math.sqrt(2.0))
        pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        if pdf == 0.0:
            break
        x -= (cdf - p) / pdf
    return x


def reliability_index(pf: float) -> float:
    """beta = -Phi^{-1}(pf); +/- infinity sentinels at pf in {0, 1}."""
    if pf <= 0.0:
        return math.inf
    if pf >= 1.0:
        return -math.inf
    return -_ndtri(pf)


def standard_normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def response_summary(maxima, bins: int = 50):
    """Histogram counts/edges plus the empirical CDF table of the maxima."""
    if bins < 1:
        raise ConfigError("bins must be >= 1")
    m = np.sort(np.asarray(maxima, dtype=float))
    counts, edges = np.histogram(m, bins=bins)
    ecdf = np.arange(1, m.size + 1) / m.size
    return {"counts": counts, "edges": edges, "values": m, "ecdf": ecdf}


def summary_to_csv(summary: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["value", "ecdf"])
    for v, c in zip(summary["values"], summary["ecdf"]):
        w.writerow([f"{v:.12g}", f"{c:.12g}"])
    return buf.getvalue()


def ks_distance(sample_a, sample_b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic (CDF comparison metric)."""
    a = np.sort(np.asarray(sample_a, dtype=float))
    b = np.sort(np.asarray(sample_b, dtype=float))
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))
