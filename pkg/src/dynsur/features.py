"""PCA compression of lagged windows and of high-dimensional inputs.

The same affine map serves two roles: extracting features from memory
windows of a signal (the functional-NARX feature extractor) and reducing
a multi-channel input field to a few channels before surrogate training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConfigError, DimensionError
from .series import LaggedMatrix, TimeGrid, Trajectory


@dataclass(frozen=True)
class PcaMap:
    """Standardize-then-project map fitted on one lagged/stacked matrix.

    Constant columns are excluded from standardization via ``mask`` and
    reconstructed as their means.
    """

    mu: np.ndarray  # over all columns
    sigma: np.ndarray  # over kept (non-constant) columns
    eigvecs: np.ndarray  # (n_kept, n_retained), orthonormal
    eigvals: np.ndarray  # retained, descending
    explained: float
    threshold: float
    mask: np.ndarray = field(default=None)  # kept-column boolean mask

    def __post_init__(self):
        # Pin the memory layout so projections are bit-reproducible
        # whether the map came straight from the eigensolver or from a
        # serialization round trip (BLAS rounding depends on layout).
        object.__setattr__(
            self, "eigvecs", np.ascontiguousarray(self.eigvecs, dtype=float)
        )

    @property
    def n_features(self) -> int:
        return self.eigvecs.shape[1]

    @property
    def n_columns(self) -> int:
        return len(self.mu)

    def to_dict(self) -> dict:
        return {
            "mu": list(map(float, self.mu)),
            "sigma": list(map(float, self.sigma)),
            "eigvecs": [list(map(float, r)) for r in self.eigvecs],
            "eigvals": list(map(float, self.eigvals)),
            "explained": float(self.explained),
            "threshold": float(self.threshold),
            "mask": [bool(b) for b in self.mask],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PcaMap":
        return cls(
            mu=np.asarray(d["mu"], dtype=float),
            sigma=np.asarray(d["sigma"], dtype=float),
            eigvecs=np.asarray(d["eigvecs"], dtype=float),
            eigvals=np.asarray(d["eigvals"], dtype=float),
            explained=float(d["explained"]),
            threshold=float(d["threshold"]),
            mask=np.asarray(d["mask"], dtype=bool),
        )


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    """Deterministic sign convention: largest-magnitude component positive."""
    out = vecs.copy()
    for j in range(out.shape[1]):
        k = int(np.argmax(np.abs(out[:, j])))
        if out[k, j] < 0:
            out[:, j] = -out[:, j]
    return out


def fit_pca(data, threshold: float = 0.99) -> PcaMap:
    """Standardize columns, eigendecompose the covariance, retain the
    smallest number of modes reaching the explained-variance threshold."""
    if isinstance(data, LaggedMatrix):
        data = data.rows
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ConfigError("PCA needs a 2-D matrix with at least 2 rows")
    if not 0.0 < threshold <= 1.0:
        raise ConfigError(f"threshold must be in (0, 1], got {threshold}")

    mu = x.mean(axis=0)
    sigma_all = x.std(axis=0, ddof=1)
    mask = sigma_all > 1e-13 * np.maximum(np.abs(mu), 1.0)
    if not mask.any():
        raise ConfigError("all columns are constant; nothing to decompose")

    z = (x[:, mask] - mu[mask]) / sigma_all[mask]
    c = z.T @ z / (x.shape[0] - 1)
    eigvals, eigvecs = scipy.linalg.eigh(c)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = _fix_signs(eigvecs[:, order])

    total = float(eigvals.sum())
    ratio = np.cumsum(eigvals) / total
    n_keep = int(np.searchsorted(ratio, threshold - 1e-12) + 1)
    n_keep = min(n_keep, len(eigvals))

    return PcaMap(
        mu=mu,
        sigma=sigma_all[mask],
        eigvecs=eigvecs[:, :n_keep],
        eigvals=eigvals[:n_keep],
        explained=float(ratio[n_keep - 1]),
        threshold=threshold,
        mask=mask,
    )


def project(pca: PcaMap, rows) -> np.ndarray:
    """Standardize rows with the stored constants and project onto the
    retained eigenvectors."""
    if isinstance(rows, LaggedMatrix):
        rows = rows.rows
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[1] != pca.n_columns:
        raise DimensionError(
            f"{rows.shape[1]} columns projected through a {pca.n_columns}-column map"
        )
    z = (rows[:, pca.mask] - pca.mu[pca.mask]) / pca.sigma
    return z @ pca.eigvecs


def reconstruct(pca: PcaMap, features: np.ndarray) -> np.ndarray:
    """Inverse of :func:`project` up to the truncation error; constant
    columns come back as their means."""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    z = features @ pca.eigvecs.T
    out = np.tile(pca.mu, (features.shape[0], 1))
    out[:, pca.mask] += z * pca.sigma
    return out


def compress_input(
    snapshots: np.ndarray,
    threshold: float = 0.99,
    grid: TimeGrid | None = None,
    label: str = "xred",
):
    """Reduce an M-channel input field to a few channels.

    ``snapshots`` is (n_steps x M): one row per time step, one column per
    spatial dimension. Returns the fitted map and the reduced channels,
    as trajectories when a grid is supplied, else as an array.
    """
    snapshots = np.asarray(snapshots, dtype=float)
    if snapshots.ndim != 2 or snapshots.shape[1] < 1:
        raise ConfigError("snapshots must be (n_steps x M) with M >= 1")
    pca = fit_pca(snapshots, threshold)
    reduced = project(pca, snapshots)
    if grid is None:
        return pca, reduced
    trajs = [
        Trajectory(grid, reduced[:, i], f"{label}{i + 1}")
        for i in range(reduced.shape[1])
    ]
    return pca, trajs
