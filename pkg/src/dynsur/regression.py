"""Polynomial bases and linear/sparse least-squares solvers.

The sparse solver is least angle regression (LARS) with the LASSO
modification, run on internally standardized columns. Along the path the
candidate supports are scored with a hat-matrix-based corrected
leave-one-out error, and the winning support is refit by ordinary least
squares on the raw columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np
import scipy.linalg

from .errors import ConfigError, SingularityError

_BASIS_SIZE_CAP = 100_000
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class BasisSpec:
    """Multivariate monomial basis: total degree and interaction caps."""

    n_regressors: int
    max_degree: int
    max_interaction: int
    include_constant: bool = True

    def __post_init__(self):
        if self.n_regressors < 1:
            raise ConfigError("n_regressors must be >= 1")
        if self.max_degree < 1:
            raise ConfigError("max_degree must be >= 1")
        if not 1 <= self.max_interaction <= self.n_regressors:
            raise ConfigError(
                f"max_interaction must be in [1, {self.n_regressors}]"
            )


def enumerate_basis(spec: BasisSpec, size_cap: int = _BASIS_SIZE_CAP):
    """All exponent tuples with total degree and interaction within caps.

    Ordering is graded lexicographic (by degree, then by the sorted
    variable multiset), deterministic across runs.
    """
    out = []
    if spec.include_constant:
        out.append((0,) * spec.n_regressors)
    for degree in range(1, spec.max_degree + 1):
        for combo in combinations_with_replacement(range(spec.n_regressors), degree):
            if len(set(combo)) > spec.max_interaction:
                continue
            alpha = [0] * spec.n_regressors
            for v in combo:
                alpha[v] += 1
            out.append(tuple(alpha))
            if len(out) > size_cap:
                raise ConfigError(
                    f"basis size exceeds cap {size_cap}; tighten degree or "
                    "interaction caps"
                )
    return out


def evaluate_basis(basis, rows: np.ndarray) -> np.ndarray:
    """Evaluate monomials on regressor rows; 0**0 is 1."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    n = rows.shape[1]
    expo = np.asarray(basis, dtype=int)
    if expo.shape[1] != n:
        raise ConfigError(
            f"basis over {expo.shape[1]} regressors applied to rows of width {n}"
        )
    max_deg = int(expo.max()) if expo.size else 0
    # Precompute powers once; degrees here are small (<= 3 typically).
    powers = np.ones((max_deg + 1, rows.shape[0], n))
    for d in range(1, max_deg + 1):
        powers[d] = powers[d - 1] * rows
    out = np.ones((rows.shape[0], len(basis)))
    for j, alpha in enumerate(expo):
        for v in np.nonzero(alpha)[0]:
            out[:, j] *= powers[alpha[v], :, v]
    return out


def compile_terms(basis):
    """Per-term (variable, power) pairs for fast support-only evaluation."""
    return [
        tuple((int(v), int(p)) for v, p in enumerate(alpha) if p)
        for alpha in basis
    ]


def evaluate_terms(terms, rows: np.ndarray) -> np.ndarray:
    """Evaluate compiled terms on a batch of regressor rows."""
    rows = np.atleast_2d(rows)
    out = np.ones((rows.shape[0], len(terms)))
    for j, term in enumerate(terms):
        col = out[:, j]
        for v, p in term:
            x = rows[:, v]
            col *= x if p == 1 else x**p
    return out


def fit_ols(design: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least squares via column-pivoted orthogonal factorization.

    Raises SingularityError (naming the offending columns) when the
    design is numerically rank deficient.
    """
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    if design.shape[0] < design.shape[1]:
        raise ConfigError(
            f"need rows >= columns, got {design.shape[0]}x{design.shape[1]}"
        )
    q, r, piv = scipy.linalg.qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag[0] == 0 or diag[-1] == 0 or diag[0] / diag[-1] > _COND_LIMIT:
        rank = int(np.sum(diag > diag[0] / _COND_LIMIT)) if diag[0] > 0 else 0
        raise SingularityError(
            "rank-deficient design (condition estimate above limit)",
            columns=piv[rank:],
        )
    theta = np.empty(design.shape[1])
    theta[piv] = scipy.linalg.solve_triangular(r, q.T @ y)
    return theta


@dataclass
class PathKnot:
    """One knot of the LARS path, in standardized coordinates."""

    support: tuple[int, ...]
    lasso_coef: np.ndarray  # over `support`, standardized columns
    penalty: float  # max absolute correlation = lasso penalty / 2
    rss: float  # OLS-on-support residual sum of squares (centered y)
    loo_error: float  # corrected leave-one-out estimate


@dataclass
class SparseModel:
    """Sparse polynomial model: selected support plus OLS coefficients.

    ``support`` indexes columns of the original design; ``basis`` carries
    the matching multi-indices when the design came from a polynomial
    basis. Prediction is X[:, support] @ theta + intercept.
    """

    support: tuple[int, ...]
    theta: np.ndarray
    intercept: float = 0.0
    basis: list | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.basis is not None and len(self.basis) != len(self.support):
            raise ConfigError("basis/support length mismatch")
        if len(self.theta) != len(self.support):
            raise ConfigError("theta/support length mismatch")

    def predict(self, design: np.ndarray) -> np.ndarray:
        return design[:, list(self.support)] @ self.theta + self.intercept

    def to_dict(self) -> dict:
        return {
            "support": list(self.support),
            "theta": list(map(float, self.theta)),
            "intercept": float(self.intercept),
            "basis": [list(map(int, a)) for a in self.basis]
            if self.basis is not None
            else None,
            "diagnostics": {
                k: v
                for k, v in self.diagnostics.items()
                if isinstance(v, (int, float, str, bool))
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SparseModel":
        return cls(
            support=tuple(d["support"]),
            theta=np.asarray(d["theta"], dtype=float),
            intercept=float(d["intercept"]),
            basis=[tuple(a) for a in d["basis"]] if d.get("basis") else None,
            diagnostics=dict(d.get("diagnostics", {})),
        )


class _IncrementalQR:
    """Thin Gram-Schmidt QR of the active columns, grown one column at a
    time; supports leverage tracking and full rebuilds after LASSO drops."""

    def __init__(self, n_rows: int):
        self.q = np.empty((n_rows, 0))
        self.r = np.empty((0, 0))

    def add(self, col: np.ndarray) -> bool:
        k = self.q.shape[1]
        proj = self.q.T @ col
        resid = col - self.q @ proj
        # re-orthogonalize once for numerical safety
        corr = self.q.T @ resid
        resid -= self.q @ corr
        proj += corr
        norm = np.linalg.norm(resid)
        if norm <= 1e-12 * max(1.0, np.linalg.norm(col)):
            return False
        new_r = np.zeros((k + 1, k + 1))
        new_r[:k, :k] = self.r
        new_r[:k, k] = proj
        new_r[k, k] = norm
        self.r = new_r
        self.q = np.hstack([self.q, (resid / norm)[:, None]])
        return True

    def rebuild(self, cols: np.ndarray):
        self.q, self.r = np.linalg.qr(cols)

    def solve_gram(self, rhs: np.ndarray) -> np.ndarray:
        """Solve (A^T A) w = rhs via the R factor."""
        tmp = scipy.linalg.solve_triangular(self.r, rhs, trans="T")
        return scipy.linalg.solve_triangular(self.r, tmp)

    def leverages(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.q, self.q)

    def inv_gram_trace(self) -> float:
        rinv = scipy.linalg.solve_triangular(
            self.r, np.eye(self.r.shape[0])
        )
        return float(np.sum(rinv**2))


def _corrected_loo(y_c, fitted, leverages, k_active, inv_gram_trace):
    """Hat-matrix leave-one-out error with the small-sample correction
    factor N/(N-P) * (1 + tr(C^{-1})/N), C the empirical Gram of the
    active columns rescaled to unit variance (here unit-norm columns, so
    tr(C^{-1})/N equals tr((A^T A)^{-1})/N)."""
    n = len(y_c)
    if k_active + 1 >= n:
        return np.inf
    resid = y_c - fitted
    denom = np.clip(1.0 - leverages, 1e-10, None)
    loo = float(np.mean((resid / denom) ** 2))
    correction = n / (n - (k_active + 1)) * (1.0 + inv_gram_trace / n)
    return loo * correction


def fit_lars(
    design: np.ndarray,
    y: np.ndarray,
    max_terms: int | None = None,
    basis=None,
    keep_path: bool = False,
) -> SparseModel:
    """Sparse fit by LARS (LASSO mode) with corrected-LOO model selection.

    Columns are standardized (centered, unit norm) internally; the
    returned coefficients are de-standardized and recomputed by OLS on
    the selected support. Constant and duplicate columns never enter the
    path; the intercept absorbs them (and is folded back onto a constant
    column of the original design when one exists).
    """
    x = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = x.shape
    if len(y) != n:
        raise ConfigError("design/output length mismatch")
    if max_terms is None:
        max_terms = max(1, min(n // 2, 200))

    mu = x.mean(axis=0)
    xc = x - mu
    norms = np.linalg.norm(xc, axis=0)
    scale_ref = np.linalg.norm(x, axis=0)
    active_cols = np.nonzero(norms > 1e-13 * np.maximum(scale_ref, 1.0))[0]
    const_cols = np.setdiff1d(np.arange(p), active_cols)

    y_mean = y.mean()
    y_c = y - y_mean

    z = xc[:, active_cols] / norms[active_cols]

    # Deduplicate (near-)collinear columns: LARS is undefined under exact
    # collinearity. Keep the first of each duplicate group.
    if len(active_cols) and len(active_cols) <= 4000:
        gram = z.T @ z
        dup = np.zeros(len(active_cols), dtype=bool)
        for j in range(1, len(active_cols)):
            if dup[j]:
                continue
            if np.any(np.abs(gram[j, :j][~dup[:j]]) > 1.0 - 1e-10):
                dup[j] = True
        keep = ~dup
        z = z[:, keep]
        col_map = active_cols[keep]
    else:
        col_map = active_cols

    knots: list[PathKnot] = []
    truncated = False

    if z.shape[1] == 0 or np.linalg.norm(y_c) <= 1e-14 * max(1.0, abs(y_mean)):
        # all-constant target (or no usable columns): constant-only model
        best_support_z: tuple[int, ...] = ()
    else:
        best_support_z = _lars_path(
            z, y_c, max_terms, knots, keep_all=keep_path
        )
        truncated = len(best_support_z) >= max_terms and len(best_support_z) < z.shape[1]

    support = tuple(int(col_map[j]) for j in best_support_z)

    # OLS refit on the raw selected columns, explicit intercept.
    if support:
        a = np.hstack([np.ones((n, 1)), x[:, list(support)]])
        coef = fit_ols(a, y)
        intercept, theta = float(coef[0]), coef[1:]
    else:
        intercept, theta = y_mean, np.empty(0)

    # Fold the intercept onto a constant column of the design if present.
    folded_support, folded_theta = list(support), list(theta)
    if const_cols.size and intercept != 0.0:
        c = int(const_cols[0])
        cval = float(x[0, c]) if n else 0.0
        if cval != 0.0 and c not in folded_support:
            folded_support.insert(0, c)
            folded_theta.insert(0, intercept / cval)
            intercept = 0.0

    order = np.argsort(folded_support)
    folded_support = [folded_support[i] for i in order]
    folded_theta = [folded_theta[i] for i in order]

    chosen = next(
        (i for i, k in enumerate(knots) if set(k.support) == set(best_support_z)),
        None,
    )
    diagnostics = {
        "path_length": len(knots),
        "chosen_knot": chosen if chosen is not None else -1,
        "truncated": truncated,
        "loo_error": knots[chosen].loo_error if chosen is not None else np.nan,
    }
    model = SparseModel(
        support=tuple(folded_support),
        theta=np.asarray(folded_theta),
        intercept=intercept,
        basis=[basis[j] for j in folded_support] if basis is not None else None,
        diagnostics=diagnostics,
    )
    resid = y - model.predict(x)
    model.diagnostics["training_rmse"] = float(np.sqrt(np.mean(resid**2)))
    if keep_path:
        model.diagnostics["path"] = knots
        model.diagnostics["column_map"] = col_map
        model.diagnostics["standardization"] = {
            "col_means": mu,
            "col_norms": norms,
            "y_mean": y_mean,
        }
    return model


def _lars_path(z, y_c, max_terms, knots_out, keep_all=False):
    """LARS-LASSO path on standardized columns.

    Appends a PathKnot per step to ``knots_out`` and returns the support
    minimizing the corrected-LOO error.
    """
    n, p = z.shape
    max_active = min(max_terms, p, n - 2 if n > 2 else 1)

    beta = np.zeros(p)
    active: list[int] = []
    signs: list[float] = []
    qr = _IncrementalQR(n)
    resid = y_c.copy()
    drop_pending = None

    best = (np.inf, ())
    tiny = 1e-12 * np.linalg.norm(y_c)

    for _ in range(8 * max_active + 8):
        c = z.T @ resid
        c_abs = np.abs(c)
        if active:
            c_max = float(np.mean(c_abs[active]))
        else:
            c_max = float(c_abs.max())
        if c_max < tiny:
            break

        if drop_pending is not None:
            j = drop_pending
            drop_pending = None
            pos = active.index(j)
            active.pop(pos)
            signs.pop(pos)
            beta[j] = 0.0
            if active:
                qr.rebuild(z[:, active])
        else:
            inactive = np.setdiff1d(np.arange(p), active, assume_unique=False)
            if inactive.size == 0:
                break
            j = int(inactive[np.argmax(c_abs[inactive])])
            if c_abs[j] < tiny:
                break
            if not qr.add(z[:, j]):
                # numerically dependent on the active set; freeze it out
                z = z.copy()
                z[:, j] = 0.0
                continue
            active.append(j)
            signs.append(float(np.sign(c[j])))

        if not active:
            break

        s = np.asarray(signs)
        ga = qr.solve_gram(s)
        denom = float(s @ ga)
        if denom <= 0:
            break
        a_norm = 1.0 / np.sqrt(denom)
        w = a_norm * ga  # direction in coefficient space (active cols)
        u = z[:, active] @ w  # unit equiangular vector

        c_max = float(np.abs(c[active[0]]))
        a = z.T @ u

        # step to the next equi-correlation event
        inactive_mask = np.ones(p, dtype=bool)
        inactive_mask[active] = False
        gamma = c_max / a_norm  # full step to zero correlation
        if inactive_mask.any():
            cc = c[inactive_mask]
            aa = a[inactive_mask]
            with np.errstate(divide="ignore", invalid="ignore"):
                cand = np.concatenate(
                    [(c_max - cc) / (a_norm - aa), (c_max + cc) / (a_norm + aa)]
                )
            cand = cand[np.isfinite(cand) & (cand > 1e-14)]
            if cand.size:
                gamma = min(gamma, float(cand.min()))

        # LASSO modification: drop a variable whose coefficient crosses zero
        drop_j = None
        db = np.asarray(w)
        with np.errstate(divide="ignore", invalid="ignore"):
            cross = -np.asarray([beta[j] for j in active]) / db
        cross_ok = np.isfinite(cross) & (cross > 1e-14)
        if cross_ok.any():
            g_drop = float(cross[cross_ok].min())
            if g_drop < gamma:
                gamma = g_drop
                drop_j = active[int(np.argmin(np.where(cross_ok, cross, np.inf)))]

        for idx, j in enumerate(active):
            beta[j] += gamma * w[idx]
        if drop_j is not None:
            beta[drop_j] = 0.0
            drop_pending = drop_j
        resid = y_c - z @ beta

        # record the knot (OLS-on-support stats via the QR factors)
        fitted = qr.q @ (qr.q.T @ y_c)
        rss = float(np.sum((y_c - fitted) ** 2))
        loo = _corrected_loo(
            y_c, fitted, qr.leverages(), len(active), qr.inv_gram_trace()
        )
        penalty = float(np.max(np.abs(z.T @ resid))) if active else 0.0
        sup = tuple(active)
        knot = PathKnot(
            support=sup,
            lasso_coef=np.asarray([beta[j] for j in active]),
            penalty=penalty,
            rss=rss,
            loo_error=loo,
        )
        if keep_all or loo < best[0]:
            knots_out.append(knot)
        if loo < best[0]:
            best = (loo, sup)

        if drop_pending is None and len(active) >= max_active:
            break
        if gamma <= 1e-14:
            break

    if not keep_all:
        # keep only the winning knot to bound memory
        knots_out[:] = [k for k in knots_out if set(k.support) == set(best[1])][-1:]
    return best[1]
