import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynsur.errors import ConfigError, DimensionError
from dynsur.features import PcaMap, fit_pca, project, reconstruct


class TestFitPca:
    @given(seed=st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=25, deadline=None)
    def test_eigenvector_orthonormality(self, seed):
        rng = np.random.default_rng(seed)
        data = rng.normal(size=(60, 8)) @ rng.normal(size=(8, 8))
        pca = fit_pca(data, threshold=1.0)
        v = pca.eigvecs
        np.testing.assert_allclose(
            v.T @ v, np.eye(v.shape[1]), atol=1e-8
        )

    def test_analytic_2x2_eigenvalues(self, rng):
        # bivariate normal with correlation r: standardized covariance has
        # eigenvalues 1 + r and 1 - r
        r = 0.6
        cov = [[1.0, r], [r, 1.0]]
        data = rng.multivariate_normal([0.0, 0.0], cov, size=40_000)
        pca = fit_pca(data, threshold=1.0)
        np.testing.assert_allclose(
            sorted(pca.eigvals, reverse=True), [1 + r, 1 - r], atol=0.05
        )

    def test_threshold_retention(self, rng):
        # one dominant direction: a 0.9 threshold keeps a single mode
        t = np.linspace(0, 1, 200)
        data = np.outer(np.sin(2 * np.pi * t), np.ones(10))
        data += 0.01 * rng.normal(size=data.shape)
        pca = fit_pca(data, threshold=0.9)
        assert pca.n_features == 1
        assert pca.explained >= 0.9

    def test_explained_variance_monotone_in_threshold(self, rng):
        data = rng.normal(size=(100, 6))
        kept = [fit_pca(data, th).n_features for th in (0.5, 0.9, 0.99, 1.0)]
        assert kept == sorted(kept)
        assert fit_pca(data, 1.0).n_features == 6

    def test_constant_columns_masked(self, rng):
        data = rng.normal(size=(50, 4))
        data[:, 2] = 7.0
        pca = fit_pca(data, threshold=1.0)
        assert pca.n_features == 3
        rec = reconstruct(pca, project(pca, data))
        np.testing.assert_allclose(rec[:, 2], 7.0, atol=1e-10)

    def test_all_constant_rejected(self):
        with pytest.raises(ConfigError):
            fit_pca(np.ones((10, 3)), threshold=0.9)

    def test_invalid_threshold(self, rng):
        with pytest.raises(ConfigError):
            fit_pca(rng.normal(size=(10, 2)), threshold=0.0)

    def test_sign_convention_deterministic(self, rng):
        data = rng.normal(size=(80, 5))
        a = fit_pca(data, 1.0)
        b = fit_pca(data.copy(), 1.0)
        np.testing.assert_array_equal(a.eigvecs, b.eigvecs)
        # largest-magnitude entry of each eigenvector is positive
        for col in a.eigvecs.T:
            assert col[np.argmax(np.abs(col))] > 0


class TestProjection:
    def test_full_rank_round_trip(self, rng):
        data = rng.normal(size=(60, 5))
        pca = fit_pca(data, threshold=1.0)
        rec = reconstruct(pca, project(pca, data))
        np.testing.assert_allclose(rec, data, atol=1e-8)

    def test_truncated_reconstruction_error_bounded(self, rng):
        data = rng.normal(size=(200, 6))
        full = fit_pca(data, 1.0)
        trunc = fit_pca(data, 0.7)
        assert trunc.n_features < full.n_features
        rec = reconstruct(trunc, project(trunc, data))
        # truncation keeps >= 70% of standardized variance
        z = (data - full.mu) / full.sigma
        zr = (rec - full.mu) / full.sigma
        kept = 1.0 - np.sum((z - zr) ** 2) / np.sum((z - z.mean(0)) ** 2)
        assert kept >= 0.69

    def test_dimension_check(self, rng):
        pca = fit_pca(rng.normal(size=(30, 4)), 0.9)
        with pytest.raises(DimensionError):
            project(pca, rng.normal(size=(3, 5)))

    def test_serialization_round_trip(self, rng):
        data = rng.normal(size=(40, 5))
        pca = fit_pca(data, 0.95)
        back = PcaMap.from_dict(pca.to_dict())
        np.testing.assert_allclose(
            project(back, data), project(pca, data), rtol=1e-12
        )
