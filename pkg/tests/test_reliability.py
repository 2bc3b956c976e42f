import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynsur.errors import ConfigError
from dynsur.reliability import (
    ReliabilityCurve,
    estimate_pf,
    ks_distance,
    max_response,
    max_responses,
    pf_curve,
    reliability_index,
    response_summary,
    standard_normal_cdf,
)
from dynsur.series import TimeGrid, Trajectory


class TestMaxResponse:
    def test_absolute_and_signed(self):
        g = TimeGrid(0.0, 0.1, 4)
        traj = Trajectory(g, np.array([0.1, -2.0, 1.5, 0.0]), "y")
        assert max_response(traj) == 2.0
        assert max_response(traj, "signed") == 1.5
        with pytest.raises(ConfigError):
            max_response(traj, "other")

    def test_batch(self):
        values = np.array([[1.0, -3.0], [0.5, 0.2]])
        np.testing.assert_array_equal(max_responses(values), [3.0, 0.5])


class TestEstimatePf:
    def test_counts(self):
        maxima = np.arange(1, 101, dtype=float)  # 1..100
        pf, (lo, hi) = estimate_pf(maxima, threshold=90.0)
        assert pf == 0.10
        assert lo < pf < hi

    def test_binomial_ci_coverage_endpoints(self):
        maxima = np.ones(50)
        pf, (lo, hi) = estimate_pf(maxima, threshold=2.0)
        assert pf == 0.0 and lo == 0.0
        pf, (lo, hi) = estimate_pf(maxima, threshold=0.5)
        assert pf == 1.0 and hi == 1.0

    def test_ci_is_clopper_pearson(self):
        # k=5 exceedances out of n=100: check the exact interval
        maxima = np.concatenate([np.zeros(95), np.full(5, 2.0)])
        pf, (lo, hi) = estimate_pf(maxima, threshold=1.0, confidence=0.95)
        from scipy.stats import beta as beta_dist

        assert lo == pytest.approx(float(beta_dist.ppf(0.025, 5, 96)))
        assert hi == pytest.approx(float(beta_dist.ppf(0.975, 6, 95)))


class TestPfCurve:
    def test_monotone_nonincreasing(self, rng):
        maxima = rng.lognormal(size=5000)
        thr = np.quantile(maxima, np.linspace(0.5, 0.999, 30))
        curve = pf_curve(maxima, thr)
        assert np.all(np.diff(curve.pf) <= 0)
        assert np.all(np.diff(curve.beta) >= 0)

    def test_requires_sorted_thresholds(self, rng):
        with pytest.raises(ConfigError):
            pf_curve(rng.normal(size=10), [2.0, 1.0])

    def test_csv_round_trippable_columns(self, rng):
        maxima = np.abs(rng.normal(size=100))
        curve = pf_curve(maxima, [0.5, 1.0, 2.0])
        header = curve.to_csv().splitlines()[0].split(",")
        assert header == ["threshold", "pf", "beta", "ci_low", "ci_high"]


class TestReliabilityIndex:
    @given(
        # lower bound -5: for beta below that, pf is so close to 1 that a
        # double cannot represent it to the 1e-9 round-trip accuracy
        beta=st.floats(min_value=-5.0, max_value=8.0, allow_nan=False)
    )
    @settings(max_examples=60, deadline=None)
    def test_round_trip_against_mpmath(self, beta):
        # pf = Phi(-beta); the inverse must return beta to 1e-9
        pf = float(mpmath.ncdf(-beta))
        assert reliability_index(pf) == pytest.approx(beta, abs=1e-9)

    def test_cdf_against_mpmath(self):
        for x in (-5.0, -1.0, 0.0, 0.3, 2.5, 6.0):
            assert standard_normal_cdf(x) == pytest.approx(
                float(mpmath.ncdf(x)), abs=1e-12
            )

    def test_degenerate_pf(self):
        assert reliability_index(0.5) == pytest.approx(0.0, abs=1e-12)
        assert np.isinf(reliability_index(0.0))
        assert np.isneginf(reliability_index(1.0))


class TestKsDistance:
    def test_identical_samples(self, rng):
        a = rng.normal(size=500)
        assert ks_distance(a, a) == 0.0

    def test_known_shift(self, rng):
        a = rng.normal(size=20_000)
        b = rng.normal(size=20_000) + 10.0
        assert ks_distance(a, b) > 0.99


class TestResponseSummary:
    def test_fields(self, rng):
        maxima = np.abs(rng.normal(size=300))
        s = response_summary(maxima, bins=20)
        assert s["counts"].sum() == 300
        assert len(s["edges"]) == 21
        np.testing.assert_array_equal(s["values"], np.sort(maxima))
        assert s["ecdf"][-1] == 1.0
