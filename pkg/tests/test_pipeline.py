"""Benchmark-study plumbing: reliability helpers, seed discipline and a
small end-to-end quarter-car run with artifact output."""

import json
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from dynsur import pipeline
from dynsur.pipeline import (
    StudyConfig,
    beta_at_threshold,
    max_abs_beta_gap,
    quarter_car_study,
    reference_beta3_threshold,
)
from dynsur.series import TimeGrid

TINY = dict(
    master_seed=99,
    n_candidates=300,
    n_validation=400,
    n_ed_list=(10,),
    n_error_traces=20,
    model_selection=False,
)


@pytest.fixture(scope="module")
def tiny_study(tmp_path_factory):
    out = tmp_path_factory.mktemp("qc-study")
    results = quarter_car_study(StudyConfig(**TINY), out_dir=out)
    return results, out


class TestReliabilityHelpers:
    def test_beta_at_threshold_matches_normal_quantile(self):
        # Standard-normal maxima: threshold Phi^{-1}(1 - pf) gives index
        # Phi^{-1}(1 - pf) back, up to Monte-Carlo noise.
        rng = np.random.default_rng(1)
        maxima = rng.standard_normal(200_000)
        for beta in (1.0, 2.0):
            b = beta_at_threshold(maxima, beta)
            assert b == pytest.approx(beta, abs=0.02)

    def test_reference_beta3_threshold_quantile(self):
        rng = np.random.default_rng(2)
        maxima = rng.standard_normal(500_000)
        thr = reference_beta3_threshold(maxima)
        assert thr == pytest.approx(3.0, abs=0.05)
        pf = float(np.mean(maxima > thr))
        assert pf == pytest.approx(stats.norm.cdf(-3.0), rel=0.25)

    def test_max_abs_beta_gap_zero_for_identical_samples(self):
        rng = np.random.default_rng(3)
        maxima = rng.standard_normal(50_000) ** 2
        assert max_abs_beta_gap(maxima, maxima) == 0.0

    def test_max_abs_beta_gap_detects_scale_shift(self):
        rng = np.random.default_rng(4)
        ref = np.abs(rng.standard_normal(50_000))
        gap_small = max_abs_beta_gap(ref, 1.02 * ref)
        gap_large = max_abs_beta_gap(ref, 1.2 * ref)
        assert 0 < gap_small < gap_large

    def test_pf_threshold_grid_contains_beta3_point(self):
        rng = np.random.default_rng(5)
        maxima = np.abs(rng.standard_normal(100_000))
        thr = pipeline._pf_thresholds(maxima)
        assert np.all(np.diff(thr) > 0)
        assert np.isclose(thr, reference_beta3_threshold(maxima)).any()


class TestSeedDiscipline:
    def test_candidate_seeds_reproducible_and_stream_separated(self):
        a = pipeline._candidate_seeds(7, "pool", 100)
        b = pipeline._candidate_seeds(7, "pool", 100)
        c = pipeline._candidate_seeds(7, "validation", 100)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)
        assert len(np.unique(a)) == 100

    def test_kinematic_channels_integrate_constant_acceleration(self):
        grid = TimeGrid(0.0, 0.1, 51)
        acc = np.full((1, grid.n_steps), 2.0)
        vel, disp = pipeline._kinematic_channels(acc, grid)
        t = grid.times()
        np.testing.assert_allclose(vel[0], 2.0 * t, atol=1e-12)
        np.testing.assert_allclose(disp[0], t**2, atol=1e-10)


class TestQuarterCarStudy:
    def test_expected_result_keys_and_tags(self, tiny_study):
        results, _ = tiny_study
        tags = set(results["sur_maxima"])
        assert tags == {"mnarx-biased-10", "mnarx-random-10", "narx-biased-10"}
        for tag in tags:
            assert len(results["sur_maxima"][tag]) == TINY["n_validation"]
            assert set(results["errors"][tag]) == {
                "eps_bar",
                "eps_median",
                "diverged",
            }
        assert set(results["curves"]) == tags | {"reference"}

    def test_surrogate_tracks_reference_on_tiny_run(self, tiny_study):
        results, _ = tiny_study
        assert results["errors"]["mnarx-biased-10"]["eps_median"] < 0.05
        ratio = np.median(
            results["sur_maxima"]["mnarx-biased-10"] / results["ref_maxima"]
        )
        assert ratio == pytest.approx(1.0, abs=0.05)

    def test_artifacts_written(self, tiny_study):
        _, out = tiny_study
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["study"] == "quarter-car"
        for name in (
            "pool.csv",
            "ref_maxima.csv",
            "pf_reference.csv",
            "pf_mnarx-biased-10.csv",
            "model_mnarx-biased-10.json",
            "pf_curves.png",
            "max_response_hist.png",
            "trace_overlays.png",
        ):
            assert name in manifest["files"], name
            assert (out / name).exists()
        assert manifest["beta3_threshold"] > 0

    def test_rerun_is_hash_identical(self, tiny_study, tmp_path):
        _, out = tiny_study
        first = json.loads((out / "manifest.json").read_text())["files"]
        again = tmp_path / "rerun"
        quarter_car_study(StudyConfig(**TINY), out_dir=again)
        second = json.loads((again / "manifest.json").read_text())["files"]
        assert first == second
