"""Surrogate fitting and recursive forecasting.

Oracle strategy: simulate exactly-representable linear/polynomial
recursions, then check the fitted surrogate recovers them to numerical
precision both one step ahead and in long free-run rollouts.
"""

import numpy as np
import pytest

from dynsur.errors import ConfigError, DivergenceError
from dynsur.narx import (
    ChainSpec,
    FNarxSpec,
    NarxSpec,
    fit_chain,
    fit_fnarx,
    fit_narx,
    forecast,
    forecast_batch,
    forecast_narx,
    mean_forecast_error,
    select_model,
    spec_from_dict,
)
from dynsur.series import Scenario, TimeGrid, Trajectory


def _simulate_arx(x, a1, a2, b0, c=0.0):
    """y(t) = a1 y(t-1) + a2 y(t-2) + b0 x(t) + c, zero initial state."""
    y = np.zeros_like(x)
    for t in range(2, len(x)):
        y[t] = a1 * y[t - 1] + a2 * y[t - 2] + b0 * x[t] + c
    return y


def _arx_scenarios(rng, grid, n_traces, a1=1.5, a2=-0.7, b0=0.2):
    out = []
    for _ in range(n_traces):
        x = rng.standard_normal(grid.n_steps)
        y = _simulate_arx(x, a1, a2, b0)
        out.append(
            Scenario(
                (Trajectory(grid, x, "x"),),
                response={"y": Trajectory(grid, y, "y")},
            )
        )
    return out


LINEAR_SPEC = NarxSpec(
    "y", exogenous=(("x", (0,)),), auto_lags=(1, 2), degree=1, interaction=1
)


class TestExactLinearRecovery:
    def test_coefficients_recovered(self, grid, rng):
        scen = _arx_scenarios(rng, grid, 4)
        model = fit_narx(scen, LINEAR_SPEC)
        stage = model.stages[0]
        # Regressors are ordered auto lags first, then exogenous lags;
        # basis entries are exponent tuples over [y(t-1), y(t-2), x(t)].
        coef = dict(zip(stage.model.basis, stage.model.theta))
        assert coef[(1, 0, 0)] == pytest.approx(1.5, abs=1e-8)
        assert coef[(0, 1, 0)] == pytest.approx(-0.7, abs=1e-8)
        assert coef[(0, 0, 1)] == pytest.approx(0.2, abs=1e-8)
        assert abs(coef.get((0, 0, 0), 0.0)) < 1e-8

    def test_long_free_run_matches_simulator(self, rng):
        # A stable recursion stays on the true trajectory for thousands
        # of steps when the coefficients are exact.
        grid = TimeGrid(0.0, 0.01, 3000)
        scen = _arx_scenarios(rng, grid, 3)
        model = fit_narx(scen, LINEAR_SPEC)
        fresh = _arx_scenarios(rng, grid, 1)[0]
        pred = forecast_narx(model, fresh)
        truth = fresh.trajectory("y").values
        assert np.max(np.abs(pred.values - truth)) < 1e-8

    def test_max_trace_structure_matches(self, grid, rng):
        scen = _arx_scenarios(rng, grid, 4)
        m_all = fit_narx(scen, LINEAR_SPEC, structure="all")
        m_one = fit_narx(scen, LINEAR_SPEC, structure="max-trace")
        c_all = dict(zip(m_all.stages[0].model.basis, m_all.stages[0].model.theta))
        c_one = dict(zip(m_one.stages[0].model.basis, m_one.stages[0].model.theta))
        for key in ((1, 0, 0), (0, 1, 0), (0, 0, 1)):
            assert c_all[key] == pytest.approx(c_one[key], abs=1e-8)

    def test_zero_excitation_zero_fixed_point(self, grid, rng):
        scen = _arx_scenarios(rng, grid, 4)
        model = fit_narx(scen, LINEAR_SPEC)
        quiet = Scenario(
            (Trajectory(grid, np.zeros(grid.n_steps), "x"),),
            response={"y": Trajectory(grid, np.zeros(grid.n_steps), "y")},
        )
        pred = forecast_narx(model, quiet)
        assert np.max(np.abs(pred.values)) < 1e-8


class TestForecastEquivalence:
    def test_batch_matches_single(self, grid, rng):
        scen = _arx_scenarios(rng, grid, 5)
        model = fit_narx(scen[:4], LINEAR_SPEC)
        batch = {"x": np.stack([s.trajectory("x").values for s in scen])}
        outputs, diverged = forecast_batch(model, batch, grid)
        assert not diverged.any()
        for i, s in enumerate(scen):
            single = forecast_narx(model, s)
            np.testing.assert_allclose(
                outputs["y"][i], single.values, atol=1e-12
            )

    def test_forecast_returns_all_stage_outputs(self, grid, rng):
        scen = _chain_scenarios(rng, grid, 4)
        model = fit_chain(scen, CHAIN_SPEC)
        preds = forecast(model, scen[0])
        assert set(preds) == {"u", "y"}
        assert all(isinstance(t, Trajectory) for t in preds.values())

    def test_dt_mismatch_rejected(self, grid, rng):
        scen = _arx_scenarios(rng, grid, 3)
        model = fit_narx(scen, LINEAR_SPEC)
        other = TimeGrid(0.0, 0.02, grid.n_steps)
        bad = Scenario((Trajectory(other, np.zeros(other.n_steps), "x"),))
        with pytest.raises(ConfigError):
            forecast_narx(model, bad)


def _simulate_chain(x):
    """Auxiliary u follows the excitation; the final output y needs u.

    Both recursions hold from t = 1 on so every teacher-forced row the
    fit sees is exactly representable.
    """
    u = np.zeros_like(x)
    y = np.zeros_like(x)
    for t in range(1, len(x)):
        u[t] = 0.9 * u[t - 1] + 1.0 * x[t]
        y[t] = 0.5 * y[t - 1] + 0.8 * u[t - 1] + 0.1 * x[t]
    return u, y


def _chain_scenarios(rng, grid, n_traces):
    out = []
    for _ in range(n_traces):
        x = rng.standard_normal(grid.n_steps)
        u, y = _simulate_chain(x)
        out.append(
            Scenario(
                (Trajectory(grid, x, "x"),),
                response={
                    "u": Trajectory(grid, u, "u"),
                    "y": Trajectory(grid, y, "y"),
                },
            )
        )
    return out


CHAIN_SPEC = ChainSpec(
    (
        NarxSpec("u", (("x", (0,)),), auto_lags=(1,), degree=1, interaction=1),
        NarxSpec(
            "y",
            (("x", (0,)), ("u", (1,))),
            auto_lags=(1,),
            degree=1,
            interaction=1,
        ),
    )
)


class TestChain:
    def test_exact_recovery_through_stages(self, grid, rng):
        scen = _chain_scenarios(rng, grid, 4)
        model = fit_chain(scen, CHAIN_SPEC)
        fresh = _chain_scenarios(rng, grid, 1)[0]
        preds = forecast(model, fresh)
        for label in ("u", "y"):
            truth = fresh.trajectory(label).values
            assert np.max(np.abs(preds[label].values - truth)) < 1e-8

    def test_single_stage_chain_equals_plain_narx(self, grid, rng):
        scen = _arx_scenarios(rng, grid, 4)
        plain = fit_narx(scen, LINEAR_SPEC)
        chained = fit_chain(scen, ChainSpec((LINEAR_SPEC,)))
        assert plain.stages[0].model.support == chained.stages[0].model.support
        np.testing.assert_allclose(
            plain.stages[0].model.theta,
            chained.stages[0].model.theta,
            atol=1e-12,
        )

    def test_auxiliary_stage_carries_needed_information(self, grid, rng):
        # Without access to the auxiliary variable, the same lag budget
        # cannot represent the final recursion: the chained surrogate
        # must beat the excitation-only one on fresh traces.
        scen = _chain_scenarios(rng, grid, 6)
        fresh = _chain_scenarios(rng, grid, 10)
        chained = fit_chain(scen, CHAIN_SPEC)
        narx_only = NarxSpec(
            "y", (("x", (0, 1)),), auto_lags=(1,), degree=1, interaction=1
        )
        plain = fit_narx(scen, narx_only)
        err_chain, _ = mean_forecast_error(chained, fresh)
        err_plain, _ = mean_forecast_error(plain, fresh)
        assert err_chain < 1e-10
        assert err_plain > 10 * err_chain

    def test_predicted_auxiliary_mode_runs(self, grid, rng):
        scen = _chain_scenarios(rng, grid, 4)
        model = fit_chain(scen, CHAIN_SPEC, auxiliary="predicted")
        err, _ = mean_forecast_error(model, _chain_scenarios(rng, grid, 3))
        assert err < 1e-8  # exact stage 1 makes both modes equivalent

    def test_unknown_auxiliary_mode_rejected(self, grid, rng):
        scen = _chain_scenarios(rng, grid, 3)
        with pytest.raises(ConfigError):
            fit_chain(scen, CHAIN_SPEC, auxiliary="bogus")


class TestFunctionalFeatures:
    def test_degenerate_window_equals_plain_narx(self, grid, rng):
        # Windows of length one with all variance kept reduce the
        # functional model to a classical lag model up to an affine
        # feature map, so degree-one predictions must coincide.
        scen = _arx_scenarios(rng, grid, 4)
        fspec = FNarxSpec(
            "y",
            channels=(("x", 1),),
            auto_window=2,
            degree=1,
            interaction=1,
            pca_threshold=1.0,
        )
        fmodel = fit_fnarx(scen, fspec)
        nmodel = fit_narx(scen, LINEAR_SPEC)
        fresh = _arx_scenarios(rng, grid, 2)
        for s in fresh:
            fp = forecast_narx(fmodel, s).values
            np_ = forecast_narx(nmodel, s).values
            valid = slice(fspec.t_min_index, None)
            assert np.max(np.abs(fp[valid] - np_[valid])) < 1e-10

    def test_windowed_fit_tracks_long_memory(self, grid, rng):
        # Output driven by a trailing moving average of the excitation:
        # a wide input window must capture it almost exactly.
        out = []
        for _ in range(4):
            x = rng.standard_normal(grid.n_steps)
            kern = np.full(20, 1 / 20)
            y = np.convolve(x, kern)[: grid.n_steps]
            out.append(
                Scenario(
                    (Trajectory(grid, x, "x"),),
                    response={"y": Trajectory(grid, y, "y")},
                )
            )
        def fit_window(w):
            spec = FNarxSpec(
                "y",
                channels=(("x", w),),
                auto_window=1,
                degree=1,
                interaction=1,
                pca_threshold=1.0,
            )
            model = fit_fnarx(out[:3], spec)
            return mean_forecast_error(model, out[3:])[0]

        err_wide, err_narrow = fit_window(20), fit_window(2)
        assert err_wide < 0.02
        assert err_wide < 0.1 * err_narrow


class TestDivergenceHandling:
    def _unstable_model(self, grid, rng):
        # y(t) = 1.05 y(t-1) + x(t) learned exactly: free runs blow up
        # once the state outgrows the training range.
        x = rng.standard_normal(grid.n_steps) * 0.01
        y = _simulate_arx(x, 1.05, 0.0, 1.0)
        scen = Scenario(
            (Trajectory(grid, x, "x"),),
            response={"y": Trajectory(grid, y, "y")},
        )
        spec = NarxSpec(
            "y", (("x", (0,)),), auto_lags=(1,), degree=1, interaction=1
        )
        return fit_narx([scen], spec)

    def test_single_forecast_raises_with_context(self, rng):
        grid = TimeGrid(0.0, 0.01, 200)
        model = self._unstable_model(grid, rng)
        big = Scenario(
            (Trajectory(grid, np.full(grid.n_steps, 1e6), "x"),),
            response=None,
        )
        with pytest.raises(DivergenceError) as exc:
            forecast_narx(model, big)
        assert "y" in str(exc.value)

    def test_batch_mask_flags_only_bad_traces(self, rng):
        grid = TimeGrid(0.0, 0.01, 200)
        model = self._unstable_model(grid, rng)
        x = np.zeros((2, grid.n_steps))
        x[1] = 1e6
        outputs, diverged = forecast_batch(
            model, {"x": x}, grid, on_divergence="mask"
        )
        assert list(diverged) == [False, True]
        assert np.all(np.isfinite(outputs["y"][0]))


class TestErrorMetricAndSelection:
    def test_error_definition_matches_formula(self, grid, rng):
        scen = _arx_scenarios(rng, grid, 4)
        rough = NarxSpec(
            "y", (("x", (0,)),), auto_lags=(1,), degree=1, interaction=1
        )
        model = fit_narx(scen, rough)
        fresh = _arx_scenarios(rng, grid, 5)
        batch = {"x": np.stack([s.trajectory("x").values for s in fresh])}
        outputs, diverged = forecast_batch(
            model, batch, grid, on_divergence="mask"
        )
        expected = []
        for i, s in enumerate(fresh):
            y = s.trajectory("y").values
            if diverged[i]:
                expected.append(np.inf)
                continue
            resid = y - outputs["y"][i]
            expected.append(np.sum(resid**2) / np.sum((y - y.mean()) ** 2))
        mean_err, per_trace = mean_forecast_error(model, fresh)
        np.testing.assert_allclose(per_trace, expected, rtol=1e-9)
        assert mean_err == pytest.approx(float(np.mean(expected)), rel=1e-9)

    def test_exact_model_scores_near_zero(self, grid, rng):
        scen = _arx_scenarios(rng, grid, 4)
        model = fit_narx(scen, LINEAR_SPEC)
        assert mean_forecast_error(model, _arx_scenarios(rng, grid, 3))[0] < 1e-12

    def test_selection_prefers_sufficient_structure(self, grid, rng):
        scen = _arx_scenarios(rng, grid, 6)
        starved = NarxSpec(
            "y", (("x", (0,)),), auto_lags=(1,), degree=1, interaction=1
        )
        best, diag = select_model(scen, [starved, LINEAR_SPEC])
        assert best == LINEAR_SPEC
        assert len(diag["errors"]) == 2
        assert min(diag["errors"]) == pytest.approx(
            diag["errors"][1], rel=1e-12
        )


class TestSpecValidationAndRoundTrip:
    def test_zero_auto_lag_rejected(self):
        with pytest.raises(ConfigError):
            NarxSpec("y", (("x", (0,)),), auto_lags=(0,), degree=1, interaction=1)

    def test_unordered_chain_rejected(self):
        with pytest.raises(ConfigError):
            ChainSpec(
                (
                    NarxSpec(
                        "y",
                        (("x", (0,)), ("u", (1,))),
                        auto_lags=(1,),
                        degree=1,
                        interaction=1,
                    ),
                    NarxSpec(
                        "u", (("x", (0,)),), auto_lags=(1,), degree=1,
                        interaction=1,
                    ),
                )
            )

    @pytest.mark.parametrize(
        "spec",
        [
            LINEAR_SPEC,
            CHAIN_SPEC,
            FNarxSpec(
                "y", (("x", 5),), auto_window=3, degree=2, interaction=2
            ),
        ],
    )
    def test_spec_dict_round_trip(self, spec):
        assert spec_from_dict(spec.to_dict()) == spec

    def test_missing_response_label_rejected(self, grid, rng):
        scen = [
            Scenario(
                (Trajectory(grid, rng.standard_normal(grid.n_steps), "x"),),
                response={},
            )
        ]
        with pytest.raises(ConfigError):
            fit_narx(scen, LINEAR_SPEC)
