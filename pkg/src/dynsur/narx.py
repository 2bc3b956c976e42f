"""The three surrogate architectures: lag-based NARX, chained (manifold)
NARX, and windowed-PCA (functional) NARX.

Fitting is always one-step-ahead with teacher forcing (true past outputs
in the regressors); forecasting is fully recursive, feeding back the
model's own predictions. Chains forecast stage by stage: each auxiliary
variable's full trajectory is predicted before the next stage consumes
it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceError
from .features import PcaMap, fit_pca, project
from .regression import (
    BasisSpec,
    SparseModel,
    compile_terms,
    enumerate_basis,
    evaluate_basis,
    evaluate_terms,
    fit_lars,
    fit_ols,
)
from .series import Scenario, TimeGrid, Trajectory, build_lagged_matrix

_SUBSAMPLE_CAP = 200_000
_GUARD_FACTOR = 1e6


def _check_lags(lags, allow_zero):
    lags = tuple(int(l) for l in lags)
    if not lags:
        raise ConfigError("lag list must be nonempty")
    if list(lags) != sorted(set(lags)):
        raise ConfigError(f"lags must be sorted and distinct: {lags}")
    if min(lags) < (0 if allow_zero else 1):
        raise ConfigError(
            f"lags {lags} must be >= {0 if allow_zero else 1}"
        )
    return lags


@dataclass(frozen=True)
class NarxSpec:
    """Classical polynomial NARX: discrete lags per variable."""

    output: str
    exogenous: tuple  # ((label, (lags...)), ...)
    auto_lags: tuple
    degree: int
    interaction: int
    include_static: bool = False
    output_bound: float | None = None  # known saturation level of |output|

    def __post_init__(self):
        if self.output_bound is not None and not self.output_bound > 0:
            raise ConfigError("output_bound must be > 0")
        object.__setattr__(
            self, "auto_lags", _check_lags(self.auto_lags, allow_zero=False)
        )
        exo = tuple(
            (str(lab), _check_lags(lags, allow_zero=True))
            for lab, lags in self.exogenous
        )
        object.__setattr__(self, "exogenous", exo)

    @property
    def t_min_index(self) -> int:
        lags = list(self.auto_lags)
        for _, ls in self.exogenous:
            lags.extend(ls)
        return max(lags)

    @property
    def input_labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.exogenous)

    def n_regressors(self, n_static: int = 0) -> int:
        return (
            len(self.auto_lags)
            + sum(len(ls) for _, ls in self.exogenous)
            + (n_static if self.include_static else 0)
        )

    def to_dict(self) -> dict:
        return {
            "kind": "narx",
            "output": self.output,
            "exogenous": [[lab, list(ls)] for lab, ls in self.exogenous],
            "auto_lags": list(self.auto_lags),
            "degree": self.degree,
            "interaction": self.interaction,
            "include_static": self.include_static,
            "output_bound": self.output_bound,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NarxSpec":
        return cls(
            output=d["output"],
            exogenous=tuple((lab, tuple(ls)) for lab, ls in d["exogenous"]),
            auto_lags=tuple(d["auto_lags"]),
            degree=int(d["degree"]),
            interaction=int(d["interaction"]),
            include_static=bool(d.get("include_static", False)),
            output_bound=(
                None
                if d.get("output_bound") is None
                else float(d["output_bound"])
            ),
        )


@dataclass(frozen=True)
class FNarxSpec:
    """Functional NARX: PCA features over memory windows.

    Exogenous channels use windows of lags 0..window-1; the
    autoregressive window uses lags 1..auto_window.
    """

    output: str
    channels: tuple  # ((label, window_steps), ...)
    auto_window: int
    degree: int
    interaction: int
    pca_threshold: float = 0.9
    output_bound: float | None = None  # known saturation level of |output|

    def __post_init__(self):
        if self.output_bound is not None and not self.output_bound > 0:
            raise ConfigError("output_bound must be > 0")
        ch = tuple((str(lab), int(w)) for lab, w in self.channels)
        if any(w < 1 for _, w in ch):
            raise ConfigError("window lengths must be >= 1")
        if self.auto_window < 1:
            raise ConfigError("auto_window must be >= 1")
        if not 0.0 < self.pca_threshold <= 1.0:
            raise ConfigError("pca_threshold must be in (0, 1]")
        object.__setattr__(self, "channels", ch)

    @property
    def t_min_index(self) -> int:
        return max(max(w - 1 for _, w in self.channels), self.auto_window)

    @property
    def input_labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.channels)

    def to_dict(self) -> dict:
        return {
            "kind": "fnarx",
            "output": self.output,
            "channels": [[lab, w] for lab, w in self.channels],
            "auto_window": self.auto_window,
            "degree": self.degree,
            "interaction": self.interaction,
            "pca_threshold": self.pca_threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FNarxSpec":
        return cls(
            output=d["output"],
            channels=tuple((lab, int(w)) for lab, w in d["channels"]),
            auto_window=int(d["auto_window"]),
            degree=int(d["degree"]),
            interaction=int(d["interaction"]),
            pca_threshold=float(d["pca_threshold"]),
        )


@dataclass(frozen=True)
class ChainSpec:
    """Ordered chain of stages: stage k may consume raw inputs and the
    outputs of stages 1..k-1; the last stage predicts the QoI."""

    stages: tuple

    def __post_init__(self):
        stages = tuple(self.stages)
        if not stages:
            raise ConfigError("chain needs at least one stage")
        seen: set[str] = set()
        later_outputs = {s.output for s in stages}
        for s in stages:
            for lab in s.input_labels:
                if lab in later_outputs and lab not in seen:
                    raise ConfigError(
                        f"stage for '{s.output}' references '{lab}' before it "
                        "is predicted (chain must be ordered)"
                    )
            seen.add(s.output)
        object.__setattr__(self, "stages", stages)

    @property
    def output(self) -> str:
        return self.stages[-1].output

    def to_dict(self) -> dict:
        return {"kind": "chain", "stages": [s.to_dict() for s in self.stages]}

    @classmethod
    def from_dict(cls, d: dict) -> "ChainSpec":
        return cls(tuple(spec_from_dict(s) for s in d["stages"]))


def spec_from_dict(d: dict):
    kind = d["kind"]
    if kind == "narx":
        return NarxSpec.from_dict(d)
    if kind == "fnarx":
        return FNarxSpec.from_dict(d)
    if kind == "chain":
        return ChainSpec.from_dict(d)
    raise ConfigError(f"unknown spec kind '{kind}'")


@dataclass
class FittedStage:
    """One fitted one-step map: sparse polynomial model plus, for
    functional stages, the per-channel feature extractors."""

    spec: object
    model: SparseModel
    pca_maps: dict[str, PcaMap] | None = None
    max_train_abs: float = 1.0

    @property
    def guard(self) -> float:
        scale = max(self.max_train_abs, 1e-30)
        return _GUARD_FACTOR * scale


@dataclass
class FittedSurrogate:
    """A forecastable surrogate: one stage (narx/fnarx) or a chain."""

    kind: str
    stages: list[FittedStage]
    grid_dt: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def output(self) -> str:
        return self.stages[-1].spec.output

    def required_inputs(self) -> tuple[str, ...]:
        produced = {s.spec.output for s in self.stages}
        labels: list[str] = []
        for s in self.stages:
            for lab in s.spec.input_labels:
                if lab not in produced and lab not in labels:
                    labels.append(lab)
        return tuple(labels)


# ---------------------------------------------------------------------------
# teacher-forced design construction


def _narx_rows(spec: NarxSpec, scenario: Scenario):
    t_min = spec.t_min_index
    y = scenario.trajectory(spec.output)
    cols = [build_lagged_matrix(y, spec.auto_lags, t_min).rows]
    for lab, lags in spec.exogenous:
        cols.append(build_lagged_matrix(scenario.trajectory(lab), lags, t_min).rows)
    rows = np.hstack(cols)
    if spec.include_static and scenario.static_params.size:
        rows = np.hstack(
            [rows, np.tile(scenario.static_params, (rows.shape[0], 1))]
        )
    return rows, y.values[t_min:]


def _fnarx_windows(spec: FNarxSpec, scenario: Scenario):
    """Per-channel lagged window matrices (exogenous channels first, the
    autoregressive window last) plus the target slice."""
    t_min = spec.t_min_index
    windows = {}
    for lab, w in spec.channels:
        windows[lab] = build_lagged_matrix(
            scenario.trajectory(lab), tuple(range(w)), t_min
        ).rows
    y = scenario.trajectory(spec.output)
    windows["__auto__"] = build_lagged_matrix(
        y, tuple(range(1, spec.auto_window + 1)), t_min
    ).rows
    return windows, y.values[t_min:]


def _fnarx_features(spec: FNarxSpec, pca_maps, windows):
    feats = [project(pca_maps[lab], windows[lab]) for lab, _ in spec.channels]
    feats.append(project(pca_maps["__auto__"], windows["__auto__"]))
    return np.hstack(feats)


# ---------------------------------------------------------------------------
# fitting


def _ols_on_support(psi, y, support):
    """OLS refit on the selected basis columns, intercept handled through
    the constant term (basis column 0)."""
    sup_rest = [j for j in support if j != 0]
    a = np.hstack([np.ones((psi.shape[0], 1)), psi[:, sup_rest]])
    coef = fit_ols(a, y)
    return (0, *sup_rest), coef


def _build_stage_design(spec, scenarios, pca_maps=None):
    blocks, targets = [], []
    for scn in scenarios:
        if isinstance(spec, NarxSpec):
            rows, y = _narx_rows(spec, scn)
        else:
            windows, y = _fnarx_windows(spec, scn)
            rows = _fnarx_features(spec, pca_maps, windows)
        blocks.append(rows)
        targets.append(y)
    return np.vstack(blocks), np.concatenate(targets)


def _fit_stage(
    spec,
    scenarios,
    rng=None,
    subsample_cap: int = _SUBSAMPLE_CAP,
    lars_scenarios=None,
) -> FittedStage:
    """Fit one stage: LARS selection (optionally on a trace subset or on
    subsampled rows), then OLS on the support over the full design."""
    pca_maps = None
    if isinstance(spec, FNarxSpec):
        pca_maps = {}
        keys = [lab for lab, _ in spec.channels] + ["__auto__"]
        all_windows = [
            _fnarx_windows(spec, scn)[0] for scn in scenarios
        ]
        for key in keys:
            stacked = np.vstack([w[key] for w in all_windows])
            pca_maps[key] = fit_pca(stacked, spec.pca_threshold)

    rows, y = _build_stage_design(spec, scenarios, pca_maps)
    n_reg = rows.shape[1]
    basis = enumerate_basis(
        BasisSpec(n_reg, spec.degree, min(spec.interaction, n_reg), True)
    )
    psi = evaluate_basis(basis, rows)

    if lars_scenarios is not None:
        sel_rows, sel_y = _build_stage_design(spec, lars_scenarios, pca_maps)
        sel_psi = evaluate_basis(basis, sel_rows)
    else:
        sel_psi, sel_y = psi, y
    if sel_psi.shape[0] > subsample_cap:
        rng = rng or np.random.default_rng(0)
        idx = rng.choice(sel_psi.shape[0], size=subsample_cap, replace=False)
        sel_psi, sel_y = sel_psi[idx], sel_y[idx]

    lars_model = fit_lars(sel_psi, sel_y, basis=basis)
    support, coef = _ols_on_support(psi, y, lars_model.support)
    model = SparseModel(
        support=support,
        theta=coef,
        intercept=0.0,
        basis=[basis[j] for j in support],
        diagnostics=dict(lars_model.diagnostics),
    )
    resid = y - model.predict(psi)
    model.diagnostics["training_rmse"] = float(np.sqrt(np.mean(resid**2)))
    model.diagnostics["n_regressors"] = n_reg
    model.diagnostics["basis_size"] = len(basis)
    max_abs = max(
        float(np.max(np.abs(scn.trajectory(spec.output).values)))
        for scn in scenarios
    )
    return FittedStage(spec, model, pca_maps, max_abs)


def _one_step_rmse(stage: FittedStage, scenario: Scenario) -> float:
    rows, y = _build_stage_design(stage.spec, [scenario], stage.pca_maps)
    terms = compile_terms(stage.model.basis)
    pred = evaluate_terms(terms, rows) @ stage.model.theta + stage.model.intercept
    return float(np.sqrt(np.mean((y - pred) ** 2)))


def _structure_scenarios(scenarios, output, structure):
    """Resolve which traces feed the LARS structure-selection pass.

    ``"all"`` uses the whole design (concatenated rows); ``"max-trace"``
    uses the single trace with the largest output amplitude, after which
    the coefficients are refit by OLS on the full design. Structure
    selection on one extreme trace keeps the selected terms independent
    of the design size, which avoids drifting toward one-step-optimal
    but free-run-unstable supports as the design grows.
    """
    if structure == "all":
        return None
    if structure == "max-trace":
        amps = [
            float(np.max(np.abs(s.trajectory(output).values)))
            for s in scenarios
        ]
        return [scenarios[int(np.argmax(amps))]]
    raise ConfigError(f"unknown structure-selection mode {structure!r}")


def fit_narx(
    scenarios,
    spec: NarxSpec,
    rng=None,
    subsample_cap: int = _SUBSAMPLE_CAP,
    structure: str = "all",
) -> FittedSurrogate:
    """Fit a classical NARX surrogate on an experimental design."""
    scenarios = list(scenarios)
    _check_scenarios(scenarios, [spec])
    sel = _structure_scenarios(scenarios, spec.output, structure)
    stage = _fit_stage(spec, scenarios, rng, subsample_cap, sel)
    model = FittedSurrogate("narx", [stage], scenarios[0].grid.dt)
    _training_diagnostics(model, scenarios)
    return model


def fit_fnarx(
    scenarios,
    spec: FNarxSpec,
    rng=None,
    subsample_cap: int = _SUBSAMPLE_CAP,
    structure: str = "all",
) -> FittedSurrogate:
    """Fit a functional (windowed-PCA) NARX surrogate."""
    scenarios = list(scenarios)
    _check_scenarios(scenarios, [spec])
    sel = _structure_scenarios(scenarios, spec.output, structure)
    stage = _fit_stage(spec, scenarios, rng, subsample_cap, sel)
    model = FittedSurrogate("fnarx", [stage], scenarios[0].grid.dt)
    _training_diagnostics(model, scenarios)
    return model


def fit_chain(
    scenarios,
    chain: ChainSpec,
    rng=None,
    subsample_cap: int = _SUBSAMPLE_CAP,
    structure: str = "all",
    auxiliary: str = "true",
) -> FittedSurrogate:
    """Fit a chained (manifold-style) surrogate stage by stage.

    Each stage teacher-forces its own autoregressive lags with the true
    simulator output. By default the exogenous channels coming from
    earlier stages are the true simulator trajectories too
    (``auxiliary="true"``). With ``auxiliary="predicted"`` the earlier
    stages' recursive predictions over the design are used instead:
    later stages then see at training time exactly what they will see at
    forecast time, and can compensate systematic upstream errors — at
    the price of a noisier regression input.
    """
    if auxiliary not in ("predicted", "true"):
        raise ConfigError(f"unknown auxiliary mode {auxiliary!r}")
    scenarios = list(scenarios)
    _check_scenarios(scenarios, chain.stages)
    train = scenarios
    stages = []
    for k, spec in enumerate(chain.stages):
        stages.append(
            _fit_stage(
                spec,
                train,
                rng,
                subsample_cap,
                _structure_scenarios(train, spec.output, structure),
            )
        )
        is_last = k == len(chain.stages) - 1
        if auxiliary == "predicted" and not is_last:
            # replace the stage outputs seen so far with their free-run
            # forecasts for use as input channels by the remaining stages
            grid = scenarios[0].grid
            partial = FittedSurrogate("chain", list(stages), grid.dt)
            channels = {
                lab: np.stack(
                    [s.trajectory(lab).values for s in scenarios]
                )
                for lab in partial.required_inputs()
            }
            outputs, _ = forecast_batch(partial, channels, grid)
            train = [
                scn.with_response(
                    {
                        **dict(scn.response),
                        **{
                            lab: Trajectory(grid, arr[i], lab)
                            for lab, arr in outputs.items()
                        },
                    }
                )
                for i, scn in enumerate(scenarios)
            ]
    model = FittedSurrogate("chain", stages, scenarios[0].grid.dt)
    _training_diagnostics(model, scenarios)
    return model


def fit_mnarx(scenarios, chain: ChainSpec, **kw) -> FittedSurrogate:
    """Manifold NARX: a chain of lag-based stages."""
    return fit_chain(scenarios, chain, **kw)


def _check_scenarios(scenarios, specs):
    if not scenarios:
        raise ConfigError("experimental design is empty")
    grids = {s.grid for s in scenarios}
    if len(grids) > 1:
        raise ConfigError("scenarios do not share one TimeGrid")
    produced = set()
    for spec in specs:
        for lab in list(spec.input_labels) + [spec.output]:
            if lab in produced:
                continue
            for scn in scenarios:
                if not scn.has_label(lab):
                    raise ConfigError(
                        f"scenario is missing trajectory '{lab}' required for "
                        "training"
                    )
        produced.add(spec.output)


def _training_diagnostics(model: FittedSurrogate, scenarios):
    """Per-trace recursive forecast errors plus the teacher-forcing check
    (one-step residual can only be better than the recursive rollout)."""
    eps_bar, eps = mean_forecast_error(model, scenarios)
    model.diagnostics["per_trace_error"] = eps
    model.diagnostics["mean_forecast_error"] = eps_bar
    checks = []
    last = model.stages[-1]
    for scn, e in zip(scenarios, eps):
        rmse = _one_step_rmse(last, scn)
        y = scn.trajectory(last.spec.output).values
        var = float(np.var(y))
        one_step = rmse**2 / max(var, 1e-300)
        checks.append(bool(one_step <= e + 1e-9))
    model.diagnostics["teacher_forcing_ok"] = all(checks)


# ---------------------------------------------------------------------------
# recursive forecasting


def _window_weights(pca: PcaMap):
    """Collapse a PcaMap into (weights, offset): features = window @ W - b,
    window ordered by increasing lag."""
    n_cols = pca.n_columns
    w = np.zeros((n_cols, pca.n_features))
    w[pca.mask] = pca.eigvecs / pca.sigma[:, None]
    b = (pca.mu[pca.mask] / pca.sigma) @ pca.eigvecs
    return w, b


def _clamp_diverged(values, diverged, new_bad, guard, label, t, on_divergence):
    if new_bad.any():
        if on_divergence == "raise":
            idx = int(np.nonzero(new_bad)[0][0])
            raise DivergenceError(
                f"forecast of '{label}' diverged at step {t} (trace {idx})",
                step=t,
                label=label,
            )
        diverged |= new_bad
    values[diverged] = guard
    return values


def _forecast_narx_stage(
    stage, channels, grid, initial=None, static=None, on_divergence="raise"
):
    spec = stage.spec
    t_min = spec.t_min_index
    n = grid.n_steps
    batch = next(iter(channels.values())).shape[0]
    y = np.zeros((batch, n))
    if initial is not None:
        y[:, :t_min] = initial
    exo = [(channels[lab], lags) for lab, lags in spec.exogenous]
    terms = compile_terms(stage.model.basis)
    theta, icpt = stage.model.theta, stage.model.intercept
    guard = stage.guard
    diverged = np.zeros(batch, dtype=bool)

    n_static = static.shape[1] if static is not None else 0
    n_reg = spec.n_regressors(n_static)
    rows = np.empty((batch, n_reg))
    for t in range(t_min, n):
        c = 0
        for lag in spec.auto_lags:
            rows[:, c] = y[:, t - lag]
            c += 1
        for ch, lags in exo:
            for lag in lags:
                rows[:, c] = ch[:, t - lag]
                c += 1
        if n_static:
            rows[:, c:] = static
        val = evaluate_terms(terms, rows) @ theta + icpt
        new_bad = ~diverged & (~np.isfinite(val) | (np.abs(val) > guard))
        val = _clamp_diverged(
            val, diverged, new_bad, guard, spec.output, t, on_divergence
        )
        y[:, t] = val
    return y, diverged


def _forecast_fnarx_stage(
    stage, channels, grid, initial=None, static=None, on_divergence="raise"
):
    spec = stage.spec
    t_min = spec.t_min_index
    n = grid.n_steps
    n_fc = n - t_min
    batch = next(iter(channels.values())).shape[0]

    # exogenous features for the whole trace, accumulated lag by lag
    exo_feats = []
    for lab, w_len in spec.channels:
        pca = stage.pca_maps[lab]
        w, b = _window_weights(pca)
        f = np.broadcast_to(-b, (batch, n_fc, pca.n_features)).copy()
        x = channels[lab]
        for lag in range(w_len):
            if np.any(w[lag]):
                f += x[:, t_min - lag : n - lag, None] * w[lag][None, None, :]
        exo_feats.append(f)
    exo_feats = np.concatenate(exo_feats, axis=2)

    auto_pca = stage.pca_maps["__auto__"]
    w_auto, b_auto = _window_weights(auto_pca)
    # window slice y[:, t-T:t] is ordered by increasing time; the map's
    # columns are ordered by increasing lag, so reverse the weight rows.
    w_auto_rev = w_auto[::-1]
    t_y = spec.auto_window

    y = np.zeros((batch, n))
    if initial is not None:
        y[:, :t_min] = initial
    terms = compile_terms(stage.model.basis)
    theta, icpt = stage.model.theta, stage.model.intercept
    guard = stage.guard
    diverged = np.zeros(batch, dtype=bool)

    n_exo = exo_feats.shape[2]
    rows = np.empty((batch, n_exo + auto_pca.n_features))
    for t in range(t_min, n):
        rows[:, :n_exo] = exo_feats[:, t - t_min]
        rows[:, n_exo:] = y[:, t - t_y : t] @ w_auto_rev - b_auto
        val = evaluate_terms(terms, rows) @ theta + icpt
        new_bad = ~diverged & (~np.isfinite(val) | (np.abs(val) > guard))
        val = _clamp_diverged(
            val, diverged, new_bad, guard, spec.output, t, on_divergence
        )
        y[:, t] = val
    return y, diverged


def forecast_batch(
    model: FittedSurrogate,
    channels: dict[str, np.ndarray],
    grid: TimeGrid,
    initial=None,
    static=None,
    on_divergence: str = "raise",
):
    """Forecast many traces at once.

    ``channels`` maps each required input label to a (batch, n_steps)
    array. Returns (outputs, diverged): all stage outputs plus a boolean
    mask of traces that hit the divergence guard (always all-False when
    ``on_divergence="raise"``).
    """
    channels = dict(channels)
    missing = [l for l in model.required_inputs() if l not in channels]
    if missing:
        raise ConfigError(f"missing forecast input channels: {missing}")
    diverged = None
    outputs = {}
    for stage in model.stages:
        engine = (
            _forecast_narx_stage
            if isinstance(stage.spec, NarxSpec)
            else _forecast_fnarx_stage
        )
        init = initial if stage is model.stages[-1] else None
        values, div = engine(
            stage, channels, grid, init, static, on_divergence
        )
        outputs[stage.spec.output] = values
        channels[stage.spec.output] = values
        diverged = div if diverged is None else (diverged | div)
    return outputs, diverged


def _scenario_channels(model: FittedSurrogate, scenario: Scenario):
    return {
        lab: scenario.trajectory(lab).values[None, :]
        for lab in model.required_inputs()
    }


def forecast(
    model: FittedSurrogate, scenario: Scenario, initial=None
) -> dict[str, Trajectory]:
    """Forecast one scenario; returns all stage outputs as trajectories."""
    grid = scenario.grid
    if abs(grid.dt - model.grid_dt) > 1e-12 * model.grid_dt:
        raise ConfigError(
            f"scenario dt {grid.dt} does not match training dt {model.grid_dt}"
        )
    static = (
        scenario.static_params[None, :] if scenario.static_params.size else None
    )
    outputs, _ = forecast_batch(
        model, _scenario_channels(model, scenario), grid, initial, static
    )
    return {
        lab: Trajectory(grid, arr[0], lab) for lab, arr in outputs.items()
    }


def forecast_narx(model, scenario, initial=None) -> Trajectory:
    """Recursive forecast of the QoI for one scenario."""
    return forecast(model, scenario, initial)[model.output]


forecast_fnarx = forecast_narx
forecast_mnarx = forecast


# ---------------------------------------------------------------------------
# forecast error and model selection


def mean_forecast_error(model: FittedSurrogate, scenarios, gamma=None):
    """Normalized mean-square recursive forecast error, averaged over
    traces; divergent forecasts count as +inf."""
    scenarios = list(scenarios)
    if not scenarios:
        raise ConfigError("no scenarios to evaluate")
    grid = scenarios[0].grid
    label = model.output
    truth = np.stack([s.trajectory(label).values for s in scenarios])
    variances = truth.var(axis=1)
    if gamma is None:
        gamma = 1e-12 * max(float(variances.max()), 1e-300)
    channels = {
        lab: np.stack([s.trajectory(lab).values for s in scenarios])
        for lab in model.required_inputs()
    }
    outputs, diverged = forecast_batch(
        model, channels, grid, on_divergence="mask"
    )
    pred = outputs[label]
    eps = np.mean((truth - pred) ** 2, axis=1) / (variances + gamma)
    eps = np.where(diverged, np.inf, eps)
    return float(np.mean(eps)), [float(e) for e in eps]


def select_model(scenarios, candidates, rng=None):
    """Pick a stage configuration by the single-trace LARS + full-ED OLS
    refit + recursive forecast error procedure.

    All candidates must predict the same output. Returns (best spec,
    diagnostics with per-candidate mean errors).
    """
    scenarios = list(scenarios)
    candidates = list(candidates)
    if not candidates:
        raise ConfigError("no candidate specs")
    output = candidates[0].output
    if any(c.output != output for c in candidates):
        raise ConfigError("candidates must share one output label")

    # 1. the single trace with the largest response amplitude
    amps = [
        float(np.max(np.abs(s.trajectory(output).values))) for s in scenarios
    ]
    anchor = scenarios[int(np.argmax(amps))]

    errors = []
    fitted = []
    for cand in candidates:
        try:
            # 2.-3. LARS on the anchor trace, OLS-on-support over the full ED
            stage = _fit_stage(cand, scenarios, rng, lars_scenarios=[anchor])
            model = FittedSurrogate(
                "fnarx" if isinstance(cand, FNarxSpec) else "narx",
                [stage],
                scenarios[0].grid.dt,
            )
            eps_bar, _ = mean_forecast_error(model, scenarios)
        except (ConfigError, DivergenceError):
            eps_bar, model = np.inf, None
        errors.append(eps_bar)
        fitted.append(model)

    if not any(np.isfinite(e) for e in errors):
        raise ConfigError(
            "every candidate diverged on the experimental design; "
            f"errors: {errors}"
        )
    best = int(np.argmin(errors))
    return candidates[best], {
        "errors": errors,
        "best_index": best,
        "best_model": fitted[best],
    }
