"""Batch command-line front end.

Every stochastic stage derives its seed from the user's master seed plus
a stage name, so re-running a command reproduces its outputs exactly.
Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O error.
"""

from __future__ import annotations

import csv
import json
import sys
from importlib import resources
from pathlib import Path

import click
import numpy as np
import yaml

from . import pipeline, report
from .design import CandidatePool, biased_select, random_subsample, selection_to_csv
from .errors import ConfigError, NumericsError
from .excitation import (
    GroundMotionSpec,
    HarmonicSuperpositionSpec,
    sample_ground_motion_batch,
    sample_harmonic,
)
from .modelio import load_surrogate, save_surrogate
from .narx import (
    ChainSpec,
    FNarxSpec,
    NarxSpec,
    fit_chain,
    fit_fnarx,
    fit_narx,
    forecast,
    forecast_batch,
    mean_forecast_error,
    spec_from_dict,
)
from .reliability import pf_curve
from .seeding import rng_for
from .series import (
    Scenario,
    TimeGrid,
    Trajectory,
    trajectories_from_csv,
    trajectories_to_csv,
)
from .simulators import (
    BoucWenParams,
    QuarterCarParams,
    simulate_bouc_wen_batch,
    simulate_quarter_car_batch,
)

_CHUNK = 2000


# ---------------------------------------------------------------------------
# configuration handling


def _load_config(path_or_name: str) -> dict:
    """Read a YAML config file; bare names resolve to shipped presets."""
    p = Path(path_or_name)
    if p.exists():
        text = p.read_text()
    else:
        name = p.stem.replace("-", "_")
        ref = resources.files("dynsur.presets").joinpath(f"{name}.preset")
        if not ref.is_file():
            raise ConfigError(
                f"config '{path_or_name}' is neither a file nor a preset name"
            )
        text = ref.read_text()
    cfg = yaml.safe_load(text)
    if not isinstance(cfg, dict):
        raise ConfigError(f"config '{path_or_name}' must be a mapping")
    return cfg


def _grid_from(cfg: dict) -> TimeGrid:
    g = cfg.get("grid")
    if g is None:
        raise ConfigError("config needs a 'grid' section (t0, dt, n_steps)")
    try:
        return TimeGrid(float(g["t0"]), float(g["dt"]), int(g["n_steps"]))
    except KeyError as exc:
        raise ConfigError(f"grid section is missing key {exc}") from exc


def _excitation_spec(cfg: dict, grid: TimeGrid, model: str | None = None):
    exc = cfg.get("excitation", cfg)
    model = model or exc.get("model")
    if model == "harmonic":
        return HarmonicSuperpositionSpec(
            grid,
            n_omega_max=int(exc.get("n_omega_max", 5)),
            amplitude_range=tuple(exc.get("amplitude_range", (-1.0, 1.0))),
            frequency_range=tuple(exc.get("frequency_range", (-1.0, 1.0))),
            phase_range=tuple(exc.get("phase_range", (-1.0, 1.0))),
        )
    if model == "ground-motion":
        kw = {}
        for key in (
            "arias_intensity",
            "effective_duration",
            "t_mid",
            "filter_damping",
            "gravity",
        ):
            if key in exc:
                kw[key] = float(exc[key])
        if "omega_mid_hz" in exc:
            kw["omega_mid"] = 2.0 * np.pi * float(exc["omega_mid_hz"])
        if "omega_slope_hz" in exc:
            kw["omega_slope"] = 2.0 * np.pi * float(exc["omega_slope_hz"])
        return GroundMotionSpec(grid, **kw)
    raise ConfigError(f"unknown excitation model '{model}'")


def _system_params(name: str, cfg: dict | None):
    """Accept a bare parameter mapping, a {params: ...} file, or a preset."""
    if cfg is None:
        params = {}
    elif isinstance(cfg.get("system"), dict):
        params = cfg["system"].get("params", {})
    elif "params" in cfg:
        params = cfg["params"]
    else:
        params = {k: v for k, v in cfg.items() if isinstance(v, (int, float))}
    try:
        if name == "quarter-car":
            return QuarterCarParams(**{k: float(v) for k, v in params.items()})
        if name == "bouc-wen":
            return BoucWenParams(**{k: float(v) for k, v in params.items()})
    except TypeError as exc:
        raise ConfigError(f"bad parameters for system '{name}': {exc}") from exc
    raise ConfigError(f"unknown system '{name}'")


def _child_seeds(master: int, stage: str, n: int) -> np.ndarray:
    return rng_for(master, stage).integers(0, 2**63 - 1, size=n)


def _scenario_files(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    files = sorted(
        p
        for p in path.glob("*.csv")
        if p.name not in ("index.csv", "pool.csv", "selection.csv")
    )
    if not files:
        raise ConfigError(f"no scenario CSV files found under {path}")
    return files


def _read_scenario(path: Path, output_labels=()) -> Scenario:
    trajs = trajectories_from_csv(path.read_text())
    exo = tuple(t for t in trajs if t.label not in output_labels)
    resp = {t.label: t for t in trajs if t.label in output_labels}
    return Scenario(exo, response=resp)


def _kinematics_for(model, acc: np.ndarray, grid: TimeGrid) -> dict:
    channels = {"acc": acc}
    need = set(model.required_inputs())
    if need & {"vel", "disp"}:
        vel, disp = pipeline._kinematic_channels(acc, grid)
        channels["vel"] = vel
        channels["disp"] = disp
    return channels


def _parse_thresholds(text: str) -> np.ndarray:
    """Either 'a,b,c' or 'start:stop:count'."""
    try:
        if ":" in text:
            lo, hi, n = text.split(":")
            return np.linspace(float(lo), float(hi), int(n))
        return np.sort(np.array([float(v) for v in text.split(",")]))
    except ValueError as exc:
        raise ConfigError(f"cannot parse thresholds '{text}': {exc}") from exc


def _apply_jobs(jobs: int | None):
    if jobs is None:
        return
    if jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return
    threadpool_limits(limits=jobs)


# ---------------------------------------------------------------------------
# commands


@click.group()
def cli():
    """Time-dependent surrogate modeling and first-passage reliability."""


@cli.command("gen-excitation")
@click.option(
    "--model", type=click.Choice(["harmonic", "ground-motion"]), required=True
)
@click.option("--config", "config_path", required=True)
@click.option("--n", "count", type=int, required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_dir", required=True)
def cmd_gen_excitation(model, config_path, count, seed, out_dir):
    """Draw excitation realizations; one CSV each plus an index CSV."""
    cfg = _load_config(config_path)
    grid = _grid_from(cfg)
    spec = _excitation_spec(cfg, grid, model)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = _child_seeds(seed, "excitation", count)
    amps = np.empty(count)
    for lo in range(0, count, _CHUNK):
        hi = min(lo + _CHUNK, count)
        if model == "harmonic":
            block = np.stack(
                [sample_harmonic(spec, int(s)).values for s in seeds[lo:hi]]
            )
            labels = ["x"]
            columns = [block]
        else:
            block = sample_ground_motion_batch(spec, seeds[lo:hi])
            vel, disp = pipeline._kinematic_channels(block, grid)
            labels = ["acc", "vel", "disp"]
            columns = [block, vel, disp]
        amps[lo:hi] = np.max(np.abs(block), axis=1)
        for j in range(hi - lo):
            trajs = [
                Trajectory(grid, col[j], lab) for lab, col in zip(labels, columns)
            ]
            (out / f"excitation_{lo + j:05d}.csv").write_text(
                trajectories_to_csv(trajs)
            )
    pool = CandidatePool(tuple(range(count)), tuple(seeds), amps)
    (out / "index.csv").write_text(pool.to_csv())
    click.echo(f"wrote {count} realizations to {out}")


@cli.command("simulate")
@click.option(
    "--system", type=click.Choice(["quarter-car", "bouc-wen"]), required=True
)
@click.option("--params", "params_path", default=None)
@click.option("--excitation", "excitation_path", required=True)
@click.option("--out", "out_dir", required=True)
def cmd_simulate(system, params_path, excitation_path, out_dir):
    """Integrate the reference simulator over stored excitations."""
    cfg = _load_config(params_path) if params_path else None
    params = _system_params(system, cfg)
    files = _scenario_files(Path(excitation_path))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    drive = "x" if system == "quarter-car" else "acc"
    for path in files:
        scenario = _read_scenario(path)
        if not scenario.has_label(drive):
            raise ConfigError(f"{path} has no '{drive}' column")
        exo = scenario.trajectory(drive)
        batch = exo.values[None, :]
        if system == "quarter-car":
            arrays, _ = simulate_quarter_car_batch(params, batch, exo.grid)
        else:
            arrays, _ = simulate_bouc_wen_batch(params, batch, exo.grid)
        trajs = list(scenario.all_trajectories()) + [
            Trajectory(exo.grid, v[0], lab) for lab, v in arrays.items()
        ]
        (out / f"response_{path.stem}.csv").write_text(trajectories_to_csv(trajs))
    click.echo(f"simulated {len(files)} scenarios into {out}")


@cli.command("design")
@click.option("--pool", "pool_path", required=True)
@click.option("--strategy", type=click.Choice(["random", "biased"]), required=True)
@click.option("--n", "n_ed", type=int, required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_path", required=True)
def cmd_design(pool_path, strategy, n_ed, seed, out_path):
    """Select an experimental design from a candidate-pool index."""
    pool = CandidatePool.from_csv(Path(pool_path).read_text())
    if strategy == "biased":
        ids = biased_select(pool, n_ed, seed)
    else:
        ids = random_subsample(pool, n_ed, seed)
    Path(out_path).write_text(selection_to_csv(pool, ids))
    click.echo(f"selected {len(ids)} of {len(pool)} candidates -> {out_path}")


@cli.command("fit")
@click.option("--arch", type=click.Choice(["narx", "mnarx", "fnarx"]), required=True)
@click.option("--config", "config_path", required=True)
@click.option("--ed", "ed_dir", required=True)
@click.option("--out", "out_path", required=True)
@click.option(
    "--structure",
    type=click.Choice(["all", "max-trace"]),
    default=None,
    help="rows used for sparse structure selection (default: config "
    "'fit.structure', else all traces)",
)
@click.option("--jobs", type=int, default=None)
def cmd_fit(arch, config_path, ed_dir, out_path, structure, jobs):
    """Train a surrogate on an experimental-design directory."""
    _apply_jobs(jobs)
    cfg = _load_config(config_path)
    if structure is None:
        structure = cfg.get("fit", {}).get("structure", "all")
    spec = spec_from_dict(cfg.get("surrogate", cfg))
    if arch == "narx" and not isinstance(spec, NarxSpec):
        raise ConfigError("--arch narx requires a single 'narx' stage spec")
    if arch == "mnarx" and not isinstance(spec, ChainSpec):
        raise ConfigError("--arch mnarx requires a 'chain' spec")
    if arch == "fnarx" and not isinstance(spec, (FNarxSpec, ChainSpec)):
        raise ConfigError("--arch fnarx requires a 'fnarx' or 'chain' spec")
    outputs = (
        tuple(s.output for s in spec.stages)
        if isinstance(spec, ChainSpec)
        else (spec.output,)
    )
    scenarios = [
        _read_scenario(p, outputs) for p in _scenario_files(Path(ed_dir))
    ]
    if isinstance(spec, ChainSpec):
        model = fit_chain(scenarios, spec, structure=structure)
    elif isinstance(spec, FNarxSpec):
        model = fit_fnarx(scenarios, spec, structure=structure)
    else:
        model = fit_narx(scenarios, spec, structure=structure)
    save_surrogate(model, out_path)
    eps = model.diagnostics.get("mean_forecast_error")
    click.echo(f"fitted {arch} on {len(scenarios)} traces (eps_bar={eps:.3e})")


@cli.command("predict")
@click.option("--model", "model_path", required=True)
@click.option("--excitation", "excitation_dir", required=True)
@click.option("--out", "out_dir", required=True)
def cmd_predict(model_path, excitation_dir, out_dir):
    """Recursive surrogate forecasts over stored excitations."""
    model = load_surrogate(model_path)
    files = _scenario_files(Path(excitation_dir))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for path in files:
        scenario = _read_scenario(path)
        pred = forecast(model, scenario)
        trajs = list(scenario.all_trajectories()) + list(pred.values())
        (out / f"prediction_{path.stem}.csv").write_text(
            trajectories_to_csv(trajs)
        )
    click.echo(f"forecast {len(files)} scenarios into {out}")


@cli.command("reliability")
@click.option("--model", "model_path", required=True)
@click.option("--excitation-spec", "spec_path", required=True)
@click.option("--n-mcs", type=int, required=True)
@click.option("--thresholds", required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_path", required=True)
@click.option("--jobs", type=int, default=None)
def cmd_reliability(model_path, spec_path, n_mcs, thresholds, seed, out_path, jobs):
    """Monte-Carlo first-passage curve from surrogate rollouts."""
    _apply_jobs(jobs)
    model = load_surrogate(model_path)
    cfg = _load_config(spec_path)
    grid = _grid_from(cfg)
    spec = _excitation_spec(cfg, grid)
    thr = _parse_thresholds(thresholds)
    seeds = _child_seeds(seed, "mcs", n_mcs)
    maxima = np.empty(n_mcs)
    for lo in range(0, n_mcs, _CHUNK):
        hi = min(lo + _CHUNK, n_mcs)
        if isinstance(spec, HarmonicSuperpositionSpec):
            channels = {
                "x": np.stack(
                    [sample_harmonic(spec, int(s)).values for s in seeds[lo:hi]]
                )
            }
        else:
            acc = sample_ground_motion_batch(spec, seeds[lo:hi])
            channels = _kinematics_for(model, acc, grid)
        m, _, _ = pipeline._forecast_maxima(model, channels, grid)
        maxima[lo:hi] = m
    curve = pf_curve(maxima, thr)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(curve.to_csv())
    report.save_pf_curves({"surrogate": curve}, out.with_suffix(".png"))
    click.echo(f"wrote {out} and {out.with_suffix('.png')}")


@cli.command("validate")
@click.option("--model", "model_path", required=True)
@click.option("--reference", "reference_dir", required=True)
@click.option("--out", "out_dir", required=True)
def cmd_validate(model_path, reference_dir, out_dir):
    """Compare surrogate forecasts against stored reference responses."""
    model = load_surrogate(model_path)
    label = model.output
    files = _scenario_files(Path(reference_dir))
    scenarios = [_read_scenario(p, (label,) ) for p in files]
    for p, s in zip(files, scenarios):
        if not s.has_label(label):
            raise ConfigError(f"{p} has no reference '{label}' column")
    eps_bar, eps = mean_forecast_error(model, scenarios)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    grid = scenarios[0].grid
    truth = np.stack([s.trajectory(label).values for s in scenarios])
    preds = np.empty_like(truth)
    for i, s in enumerate(scenarios):
        preds[i] = forecast(model, s)[label].values

    with (out / "per_trace_error.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "file", "epsilon"])
        for i, (p, e) in enumerate(zip(files, eps)):
            w.writerow([i, p.name, f"{e:.10e}"])

    ref_max = np.max(np.abs(truth), axis=1)
    sur_max = np.max(np.abs(preds), axis=1)
    with (out / "max_response_cdf.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantile", "reference_max", "surrogate_max"])
        q = (np.arange(len(ref_max)) + 0.5) / len(ref_max)
        for row in zip(q, np.sort(ref_max), np.sort(sur_max)):
            w.writerow([f"{v:.10e}" for v in row])

    thr = pipeline._pf_thresholds(ref_max)
    curves = {
        "reference": pf_curve(ref_max, thr),
        "surrogate": pf_curve(sur_max, thr),
    }
    for tag, c in curves.items():
        (out / f"pf_{tag}.csv").write_text(c.to_csv())
    report.save_pf_curves(curves, out / "pf_overlay.png")
    report.save_trace_overlays(
        grid.times(), truth, preds, out / "trace_overlays.png"
    )
    summary = {
        "n_traces": len(scenarios),
        "eps_bar": float(eps_bar),
        "eps_median": float(np.median(eps)),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1))
    click.echo(f"eps_bar = {eps_bar:.4e} over {len(scenarios)} traces -> {out}")


@cli.command("benchmark")
@click.argument("name", type=click.Choice(["quarter-car", "bouc-wen"]))
@click.option("--out", "out_dir", required=True)
@click.option("--seed", type=int, default=20260826, show_default=True)
@click.option("--quick", is_flag=True, help="small pool/ensemble smoke run")
@click.option("--no-model-selection", is_flag=True)
@click.option("--jobs", type=int, default=None)
def cmd_benchmark(name, out_dir, seed, quick, no_model_selection, jobs):
    """End-to-end benchmark study: pool, designs, fits, reliability."""
    _apply_jobs(jobs)
    cfg = pipeline.StudyConfig(
        master_seed=seed, quick=quick, model_selection=not no_model_selection
    )
    try:
        if name == "quarter-car":
            pipeline.quarter_car_study(cfg, out_dir=out_dir)
        else:
            pipeline.bouc_wen_study(cfg, out_dir=out_dir)
    except Exception as exc:
        raise click.ClickException(
            f"benchmark '{name}' failed during execution: {exc}"
        ) from exc
    click.echo(f"benchmark '{name}' complete; artifacts in {out_dir}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return 2
    except click.exceptions.Abort:
        return 2
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return 2
    except NumericsError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return 3
    except OSError as exc:
        click.echo(f"I/O error: {exc}", err=True)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
