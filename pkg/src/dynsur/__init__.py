"""Time-dependent surrogate models of nonlinear dynamical systems under
stochastic excitation, with Monte-Carlo first-passage reliability.

Surrogate architectures: polynomial NARX, chained (manifold) NARX, and
functional-feature NARX with PCA-compressed memory windows, all trained
by sparse LARS regression with leave-one-out model selection.
"""

from .design import CandidatePool, biased_select, random_subsample
from .errors import (
    CalibrationError,
    ConfigError,
    DimensionError,
    DivergenceError,
    DynsurError,
    NumericsError,
    SingularityError,
)
from .excitation import (
    GroundMotionSpec,
    HarmonicSuperpositionSpec,
    arias_duration,
    arias_intensity,
    sample_ground_motion,
    sample_ground_motion_batch,
    sample_harmonic,
)
from .features import PcaMap, fit_pca, project, reconstruct
from .modelio import load_surrogate, save_surrogate
from .narx import (
    ChainSpec,
    FittedSurrogate,
    FNarxSpec,
    NarxSpec,
    fit_chain,
    fit_fnarx,
    fit_mnarx,
    fit_narx,
    forecast,
    forecast_batch,
    forecast_narx,
    mean_forecast_error,
    select_model,
)
from .regression import BasisSpec, SparseModel, enumerate_basis, fit_lars, fit_ols
from .reliability import (
    FailureSpec,
    ReliabilityCurve,
    estimate_pf,
    pf_curve,
    reliability_index,
)
from .series import Scenario, TimeGrid, Trajectory
from .simulators import (
    BoucWenParams,
    QuarterCarParams,
    simulate_bouc_wen,
    simulate_bouc_wen_batch,
    simulate_quarter_car,
    simulate_quarter_car_batch,
)

__version__ = "0.1.0"
