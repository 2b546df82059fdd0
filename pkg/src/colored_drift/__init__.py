"""Simulation and drift inference for SDEs driven by colored noise."""

from .errors import (
    AssumptionError,
    ColoredDriftError,
    ConfigError,
    ErgodicityError,
    GramSingularError,
    SimulationError,
    StabilityError,
    UnstableMatrixError,
)
from .model import (
    BUILTIN_BASES,
    ColoredModel,
    DissipativityBounds,
    DriftBasis,
    IsotropicNormDiffusion,
    LevyLimitModel,
    LevyModel,
    LimitModel,
    StateDiffusion,
    additive_2d_model,
    additive_limit,
    identity_basis,
    levy_limit,
    limit_coefficients,
    make_basis,
    neg_cubic_basis,
    neg_identity_basis,
    ou1d_model,
    stationary_covariance,
    validate_filter_width,
)
from .simulate import (
    ColoredSimulator,
    LimitSimulator,
    Path,
    TimeGrid,
    geometric_checkpoints,
    read_path_csv,
    simulate_colored,
    simulate_coupled,
    simulate_limit,
    write_path_csv,
)
from .filtering import ExponentialFilter, FilterConfig, filter_path
from .estimators import (
    DriftEstimate,
    EstimatePath,
    MleAccumulator,
    estimate_path,
    mle,
    mle_filtered,
    mle_levy,
)
from .sgdct import (
    LearningRate,
    SgdctAccumulator,
    sgdct_closed_form_1d,
    sgdct_levy,
    sgdct_run,
)
from .experiments import (
    CltSample,
    EXPERIMENTS,
    IdentityResidual,
    MonteCarloSummary,
    ReplicationTask,
    batch_means,
    clt_variance_mle,
    clt_variance_sgdct,
    coupling_rms,
    experiment_clt,
    identity_residuals,
    optimal_sgdct_rate,
    ou_stationary_predictions,
    run_replications,
)

__version__ = "0.1.0"
