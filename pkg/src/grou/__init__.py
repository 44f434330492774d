"""Levy-driven graph Ornstein-Uhlenbeck processes: simulation and inference.

The package simulates mean-reverting dynamics on graph nodes driven by
Brownian, compound-Poisson or inverse-Gaussian-mixture noise, observed on
(possibly non-uniform) high-frequency time grids, and estimates the dynamics
matrix by jump-filtered discretised maximum likelihood, least squares and an
adaptive L1 scheme, with a full noise-recovery and parametric-bootstrap
pipeline on top.
"""

from .errors import (
    BadDimension,
    ConfigError,
    DegenerateData,
    GrouError,
    InvalidDynamics,
    InvalidPsi,
    InvalidTheta,
    MissingGraph,
    MissingOracle,
    NoConvergence,
    NonUniformGrid,
    NotPSD,
    NumericalError,
    ParseError,
    SingularK,
    TooShort,
)
from .graphs import (
    NormalizedAdjacency,
    make_topology,
    q_from_psi,
    q_from_theta,
    rho,
    row_normalize,
    unvec,
    vec,
)
from .noise import (
    CompoundPoisson,
    GaussianJumps,
    GhypJumps,
    GhypMotion,
    GhypParams,
    IncrementMatrix,
    LevySpec,
    generate_increments,
    sample_brownian,
    sample_ghyp,
    sample_ig,
)
from .simulate import ObservationGrid, SampledPath, matrix_exp, simulate_path, stationary_init, subsample_path
from .estimators import (
    EstimateReport,
    FilterConfig,
    a_filtered,
    a_unfiltered_oracle,
    k_matrix,
    ls_estimator,
    psi_mle,
    rem,
    theta_mle,
)
from .lasso import (
    LassoConfig,
    SparseFit,
    evaluate_support_recovery,
    fit_adaptive_lasso,
    neg_penalized_objective,
    rate_window_lambda,
)
from .recovery import (
    NoiseDecomposition,
    RecoveredIncrements,
    decompose_noise,
    default_eta,
    eta_diagnostic,
    fit_ghyp,
    levy_spec_from_decomposition,
    preprocess,
    recover_increments,
)
from .config import ExperimentConfig
from .experiments import ResultTable, path_rng, run_experiment, run_fit_data

__version__ = "0.1.0"
