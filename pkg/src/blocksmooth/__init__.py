"""Blocked particle filtering and smoothing on lattice state-space models,
with an exact Gaussian oracle for the linear-Gaussian benchmark."""

from .errors import (
    BlocksmoothError,
    CholeskyError,
    ConfigError,
    MStepError,
    NumericalFailure,
    WeightDegeneracyError,
)
from .estimation import (
    EstimationTrace,
    Method,
    SmootherKind,
    em_loop,
    estimate_smoothed_functional,
    gradient_ascent,
    random_theta_init,
)
from .filtering import (
    FilterKind,
    FilterProvider,
    ParticleCloud,
    ProposalKind,
    local_log_weight,
    make_filter_provider,
    normalize_log_weights,
    propose_locally_optimal,
    resample_categorical,
    run_bpf,
    run_pf,
)
from .functionals import (
    ComponentSumFunctional,
    LocalStateFunctional,
    PairProductFunctional,
    ScoreFunctional,
    SuffStatFunctional,
    SuffStats,
    lambda_map,
    psi_map,
    score_functionals,
    suffstat_functionals,
)
from .gaussian import (
    GaussianBelief,
    KalmanResult,
    SmoothingMoments,
    exact_score,
    exact_suff_stats,
    kalman_filter,
    rts_smoother,
    sample_exact_filter,
    sample_gaussian,
    tilde_filter,
)
from .lattice import BlockPartition, SpatialGraph, build_lattice
from .model import LatticeLGModel, ModelParams, make_model
from .rng import RngKey
from .smoothing import (
    BlockedSmoothingResult,
    backward_kernel_row,
    backward_sampling,
    blocked_backward_kernel_row,
    blocked_backward_sampling,
    blocked_forward_smoothing,
    forward_smoothing,
)

__version__ = "0.1.0"
