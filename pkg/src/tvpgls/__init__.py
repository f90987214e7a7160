"""GLS estimation of time-varying parameter (V)AR models and its Kalman-smoother equivalence."""
from __future__ import annotations

from .estimator import (
    CovEstimates,
    EstimateSet,
    EstimationError,
    Method,
    estimate_gls,
    estimate_ols,
    estimate_with_intercepts,
    fgls_pipeline,
    log_likelihood,
    residual_covariances,
    smoothed_variance,
    v_ml_direct,
)
from .linalg import BlockTridiagonal, NotPositiveDefiniteError, block_cholesky, solve_spd
from .model import (
    CoefficientPath,
    DenseCapError,
    InterceptMode,
    ModelSpec,
    ObservationSet,
    StackedSystem,
    ValidationError,
    apply_C,
    apply_C_inverse,
    build_regressors,
    build_system,
    compute_omega,
    normal_matrix,
)
from .simulation import (
    DgpConfig,
    ErrorKind,
    MetricTable,
    compute_metrics,
    run_replications,
    simulate_tvvar,
    snr,
)
from .smoother import SmoothedResult, kalman_filter, regression_lemma, smooth_direct, smooth_recursive

__version__ = "0.1.0"
