"""GLS-based estimation of time-varying parameter (V)AR coefficients.

The coefficients solve the stacked regression

    [ Y   ]   [ Z      ]          [ eps ]
    [ -b0*] = [ -C^{-1}] beta  +  [ eta ]

by (feasible) GLS.  The normal matrix ``G = Z'H^{-1}Z + C^{-1}'Q^{-1}C^{-1}`` is
block tridiagonal, so every solve here is ``O(n m^3)``.  With time-invariant
intercepts ``v`` the joint system in ``(v, beta)`` is reduced to ``G`` by a
Schur complement on the ``k x k`` intercept block.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve

from .linalg import (
    BlockCholesky,
    NotPositiveDefiniteError,
    block_cholesky,
    block_cholesky_with_jitter,
    cholesky,
    jitter,
    logdet_spd_stack,
    spd_inverse,
)
from .model import (
    DEFAULT_DENSE_CAP,
    CoefficientPath,
    InterceptMode,
    ModelSpec,
    ObservationSet,
    StackedSystem,
    build_system,
    compute_omega,
    constant_var_coefficients,
    dense_z,
    normal_matrix,
    normal_rhs,
    stack_intercept,
    state_covariance,
)
from .smoother import LOG_2PI, dense_log_likelihood


class Method(str, enum.Enum):
    OLS = "OLS"
    FGLS1 = "1FGLS"
    FGLS2 = "2FGLS"
    EXACT_GLS = "GLS"


class EstimationError(np.linalg.LinAlgError):
    def __init__(self, step: int, cause: Exception):
        self.step = step
        self.cause = cause
        super().__init__(f"estimation step {step} failed: {cause}")


@dataclass(frozen=True)
class CovEstimates:
    h: np.ndarray
    q: np.ndarray
    h_jittered: bool = False
    q_jittered: bool = False

    @property
    def jittered(self) -> bool:
        return self.h_jittered or self.q_jittered


@dataclass(frozen=True)
class EstimateSet:
    """One estimated coefficient path.

    ``mse_blocks`` are the diagonal blocks of ``Var(beta | Y)``.  With fixed
    intercepts, ``gls_var_blocks`` holds the diagonal blocks of ``Var(beta_hat)``,
    which additionally carry the uncertainty from estimating ``v``.

    ``weights`` are the covariances the estimate was computed with.  For
    results of :func:`fgls_pipeline`, ``cov_estimates`` holds the covariances
    re-estimated from this step's residuals and ``loglik`` is evaluated at them;
    otherwise ``loglik`` is evaluated at ``weights``.
    """

    method: Method
    path: CoefficientPath
    mse_blocks: np.ndarray | None
    loglik: float
    weights: CovEstimates
    cov_estimates: CovEstimates | None = None
    v_cov: np.ndarray | None = None
    gls_var_blocks: np.ndarray | None = None
    factor_jittered: bool = False

    @property
    def beta(self) -> np.ndarray:
        return self.path.beta

    @property
    def v_hat(self) -> np.ndarray | None:
        return self.path.v

    @property
    def jittered(self) -> bool:
        return (self.weights.jittered or self.factor_jittered
                or (self.cov_estimates is not None and self.cov_estimates.jittered))


@dataclass
class _Fit:
    beta: np.ndarray
    factor: BlockCholesky
    v: np.ndarray | None = None
    jittered: bool = False
    w: np.ndarray | None = None         # G^{-1} Z' H^{-1} I, shape (n m, k)
    f_inv: np.ndarray | None = None     # (I' Omega^{-1} I)^{-1}


def _intercept_cross(sys: StackedSystem) -> np.ndarray:
    """``Z' H^{-1} I`` as ``(n m, k)``."""
    return np.einsum("tki,tkl->til", sys.z, sys.h_inv()).reshape(sys.n * sys.m, sys.k)


def _factor(sys: StackedSystem, allow_jitter: bool) -> tuple[BlockCholesky, bool]:
    if allow_jitter:
        return block_cholesky_with_jitter(normal_matrix(sys))
    return block_cholesky(normal_matrix(sys)), False


def _fit(sys: StackedSystem, intercepts: bool, allow_jitter: bool = False) -> _Fit:
    factor, jittered = _factor(sys, allow_jitter)
    beta = factor.solve(normal_rhs(sys))
    if not intercepts:
        return _Fit(beta.reshape(sys.n, sys.m), factor, jittered=jittered)
    e = _intercept_cross(sys)
    w = factor.solve(e)
    h_inv = sys.h_inv()
    a = h_inv.sum(axis=0)
    rhs_v = np.einsum("tkl,tl->k", h_inv, sys.y)
    schur = a - e.T @ w
    schur = 0.5 * (schur + schur.T)
    try:
        f_inv = spd_inverse(schur, "I' Omega^{-1} I")
    except NotPositiveDefiniteError as err:
        raise np.linalg.LinAlgError(
            "I' Omega^{-1} I is singular; intercepts are not identified (collinear data?)"
        ) from err
    v = f_inv @ (rhs_v - e.T @ beta)
    beta = beta - w @ v
    return _Fit(beta.reshape(sys.n, sys.m), factor, v=v, jittered=jittered, w=w, f_inv=f_inv)


def _loglik_from_factor(sys: StackedSystem, factor: BlockCholesky, v=None) -> float:
    """Banded log-likelihood.

    ``log|Omega| = log|H| + log|Q| + log|G|`` (``|C| = 1``) and
    ``r' Omega^{-1} r = r' H^{-1} r - s' G^{-1} s`` with ``s = Z' H^{-1} r``.
    """
    resid = sys.y - sys.zc_b0()
    if v is not None:
        resid = resid - np.asarray(v, dtype=float)
    h_inv = sys.h_inv()
    hr = np.einsum("tkl,tl->tk", h_inv, resid)
    s = np.einsum("tki,tk->ti", sys.z, hr).reshape(-1)
    quad = float(np.sum(resid * hr) - s @ factor.solve(s))
    logdet = logdet_spd_stack(sys.h) + logdet_spd_stack(sys.q) + factor.logdet()
    return -0.5 * (resid.size * LOG_2PI + logdet + quad)


def log_likelihood(sys: StackedSystem, v=None, method: str = "banded", cap: int = DEFAULT_DENSE_CAP) -> float:
    """Gaussian log-likelihood of ``Y`` given ``H``, ``Q``, ``b0*`` and optional fixed intercepts ``v``.

    ``method="banded"`` is the production route; ``method="dense"`` forms
    ``Omega = H + Z C Q C' Z'`` explicitly and is capped.
    """
    if method == "banded":
        return _loglik_from_factor(sys, block_cholesky(normal_matrix(sys)), v)
    if method == "dense":
        omega = compute_omega(sys, cap)
        resid = (sys.y - sys.zc_b0()).reshape(-1)
        if v is not None:
            resid = resid - stack_intercept(sys.n, sys.k) @ np.asarray(v, dtype=float)
        return dense_log_likelihood(omega, resid)
    raise ValueError(f"unknown likelihood method {method!r}")


def _weights_of(sys: StackedSystem) -> CovEstimates:
    return CovEstimates(sys.h[0].copy(), sys.q[0].copy())


def _as_estimate(sys, fit: _Fit, method: Method, mse: bool, loglik: bool) -> EstimateSet:
    mse_blocks = fit.factor.inverse_diagonal_blocks() if mse else None
    gls_var = None
    if mse and fit.w is not None:
        wb = fit.w.reshape(sys.n, sys.m, sys.k)
        gls_var = mse_blocks + np.einsum("tik,kl,tjl->tij", wb, fit.f_inv, wb)
    ll = _loglik_from_factor(sys, fit.factor, fit.v) if loglik else float("nan")
    return EstimateSet(
        method=method,
        path=CoefficientPath(fit.beta, fit.v),
        mse_blocks=mse_blocks,
        loglik=ll,
        weights=_weights_of(sys),
        v_cov=fit.f_inv,
        gls_var_blocks=gls_var,
        factor_jittered=fit.jittered,
    )


def estimate_gls(sys: StackedSystem, h=None, q=None, *, method: Method = Method.EXACT_GLS,
                 mse: bool = True, loglik: bool = True) -> EstimateSet:
    """GLS on the stacked regression; equals the Kalman-smoothed path.

    ``h``/``q`` override the system's weights (a single block or per-period blocks).
    """
    if h is not None or q is not None:
        sys = sys.with_weights(h, q)
    return _as_estimate(sys, _fit(sys, intercepts=False), Method(method), mse, loglik)


def estimate_ols(sys: StackedSystem, *, mse: bool = True, loglik: bool = True) -> EstimateSet:
    """OLS: GLS with identity ``H_t`` and ``Q_t``."""
    return estimate_gls(sys, np.eye(sys.k), np.eye(sys.m), method=Method.OLS, mse=mse, loglik=loglik)


def estimate_with_intercepts(sys: StackedSystem, h=None, q=None, *, method: Method = Method.EXACT_GLS,
                             mse: bool = True, loglik: bool = True) -> EstimateSet:
    """Joint GLS for fixed intercepts ``v`` and the coefficient path.

    ``v_hat`` equals the ML estimate given ``H``, ``Q`` and ``b0*``, with
    covariance ``v_cov = (I' Omega^{-1} I)^{-1}``.
    """
    if h is not None or q is not None:
        sys = sys.with_weights(h, q)
    return _as_estimate(sys, _fit(sys, intercepts=True), Method(method), mse, loglik)


def v_ml_direct(sys: StackedSystem, cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
    """``(I' Omega^{-1} I)^{-1} I' Omega^{-1} (Y - Z C b0*)`` from the dense ``Omega``."""
    omega = compute_omega(sys, cap)
    ii = stack_intercept(sys.n, sys.k)
    om_i = np.linalg.solve(omega, ii)
    resid = (sys.y - sys.zc_b0()).reshape(-1)
    return np.linalg.solve(ii.T @ om_i, om_i.T @ resid)


def smoothed_variance(sys: StackedSystem, mode: str = "kalman", *, drop_v_variance: bool = False,
                      cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
    """Dense ``Var(beta | Y)`` (``mode="kalman"``) or ``Var(beta_hat)`` (``mode="gls"``).

    The GLS variance adds ``CQC'Z'Omega^{-1} I (I'Omega^{-1}I)^{-1} I'Omega^{-1} Z CQC'``,
    the part due to estimating ``v``.  ``drop_v_variance`` replaces
    ``(I'Omega^{-1}I)^{-1}`` by zero.
    """
    if mode not in ("kalman", "gls"):
        raise ValueError(f"mode must be 'kalman' or 'gls', got {mode!r}")
    omega = compute_omega(sys, cap)
    cqc = state_covariance(sys, cap)
    z = dense_z(sys)
    low = cholesky(omega, "Omega")
    zv = z @ cqc                                  # Z C Q C'
    om_zv = cho_solve((low, True), zv)            # Omega^{-1} Z C Q C'
    kalman = cqc - zv.T @ om_zv
    kalman = 0.5 * (kalman + kalman.T)
    if mode == "kalman":
        return kalman
    if drop_v_variance:
        return kalman
    ii = stack_intercept(sys.n, sys.k)
    om_i = cho_solve((low, True), ii)
    d = om_zv.T @ ii                              # CQC'Z'Omega^{-1} I
    corr = d @ np.linalg.solve(ii.T @ om_i, d.T)
    out = kalman + corr
    return 0.5 * (out + out.T)


def residual_covariances(est: EstimateSet, sys: StackedSystem, regularize: bool = True) -> CovEstimates:
    """Time-invariant ``H`` and ``Q`` from the estimate's residuals.

    Observation residuals are ``y_t - Z_t beta_t (- v)``; state residuals are
    ``beta_t - beta_{t-1}`` with ``beta_p = b0``.  Both are averaged over the
    ``n`` periods.  With ``regularize`` the jitter policy is applied.
    """
    beta = est.path.beta
    eps = sys.y - np.einsum("tkm,tm->tk", sys.z, beta)
    if est.path.v is not None:
        eps = eps - est.path.v
    eta = np.diff(np.vstack([sys.b0[None, :], beta]), axis=0)
    n = beta.shape[0]
    h = eps.T @ eps / n
    q = eta.T @ eta / n
    if not regularize:
        return CovEstimates(h, q)
    h, hj = jitter(h)
    q, qj = jitter(q)
    return CovEstimates(h, q, hj, qj)


def fgls_pipeline(obs: ObservationSet, spec: ModelSpec, steps: int = 2, b0=None, *,
                  mse: bool = True) -> list[EstimateSet]:
    """OLS followed by up to two feasible GLS passes.

    Step 0 is OLS.  Each later step re-weights with the time-invariant ``H``
    and ``Q`` estimated from the previous step's residuals.  Every result's
    ``loglik`` is evaluated at the covariances estimated from its own
    residuals.  ``b0`` defaults to the full-sample constant-coefficient VAR.
    """
    if steps not in (0, 1, 2):
        raise ValueError(f"steps must be 0, 1 or 2, got {steps}")
    intercepts = spec.intercept_mode is InterceptMode.TIME_INVARIANT
    if b0 is None:
        b0, _ = constant_var_coefficients(obs, spec)
    base = build_system(obs, spec, b0)
    methods = [Method.OLS, Method.FGLS1, Method.FGLS2][:steps + 1]

    results = []
    sys = base.with_weights(np.eye(spec.k), np.eye(spec.m))
    fit = None
    for step, method in enumerate(methods):
        try:
            if fit is None:
                fit = _fit(sys, intercepts, allow_jitter=True)
            est = _as_estimate(sys, fit, method, mse, loglik=False)
            cov = residual_covariances(est, base)
            sys = base.with_weights(cov.h, cov.q)
            # the factorization at the new weights serves both this step's
            # likelihood and the next step's estimate
            if step < len(methods) - 1:
                fit = _fit(sys, intercepts, allow_jitter=True)
                factor, ll_jittered = fit.factor, fit.jittered
            else:
                factor, ll_jittered = _factor(sys, allow_jitter=True)
            ll = _loglik_from_factor(sys, factor, est.path.v)
        except np.linalg.LinAlgError as err:
            raise EstimationError(step, err) from err
        results.append(replace(est, cov_estimates=cov, loglik=ll,
                               factor_jittered=est.factor_jittered or ll_jittered))
    return results
