"""Kalman-smoothed coefficient paths, computed two independent ways.

``smooth_direct`` conditions the stacked Gaussian vector ``(beta, Y)`` on ``Y``
with dense matrices.  ``smooth_recursive`` runs a forward filter with identity
transition and a Rauch-Tung-Striebel backward pass.  Neither route touches the
GLS normal equations, so both serve as oracles for the estimator.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .linalg import NotPositiveDefiniteError, cholesky
from .model import (
    DEFAULT_DENSE_CAP,
    StackedSystem,
    apply_C,
    compute_omega,
    dense_z,
    stack_intercept,
    state_covariance,
)

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class SmoothedResult:
    beta: np.ndarray
    mse_blocks: np.ndarray
    loglik: float
    mse: np.ndarray | None = None


@dataclass(frozen=True)
class FilterResult:
    beta: np.ndarray          # filtered means beta_{t|t}
    cov: np.ndarray           # P_{t|t}
    pred_cov: np.ndarray      # P_{t|t-1}
    loglik: float


def regression_lemma(mean_b, cov_b, cov_by, cov_y, y_dev):
    """Gaussian conditioning: mean and variance of ``b`` given ``y``.

    ``y_dev`` is ``y - E[y]``.  Returns ``(E[b|y], Var(b|y))``.
    """
    mean_b = np.asarray(mean_b, dtype=float)
    cov_b = np.atleast_2d(np.asarray(cov_b, dtype=float))
    cov_by = np.atleast_2d(np.asarray(cov_by, dtype=float))
    cov_y = np.atleast_2d(np.asarray(cov_y, dtype=float))
    y_dev = np.asarray(y_dev, dtype=float)
    low = cholesky(cov_y, "Var(Y)")
    # W = L^{-1} Cov(b, y)'
    w = solve_triangular(low, cov_by.T, lower=True, check_finite=False)
    u = solve_triangular(low, np.atleast_1d(y_dev), lower=True, check_finite=False)
    cond_mean = mean_b + (w.T @ u).reshape(mean_b.shape)
    cond_var = cov_b - w.T @ w
    cond_var = 0.5 * (cond_var + cond_var.T)
    return cond_mean, cond_var


def dense_log_likelihood(omega: np.ndarray, resid: np.ndarray) -> float:
    """Gaussian log density of ``resid`` with covariance ``omega``."""
    low = cholesky(omega, "Omega")
    u = solve_triangular(low, resid, lower=True, check_finite=False)
    logdet = 2.0 * np.log(np.diag(low)).sum()
    return float(-0.5 * (resid.size * LOG_2PI + logdet + u @ u))


def _diag_blocks(mat: np.ndarray, n: int, m: int) -> np.ndarray:
    idx = np.arange(n)
    return mat.reshape(n, m, n, m)[idx, :, idx, :]


def smooth_direct(sys: StackedSystem, v=None, cap: int = DEFAULT_DENSE_CAP) -> SmoothedResult:
    """Smoothed path ``C b0* + C Q C' Z' Omega^{-1} (Y - I v - Z C b0*)`` and its full MSE.

    ``v`` are known time-invariant intercepts (``None`` for none).
    """
    n, k, m = sys.z.shape
    omega = compute_omega(sys, cap)
    cqc = state_covariance(sys, cap)
    z = dense_z(sys)
    mean_b = apply_C(sys.b0_star, m)
    y_dev = sys.y.reshape(-1) - z @ mean_b
    if v is not None:
        y_dev = y_dev - stack_intercept(n, k) @ np.asarray(v, dtype=float)
    beta, mse = regression_lemma(mean_b, cqc, cqc @ z.T, omega, y_dev)
    return SmoothedResult(
        beta=beta.reshape(n, m),
        mse_blocks=_diag_blocks(mse, n, m),
        loglik=dense_log_likelihood(omega, y_dev),
        mse=mse,
    )


def kalman_filter(sys: StackedSystem, v=None) -> FilterResult:
    """Forward filter with identity transition, exact initial state ``b0``.

    Covariance updates use the Joseph form.
    """
    n, k, m = sys.z.shape
    offset = np.zeros(k) if v is None else np.asarray(v, dtype=float)
    eye = np.eye(m)
    beta = np.empty((n, m))
    cov = np.empty((n, m, m))
    pred_cov = np.empty((n, m, m))
    b = sys.b0.copy()
    p = np.zeros((m, m))
    loglik = 0.0
    for t in range(n):
        p_pred = p + sys.q[t]
        pred_cov[t] = p_pred
        zt = sys.z[t]
        err = sys.y[t] - offset - zt @ b
        f = zt @ p_pred @ zt.T + sys.h[t]
        try:
            f_low = cholesky(0.5 * (f + f.T))
        except NotPositiveDefiniteError as exc:
            raise NotPositiveDefiniteError(exc.pivot, f"innovation covariance at t={t}") from None
        # K = P Z' F^{-1}
        pz = p_pred @ zt.T
        gain = solve_triangular(f_low, solve_triangular(f_low, pz.T, lower=True), lower=True, trans="T").T
        b = b + gain @ err
        a = eye - gain @ zt
        p = a @ p_pred @ a.T + gain @ sys.h[t] @ gain.T
        p = 0.5 * (p + p.T)
        u = solve_triangular(f_low, err, lower=True)
        loglik += -0.5 * (k * LOG_2PI + 2.0 * np.log(np.diag(f_low)).sum() + u @ u)
        beta[t] = b
        cov[t] = p
    return FilterResult(beta, cov, pred_cov, float(loglik))


def smooth_recursive(sys: StackedSystem, v=None) -> SmoothedResult:
    """Fixed-interval smoother: forward filter then Rauch-Tung-Striebel backward pass."""
    filt = kalman_filter(sys, v)
    n, m = filt.beta.shape
    beta = filt.beta.copy()
    cov = filt.cov.copy()
    for t in range(n - 2, -1, -1):
        p_next = filt.pred_cov[t + 1]
        try:
            low = cholesky(p_next)
        except NotPositiveDefiniteError as exc:
            raise NotPositiveDefiniteError(exc.pivot, f"predicted covariance at t={t + 1}") from None
        # J = P_{t|t} P_{t+1|t}^{-1}
        gain = solve_triangular(low, solve_triangular(low, filt.cov[t], lower=True), lower=True, trans="T").T
        beta[t] = filt.beta[t] + gain @ (beta[t + 1] - filt.beta[t])
        c = filt.cov[t] + gain @ (cov[t + 1] - p_next) @ gain.T
        cov[t] = 0.5 * (c + c.T)
    return SmoothedResult(beta=beta, mse_blocks=cov, loglik=filt.loglik)
