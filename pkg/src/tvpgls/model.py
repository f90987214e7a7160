"""Domain types and stacked-matrix builders for time-varying parameter (V)AR models.

The measurement equation is ``y_t = Z_t beta_t + eps_t`` and the coefficients
follow a driftless random walk ``beta_t = beta_{t-1} + eta_t`` for
``t = p+1, ..., T``.  Stacked over the ``n = T - p`` usable periods this is
``Y = Z beta + eps`` with ``beta = C (b0* + eta)``, where ``C`` is the block
lower-triangular matrix of identities (block cumulative sum).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import block_diag

from .linalg import BlockTridiagonal, cholesky, spd_inverse_stack

DEFAULT_DENSE_CAP = 2000


class ValidationError(ValueError):
    """Invalid model dimensions or inputs; ``field`` names the offending field."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


class DenseCapError(ValueError):
    """Raised when a dense-validation-only computation exceeds the size cap."""


class InterceptMode(str, enum.Enum):
    NONE = "none"
    TIME_VARYING = "time_varying"
    TIME_INVARIANT = "time_invariant"


@dataclass(frozen=True)
class ModelSpec:
    k: int
    p: int
    T: int
    intercept_mode: InterceptMode = InterceptMode.TIME_VARYING

    def __post_init__(self):
        object.__setattr__(self, "intercept_mode", InterceptMode(self.intercept_mode))
        if self.k < 1:
            raise ValidationError("k", f"need k >= 1, got {self.k}")
        if self.p < 0:
            raise ValidationError("p", f"need p >= 0, got {self.p}")
        if self.T - self.p < 2:
            raise ValidationError("T", f"need T - p >= 2, got T={self.T}, p={self.p}")
        if self.m < 1:
            raise ValidationError("p", "a model without lags needs a time-varying intercept")

    @property
    def n(self) -> int:
        """Effective sample length ``T - p``."""
        return self.T - self.p

    @property
    def has_intercept_column(self) -> bool:
        return self.intercept_mode is InterceptMode.TIME_VARYING

    @property
    def m(self) -> int:
        """Coefficient dimension per period."""
        if self.has_intercept_column:
            return self.k * (self.k * self.p + 1)
        return self.k * self.k * self.p

    def with_T(self, T: int) -> "ModelSpec":
        return replace(self, T=T)


@dataclass(frozen=True)
class ObservationSet:
    y: np.ndarray

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if y.ndim != 2:
            raise ValidationError("y", f"expected a (T, k) array, got ndim={y.ndim}")
        if not np.all(np.isfinite(y)):
            bad = int(np.argwhere(~np.isfinite(y))[0, 0])
            raise ValidationError("y", f"non-finite value at period {bad}")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    @property
    def T(self) -> int:
        return self.y.shape[0]

    @property
    def k(self) -> int:
        return self.y.shape[1]

    def check(self, spec: ModelSpec) -> None:
        if self.k != spec.k:
            raise ValidationError("k", f"observations have {self.k} variables, spec says {spec.k}")
        if self.T != spec.T:
            raise ValidationError("T", f"observations have {self.T} periods, spec says {spec.T}")


@dataclass(frozen=True)
class CoefficientPath:
    """Coefficients ``beta_{p+1} ... beta_T`` as an ``(n, m)`` array, plus optional fixed intercepts."""

    beta: np.ndarray
    v: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.beta.shape[0]

    @property
    def m(self) -> int:
        return self.beta.shape[1]

    def check(self, spec: ModelSpec) -> None:
        if self.beta.shape != (spec.n, spec.m):
            raise ValidationError("beta", f"expected shape {(spec.n, spec.m)}, got {self.beta.shape}")
        if (self.v is not None) != (spec.intercept_mode is InterceptMode.TIME_INVARIANT):
            raise ValidationError("v", "fixed intercepts present iff intercept_mode is time_invariant")


def build_regressors(obs: ObservationSet, spec: ModelSpec) -> np.ndarray:
    """Per-period design blocks ``Z_t = [1, y'_{t-1}, ..., y'_{t-p}] kron I_k``.

    Returns an ``(n, k, m)`` array; the leading 1 is dropped unless the model has
    a time-varying intercept column.
    """
    obs.check(spec)
    y = obs.y
    k, p, n = spec.k, spec.p, spec.n
    cols = [y[p - lag:spec.T - lag] for lag in range(1, p + 1)]
    if spec.has_intercept_column:
        cols.insert(0, np.ones((n, 1)))
    x = np.concatenate(cols, axis=1) if cols else np.zeros((n, 0))
    eye = np.eye(k)
    # row-of-regressors kron I_k: column j*k + i of Z_t is x_t[j] * e_i
    z = np.einsum("tj,ab->tajb", x, eye).reshape(n, k, x.shape[1] * k)
    return z


def lagged_design(obs: ObservationSet, spec: ModelSpec, intercept: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``[1, y'_{t-1}, ..., y'_{t-p}]`` and targets ``y_t`` for ``t = p+1..T``."""
    y = obs.y
    p, T = spec.p, spec.T
    cols = [y[p - lag:T - lag] for lag in range(1, p + 1)]
    if intercept:
        cols.insert(0, np.ones((T - p, 1)))
    return np.concatenate(cols, axis=1), y[p:]


def constant_var_coefficients(obs: ObservationSet, spec: ModelSpec) -> tuple[np.ndarray, np.ndarray | None]:
    """Full-sample time-invariant VAR(p) by OLS, laid out to match ``beta_t``.

    Returns ``(b0, v)``: ``b0`` has length ``m``; ``v`` is the intercept vector
    when the model carries time-invariant intercepts, else ``None``.
    """
    want_const = spec.intercept_mode is not InterceptMode.NONE
    x, target = lagged_design(obs, spec, intercept=want_const)
    coef, *_ = np.linalg.lstsq(x, target, rcond=None)
    # vec of the k x (kp+1) coefficient matrix, column-major == row-major ravel of coef
    if spec.intercept_mode is InterceptMode.TIME_INVARIANT:
        return coef[1:].ravel(), coef[0].copy()
    return coef.ravel(), None


def _check_stacked(x: np.ndarray, m: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if m < 1 or x.shape[0] % m:
        raise ValueError(f"length {x.shape[0]} is not a multiple of block size {m}")
    return x


def apply_C(x: np.ndarray, m: int) -> np.ndarray:
    """Block cumulative sum (the random walk generating matrix ``C``) along axis 0."""
    x = _check_stacked(x, m)
    n = x.shape[0] // m
    return np.cumsum(x.reshape(n, m, *x.shape[1:]), axis=0).reshape(x.shape)


def apply_C_inverse(x: np.ndarray, m: int) -> np.ndarray:
    """Block first difference ``C^{-1}`` along axis 0."""
    x = _check_stacked(x, m)
    n = x.shape[0] // m
    xb = x.reshape(n, m, *x.shape[1:])
    out = xb.copy()
    out[1:] -= xb[:-1]
    return out.reshape(x.shape)


def apply_C_T(x: np.ndarray, m: int) -> np.ndarray:
    """``C'``: reverse block cumulative sum."""
    x = _check_stacked(x, m)
    n = x.shape[0] // m
    xb = x.reshape(n, m, *x.shape[1:])
    return np.flip(np.cumsum(np.flip(xb, 0), axis=0), 0).reshape(x.shape)


def apply_C_inverse_T(x: np.ndarray, m: int) -> np.ndarray:
    """``C^{-1}'``: block forward difference ``x_t - x_{t+1}``."""
    x = _check_stacked(x, m)
    n = x.shape[0] // m
    xb = x.reshape(n, m, *x.shape[1:])
    out = xb.copy()
    out[:-1] -= xb[1:]
    return out.reshape(x.shape)


def _as_blocks(w, n: int, d: int, name: str) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim == 0:
        w = w * np.eye(d)
    if w.ndim == 2:
        w = np.broadcast_to(w, (n, d, d))
    if w.shape != (n, d, d):
        raise ValidationError(name, f"expected ({d}, {d}) or ({n}, {d}, {d}), got {w.shape}")
    return np.array(w)


@dataclass(frozen=True)
class StackedSystem:
    """Block form of the stacked regression.

    ``z`` is ``(n, k, m)``, ``y`` the ``(n, k)`` stacked observations ``Y_T``,
    ``h`` and ``q`` the ``(n, k, k)`` / ``(n, m, m)`` error covariance blocks and
    ``b0`` the known initial coefficient vector.
    """

    z: np.ndarray
    y: np.ndarray
    h: np.ndarray
    q: np.ndarray
    b0: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        n, k, m = self.z.shape
        if self.y.shape != (n, k):
            raise ValidationError("y", f"expected {(n, k)}, got {self.y.shape}")
        if self.h.shape != (n, k, k):
            raise ValidationError("h", f"expected {(n, k, k)}, got {self.h.shape}")
        if self.q.shape != (n, m, m):
            raise ValidationError("q", f"expected {(n, m, m)}, got {self.q.shape}")
        if self.b0.shape != (m,):
            raise ValidationError("b0", f"expected {(m,)}, got {self.b0.shape}")

    @classmethod
    def build(cls, z, y, h, q, b0) -> "StackedSystem":
        z = np.asarray(z, dtype=float)
        n, k, m = z.shape
        return cls(
            z=z,
            y=np.asarray(y, dtype=float).reshape(n, k),
            h=_as_blocks(h, n, k, "h"),
            q=_as_blocks(q, n, m, "q"),
            b0=np.asarray(b0, dtype=float).reshape(m),
        )

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def k(self) -> int:
        return self.z.shape[1]

    @property
    def m(self) -> int:
        return self.z.shape[2]

    @property
    def b0_star(self) -> np.ndarray:
        out = np.zeros(self.n * self.m)
        out[:self.m] = self.b0
        return out

    def with_weights(self, h=None, q=None) -> "StackedSystem":
        return StackedSystem.build(
            self.z, self.y,
            self.h if h is None else h,
            self.q if q is None else q,
            self.b0,
        )

    def with_b0(self, b0) -> "StackedSystem":
        return StackedSystem.build(self.z, self.y, self.h, self.q, b0)

    def with_y(self, y) -> "StackedSystem":
        return StackedSystem.build(self.z, y, self.h, self.q, self.b0)

    def truncate(self, n: int) -> "StackedSystem":
        return StackedSystem.build(self.z[:n], self.y[:n], self.h[:n], self.q[:n], self.b0)

    # cached block inverses; the system is immutable so caching is safe
    def h_inv(self) -> np.ndarray:
        if "h_inv" not in self._cache:
            self._cache["h_inv"] = spd_inverse_stack(self.h, "H")
        return self._cache["h_inv"]

    def q_inv(self) -> np.ndarray:
        if "q_inv" not in self._cache:
            self._cache["q_inv"] = spd_inverse_stack(self.q, "Q")
        return self._cache["q_inv"]

    def zc_b0(self) -> np.ndarray:
        """``Z C b0*`` as ``(n, k)``: every period sees ``b0``."""
        return self.z @ self.b0

    def check_spd(self) -> None:
        for t in range(self.n):
            cholesky(self.h[t], f"H block {t}")
            cholesky(self.q[t], f"Q block {t}")


def build_system(obs: ObservationSet, spec: ModelSpec, b0, h=None, q=None) -> StackedSystem:
    """Assemble the stacked system; weights default to identity blocks."""
    z = build_regressors(obs, spec)
    h = np.eye(spec.k) if h is None else h
    q = np.eye(spec.m) if q is None else q
    return StackedSystem.build(z, obs.y[spec.p:], h, q, b0)


def normal_matrix(sys: StackedSystem) -> BlockTridiagonal:
    """``Z' H^{-1} Z + C^{-1}' Q^{-1} C^{-1}`` in block-tridiagonal form."""
    h_inv, q_inv = sys.h_inv(), sys.q_inv()
    ztz = np.einsum("tki,tkl,tlj->tij", sys.z, h_inv, sys.z)
    diag = ztz + q_inv
    diag[:-1] += q_inv[1:]
    upper = -q_inv[1:]
    return BlockTridiagonal(diag, upper)


def normal_rhs(sys: StackedSystem, y: np.ndarray | None = None) -> np.ndarray:
    """``Z' H^{-1} Y + C^{-1}' Q^{-1} b0*`` as a flat ``n*m`` vector."""
    y = sys.y if y is None else y
    rhs = np.einsum("tki,tkl,tl->ti", sys.z, sys.h_inv(), y)
    rhs[0] += sys.q_inv()[0] @ sys.b0
    return rhs.reshape(-1)


def _check_cap(dim: int, cap: int) -> None:
    if dim > cap:
        raise DenseCapError(
            f"dense-validation-only computation of size {dim} exceeds cap {cap}; "
            "use the block-tridiagonal path or raise the cap"
        )


def dense_z(sys: StackedSystem) -> np.ndarray:
    return block_diag(*sys.z)


def dense_h(sys: StackedSystem) -> np.ndarray:
    return block_diag(*sys.h)


def dense_q(sys: StackedSystem) -> np.ndarray:
    return block_diag(*sys.q)


def state_covariance(sys: StackedSystem, cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
    """``C Q C'``, the unconditional covariance of the stacked coefficients."""
    _check_cap(sys.n * sys.k, cap)
    m = sys.m
    cq = apply_C(dense_q(sys), m)
    return apply_C(cq.T, m).T


def compute_omega(sys: StackedSystem, cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
    """``Omega = H + Z C Q C' Z'`` densely; validation use only."""
    _check_cap(sys.n * sys.k, cap)
    z = dense_z(sys)
    omega = dense_h(sys) + z @ state_covariance(sys, cap) @ z.T
    omega = 0.5 * (omega + omega.T)
    cholesky(omega, "Omega")
    return omega


def dense_normal_matrix(sys: StackedSystem) -> np.ndarray:
    """Normal matrix assembled from dense ``Z``, ``H^{-1}``, ``Q^{-1}`` and ``C^{-1}``."""
    z = dense_z(sys)
    h_inv = np.linalg.inv(dense_h(sys))
    q_inv = np.linalg.inv(dense_q(sys))
    m = sys.m
    c_inv_q = apply_C_inverse_T(q_inv, m)           # C^{-1}' Q^{-1}
    c_term = apply_C_inverse_T(c_inv_q.T, m).T       # X C^{-1} = (C^{-1}' X')'
    return z.T @ h_inv @ z + c_term


def stack_intercept(n: int, k: int) -> np.ndarray:
    """``[I_k, I_k, ..., I_k]'`` of shape ``(n k, k)``."""
    return np.tile(np.eye(k), (n, 1))
