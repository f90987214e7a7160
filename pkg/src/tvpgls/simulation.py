"""Monte Carlo study of the GLS-based estimators on simulated TV-VAR data.

Each replication draws a random-walk coefficient path starting at zero,
generates data from the TV-VAR, re-estimates the path with OLS / 1FGLS / 2FGLS
and records per-coefficient moments and accuracy measures.  Random streams are
keyed by ``(seed, replication, attempt)`` so results do not depend on how
replications are scheduled across workers.
"""
from __future__ import annotations

import enum
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .estimator import fgls_pipeline
from .model import CoefficientPath, InterceptMode, ModelSpec, ObservationSet, build_regressors

log = logging.getLogger(__name__)

EXPLOSION_THRESHOLD = 1e4
MAX_REJECTIONS = 1000
MAX_FAILURE_RATE = 0.05
STATS = ("m", "s", "dist", "rat")


class ErrorKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    MIXTURE = "mixture"
    SV_RW = "sv_rw"
    SV_AR = "sv_ar"
    MIXTURE_SV_RW = "mixture_sv_rw"
    MIXTURE_SV_AR = "mixture_sv_ar"

    @property
    def mixture_state(self) -> bool:
        return self in (ErrorKind.MIXTURE, ErrorKind.MIXTURE_SV_RW, ErrorKind.MIXTURE_SV_AR)

    @property
    def stochastic_volatility(self) -> bool:
        return self not in (ErrorKind.GAUSSIAN, ErrorKind.MIXTURE)


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class DgpConfig:
    """One simulation cell.

    ``h_scale`` and ``q_scale`` are standard deviations of the observation and
    state noise.  Mixture kinds draw state noise from ``N(0, sd1^2)`` with
    probability ``bern_p`` and ``N(0, sd2^2)`` otherwise.  Stochastic-volatility
    kinds scale unit observation noise by ``sqrt(h_it)`` with
    ``log h_it = rho log h_i,t-1 + e_it``; ``sv_rw`` forces ``rho = 1``.  The
    ``mixture_sv_*`` kinds combine mixture state noise with volatile observation noise.
    """

    T: int = 100
    k: int = 3
    p: int = 2
    intercept_mode: InterceptMode = InterceptMode.TIME_VARYING
    h_scale: float = 1.0
    q_scale: float = 0.03
    error_kind: ErrorKind = ErrorKind.GAUSSIAN
    bern_p: float = 0.95
    sd1: float = 0.03
    sd2: float = 0.1
    rho: float = 1.0
    e_sd: float = 0.02
    log_h0: float = 0.0
    seed: int = 0
    explosion_threshold: float = EXPLOSION_THRESHOLD

    def __post_init__(self):
        object.__setattr__(self, "error_kind", ErrorKind(self.error_kind))
        object.__setattr__(self, "intercept_mode", InterceptMode(self.intercept_mode))
        if self.h_scale <= 0:
            raise ValueError(f"h_scale must be > 0, got {self.h_scale}")
        if self.q_scale < 0 or self.sd1 < 0 or self.sd2 < 0 or self.e_sd < 0:
            raise ValueError("noise scales must be non-negative")
        if not 0 < self.bern_p < 1:
            raise ValueError(f"bern_p must lie in (0, 1), got {self.bern_p}")
        if not 0 < self.rho <= 1:
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")
        if not self.explosion_threshold > 0:
            raise ValueError(f"explosion_threshold must be > 0, got {self.explosion_threshold}")
        self.spec  # validates dimensions

    @property
    def spec(self) -> ModelSpec:
        return ModelSpec(self.k, self.p, self.T, self.intercept_mode)

    @property
    def sv_rho(self) -> float:
        return 1.0 if self.error_kind in (ErrorKind.SV_RW, ErrorKind.MIXTURE_SV_RW) else self.rho


def snr(cfg: DgpConfig) -> float:
    """Signal-to-noise ratio: state-noise variance over observation-noise variance."""
    return cfg.q_scale ** 2 / cfg.h_scale ** 2


def mixture_draws(rng: np.random.Generator, size, bern_p: float = 0.95, sd1: float = 0.03,
                  sd2: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """Two-component normal mixture; returns the draws and the large-component mask."""
    large = rng.random(size) >= bern_p
    small_draw = sd1 * rng.standard_normal(size)
    large_draw = sd2 * rng.standard_normal(size)
    return np.where(large, large_draw, small_draw), large


def sv_errors(rng_shock: np.random.Generator, rng_vol: np.random.Generator, T: int, k: int,
              rho: float, e_sd: float, log_h0: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Unit-scale errors with (autoregressive) stochastic volatility; returns ``(eps, h)``."""
    e = e_sd * rng_vol.standard_normal((T, k))
    log_h = np.empty((T, k))
    prev = np.full(k, float(log_h0))
    for t in range(T):
        prev = rho * prev + e[t]
        log_h[t] = prev
    h = np.exp(log_h)
    return np.sqrt(h) * rng_shock.standard_normal((T, k)), h


@dataclass(frozen=True)
class SimulatedData:
    obs: ObservationSet
    truth: CoefficientPath
    rejections: int = 0
    volatility: np.ndarray | None = None


def _draw(cfg: DgpConfig, rng_seq: np.random.SeedSequence):
    spec = cfg.spec
    n, m, k, p, T = spec.n, spec.m, spec.k, spec.p, spec.T
    r_state, r_obs, r_vol = (np.random.default_rng(s) for s in rng_seq.spawn(3))
    if cfg.error_kind.mixture_state:
        eta, _ = mixture_draws(r_state, (n, m), cfg.bern_p, cfg.sd1, cfg.sd2)
    else:
        eta = cfg.q_scale * r_state.standard_normal((n, m))
    beta = np.cumsum(eta, axis=0)
    vol = None
    if cfg.error_kind.stochastic_volatility:
        eps, vol = sv_errors(r_obs, r_vol, T, k, cfg.sv_rho, cfg.e_sd, cfg.log_h0)
        eps = cfg.h_scale * eps
    else:
        eps = cfg.h_scale * r_obs.standard_normal((T, k))

    # periods before p+1 carry beta = b0 = 0, so they are pure noise
    y = np.zeros((T, k))
    y[:p] = eps[:p]
    tv = spec.has_intercept_column
    for t in range(p, T):
        lags = y[t - p:t][::-1].reshape(-1)
        x = np.concatenate(([1.0], lags)) if tv else lags
        coef = beta[t - p].reshape(x.size, k)   # rows of the coefficient matrix transposed
        y[t] = x @ coef + eps[t]
        if not np.all(np.abs(y[t]) < cfg.explosion_threshold):
            return None
    return y, beta, vol


def simulate_tvvar(cfg: DgpConfig, rep: int = 0) -> SimulatedData:
    """Generate one data set and its true coefficient path.

    Paths with ``|y_t|`` reaching ``cfg.explosion_threshold`` are discarded and redrawn from the next
    substream; the number of discards is reported.
    """
    for attempt in range(MAX_REJECTIONS + 1):
        out = _draw(cfg, np.random.SeedSequence([cfg.seed, rep, attempt]))
        if out is not None:
            y, beta, vol = out
            return SimulatedData(ObservationSet(y), CoefficientPath(beta), attempt, vol)
    raise SimulationError(f"more than {MAX_REJECTIONS} consecutive explosive paths (seed={cfg.seed}, rep={rep})")


@dataclass(frozen=True)
class ReplicationMetrics:
    mean_true: np.ndarray
    sd_true: np.ndarray
    mean_est: np.ndarray
    sd_est: np.ndarray
    dist: np.ndarray
    rat: np.ndarray


def compute_metrics(true_beta: np.ndarray, est_beta: np.ndarray) -> ReplicationMetrics:
    """Per-coefficient sample mean, sample sd (``n - 1`` divisor), mean absolute
    distance and sd ratio for one replication.  ``rat`` is NaN where the true sd is 0."""
    true_beta = np.asarray(true_beta, dtype=float)
    est_beta = np.asarray(est_beta, dtype=float)
    if true_beta.shape != est_beta.shape:
        raise ValueError(f"shape mismatch {true_beta.shape} vs {est_beta.shape}")
    sd_true = true_beta.std(axis=0, ddof=1)
    sd_est = est_beta.std(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rat = np.where(sd_true > 0, sd_est / sd_true, np.nan)
    return ReplicationMetrics(
        mean_true=true_beta.mean(axis=0),
        sd_true=sd_true,
        mean_est=est_beta.mean(axis=0),
        sd_est=sd_est,
        dist=np.abs(true_beta - est_beta).mean(axis=0),
        rat=rat,
    )


def lower_median(x) -> float:
    x = np.sort(np.asarray(x, dtype=float))
    return float(x[(x.size - 1) // 2])


@dataclass(frozen=True)
class MetricTable:
    """Replication averages per coefficient for one estimator."""

    method: str
    m_true: np.ndarray
    s_true: np.ndarray
    m: np.ndarray
    s: np.ndarray
    dist: np.ndarray
    rat: np.ndarray
    n_reps: int
    rejections: int = 0
    rat_excluded: int = 0

    def median(self, stat: str) -> float:
        return lower_median(getattr(self, stat))

    @property
    def medians(self) -> dict[str, float]:
        return {s: self.median(s) for s in STATS}


@dataclass
class ReplicationResult:
    cfg: DgpConfig
    tables: dict[str, MetricTable]
    loglik: dict[str, np.ndarray]
    n_reps: int
    rejections: int
    failures: list[tuple[int, str]] = field(default_factory=list)

    def rows(self) -> list[tuple[str, str, float, int, int, int]]:
        """``(method, stat, value, n_reps, seed, rejections)`` rows: truth m/s first."""
        seed = self.cfg.seed
        first = next(iter(self.tables.values()))
        out = [
            ("true", "m", lower_median(first.m_true), self.n_reps, seed, self.rejections),
            ("true", "s", lower_median(first.s_true), self.n_reps, seed, self.rejections),
        ]
        for label, tab in self.tables.items():
            for stat in STATS:
                out.append((label, stat, tab.median(stat), self.n_reps, seed, self.rejections))
        return out


def fgls_paths(obs: ObservationSet, spec: ModelSpec, truth: np.ndarray, steps: int = 2):
    """Default replication estimator: coefficient paths and log-likelihoods per method."""
    ests = fgls_pipeline(obs, spec, steps, mse=False)
    return {e.method.value: (e.beta, e.loglik) for e in ests}


def _one(rep: int, cfg: DgpConfig, estimator):
    try:
        data = simulate_tvvar(cfg, rep)
        paths = estimator(data.obs, cfg.spec, data.truth.beta)
    except (np.linalg.LinAlgError, ValueError, FloatingPointError) as err:
        return rep, None, f"{type(err).__name__}: {err}"
    truth = data.truth.beta
    metrics = {label: (compute_metrics(truth, beta), ll) for label, (beta, ll) in paths.items()}
    return rep, (metrics, data.rejections), None


def run_replications(cfg: DgpConfig, n_reps: int, steps: int = 2, workers: int = 1,
                     estimator=None) -> ReplicationResult:
    """Run ``n_reps`` replications and aggregate per-coefficient averages.

    ``estimator(obs, spec, true_beta)`` must return ``{label: (beta_path, loglik)}``;
    the default runs OLS and the FGLS steps.  Aggregation is ordered by
    replication index, so the result is identical for any ``workers``.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    estimator = estimator or partial(fgls_paths, steps=steps)
    job = partial(_one, cfg=cfg, estimator=estimator)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(job, range(n_reps), chunksize=max(1, n_reps // (4 * workers))))
    else:
        outs = [job(r) for r in range(n_reps)]
    outs.sort(key=lambda o: o[0])

    failures = [(rep, msg) for rep, res, msg in outs if res is None]
    for rep, msg in failures:
        log.warning("replication %d (seed %d) failed: %s", rep, cfg.seed, msg)
    if len(failures) > MAX_FAILURE_RATE * n_reps:
        raise SimulationError(f"{len(failures)} of {n_reps} replications failed; first: {failures[0]}")
    good = [res for _, res, _ in outs if res is not None]
    rejections = sum(r for _, r in good)
    labels = list(good[0][0].keys())

    tables, loglik = {}, {}
    for label in labels:
        reps = [res[label][0] for res, _ in good]
        rat = np.stack([r.rat for r in reps])
        excluded = int(np.isnan(rat).any(axis=1).sum())
        with np.errstate(invalid="ignore"):
            rat_avg = np.nanmean(rat, axis=0) if excluded < len(reps) else np.full(rat.shape[1], np.nan)
        tables[label] = MetricTable(
            method=label,
            m_true=np.mean([r.mean_true for r in reps], axis=0),
            s_true=np.mean([r.sd_true for r in reps], axis=0),
            m=np.mean([r.mean_est for r in reps], axis=0),
            s=np.mean([r.sd_est for r in reps], axis=0),
            dist=np.mean([r.dist for r in reps], axis=0),
            rat=rat_avg,
            n_reps=len(reps),
            rejections=rejections,
            rat_excluded=excluded,
        )
        loglik[label] = np.array([res[label][1] for res, _ in good])
    return ReplicationResult(cfg, tables, loglik, len(good), rejections, failures)
