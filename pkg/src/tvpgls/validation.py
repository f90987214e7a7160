"""Numerical identity suite on random small instances.

Every check compares two independently computed quantities and reports a
max-norm relative deviation (absolute for log-likelihoods).  The dense
matrices formed here are for validation only.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimator import estimate_gls, estimate_with_intercepts, log_likelihood, smoothed_variance, v_ml_direct
from .linalg import block_cholesky, relative_deviation, solve_spd, woodbury_sides
from .model import (
    DEFAULT_DENSE_CAP,
    InterceptMode,
    ModelSpec,
    ObservationSet,
    StackedSystem,
    apply_C,
    apply_C_inverse,
    build_system,
    compute_omega,
    dense_h,
    dense_normal_matrix,
    dense_q,
    dense_z,
    normal_matrix,
    stack_intercept,
    state_covariance,
)
from .smoother import kalman_filter, smooth_direct, smooth_recursive

# default tolerances per identity
TOLERANCES = {
    "path_equivalence": 1e-8,
    "mse_equivalence": 1e-7,
    "intercept_ml": 1e-8,
    "intercept_path": 1e-8,
    "intercept_variance_banded": 1e-8,
    "variance_difference_psd": 1e-10,
    "variance_correction": 1e-8,
    "variance_three_term": 1e-8,
    "intercept_weight_obs": 1e-8,
    "intercept_weight_prior": 1e-8,
    "path_weight_obs": 1e-8,
    "path_weight_prior": 1e-8,
    "f_inverse": 1e-8,
    "g_inverse": 1e-8,
    "omega_inverse": 1e-8,
    "partitioned_inverse": 1e-8,
    "loglik_banded_dense": 1e-6,
    "loglik_filter": 1e-6,
    "c_round_trip": 1e-12,
    "normal_matrix_blockwise": 1e-12,
    "solver_backends": 1e-8,
    "woodbury": 1e-8,
}


@dataclass(frozen=True)
class Instance:
    """A random capped problem in both intercept layouts."""

    seed: int
    obs: ObservationSet
    tv: StackedSystem      # time-varying intercept column
    ti: StackedSystem      # separate time-invariant intercepts


@dataclass
class ValidationReport:
    tolerances: dict[str, float]
    max_dev: dict[str, float] = field(default_factory=dict)
    worst_seed: dict[str, int] = field(default_factory=dict)
    n_instances: int = 0

    def record(self, name: str, value: float, seed: int) -> None:
        # NaN counts as worst so a broken identity cannot hide
        old = self.max_dev.get(name)
        if old is None or np.isnan(value) or (not np.isnan(old) and value > old):
            self.max_dev[name] = float(value)
            self.worst_seed[name] = seed

    @property
    def failures(self) -> list[str]:
        return [k for k, v in self.max_dev.items() if not v <= self.tolerances[k]]

    @property
    def ok(self) -> bool:
        return not self.failures

    def lines(self) -> list[str]:
        out = []
        for name, dev in self.max_dev.items():
            tol = self.tolerances[name]
            status = "ok" if dev <= tol else "FAIL"
            out.append(f"{name:26s} max_dev={dev:.3e} tol={tol:.0e} {status} worst_seed={self.worst_seed[name]}")
        return out


def random_spd(rng: np.random.Generator, d: int, scale: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((d, d))
    return scale * (a @ a.T / d + 0.5 * np.eye(d))


def random_instance(seed: int, k: int | None = None, p: int | None = None, n: int | None = None) -> Instance:
    """k in {1,2,3}, p in {1,2}, n in 10..40, per-period random SPD ``H_t``, ``Q_t``."""
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 4)) if k is None else k
    p = int(rng.integers(1, 3)) if p is None else p
    n = int(rng.integers(10, 41)) if n is None else n
    obs = ObservationSet(rng.standard_normal((n + p, k)))
    out = {}
    for mode in (InterceptMode.TIME_VARYING, InterceptMode.TIME_INVARIANT):
        spec = ModelSpec(k, p, n + p, mode)
        h = np.stack([random_spd(rng, k) for _ in range(n)])
        q = np.stack([random_spd(rng, spec.m, 0.1) for _ in range(n)])
        b0 = 0.3 * rng.standard_normal(spec.m)
        out[mode] = build_system(obs, spec, b0, h, q)
    return Instance(seed, obs, out[InterceptMode.TIME_VARYING], out[InterceptMode.TIME_INVARIANT])


def _blocks(mat: np.ndarray, n: int, m: int) -> np.ndarray:
    idx = np.arange(n)
    return mat.reshape(n, m, n, m)[idx, :, idx, :]


def _dense_pieces(sys: StackedSystem, cap: int) -> dict[str, np.ndarray]:
    n, k, m = sys.z.shape
    z = dense_z(sys)
    h_inv = np.linalg.inv(dense_h(sys))
    q_inv = np.linalg.inv(dense_q(sys))
    c = apply_C(np.eye(n * m), m)
    c_inv = apply_C_inverse(np.eye(n * m), m)
    omega = compute_omega(sys, cap)
    om_inv = np.linalg.inv(omega)
    cqc = state_covariance(sys, cap)
    ii = stack_intercept(n, k)
    g = z.T @ h_inv @ z + c_inv.T @ q_inv @ c_inv
    g_inv = np.linalg.inv(g)
    a = ii.T @ h_inv @ ii
    b = ii.T @ h_inv @ z
    e = z.T @ h_inv @ ii
    f_inv = np.linalg.inv(a - b @ g_inv @ e)
    v_inv = np.linalg.inv(ii.T @ om_inv @ ii)       # (I' Omega^{-1} I)^{-1}
    return dict(z=z, h_inv=h_inv, q_inv=q_inv, c=c, c_inv=c_inv, omega=omega, om_inv=om_inv,
                cqc=cqc, ii=ii, g=g, g_inv=g_inv, a=a, b=b, e=e, f_inv=f_inv, v_inv=v_inv)


def check_smoother_equivalence(inst: Instance, report: ValidationReport, cap: int) -> None:
    sys = inst.tv
    gls = estimate_gls(sys)
    direct = smooth_direct(sys, cap=cap)
    rec = smooth_recursive(sys)
    report.record("path_equivalence", max(
        relative_deviation(gls.beta, direct.beta),
        relative_deviation(rec.beta, direct.beta),
        relative_deviation(gls.beta, rec.beta),
    ), inst.seed)
    report.record("mse_equivalence", max(
        relative_deviation(gls.mse_blocks, direct.mse_blocks),
        relative_deviation(rec.mse_blocks, direct.mse_blocks),
        relative_deviation(gls.mse_blocks, rec.mse_blocks),
    ), inst.seed)
    dense_ll = log_likelihood(sys, method="dense", cap=cap)
    report.record("loglik_banded_dense", abs(gls.loglik - dense_ll), inst.seed)
    report.record("loglik_filter", abs(kalman_filter(sys).loglik - dense_ll), inst.seed)


def check_intercept_identities(inst: Instance, report: ValidationReport, cap: int) -> None:
    sys = inst.ti
    n, k, m = sys.z.shape
    d = _dense_pieces(sys, cap)
    est = estimate_with_intercepts(sys)
    report.record("intercept_ml", relative_deviation(est.v_hat, v_ml_direct(sys, cap)), inst.seed)

    # beta_hat = C b0* + CQC'Z'Omega^{-1}(Y - I v_hat - Z C b0*)
    y = sys.y.reshape(-1)
    cb0 = d["c"] @ sys.b0_star
    beta_formula = cb0 + d["cqc"] @ d["z"].T @ d["om_inv"] @ (y - d["ii"] @ est.v_hat - d["z"] @ cb0)
    report.record("intercept_path", relative_deviation(est.beta.reshape(-1), beta_formula), inst.seed)

    kalman = smoothed_variance(sys, "kalman", cap=cap)
    gls_var = smoothed_variance(sys, "gls", cap=cap)
    report.record("intercept_variance_banded", max(
        relative_deviation(est.gls_var_blocks, _blocks(gls_var, n, m)),
        relative_deviation(est.mse_blocks, _blocks(kalman, n, m)),
    ), inst.seed)
    diff = gls_var - kalman
    min_eig = np.linalg.eigvalsh(0.5 * (diff + diff.T)).min()
    report.record("variance_difference_psd", max(0.0, -min_eig) / max(np.abs(gls_var).max(), 1.0), inst.seed)
    d_om = d["cqc"] @ d["z"].T @ d["om_inv"]
    correction = d_om @ d["ii"] @ d["v_inv"] @ d["ii"].T @ d_om.T
    report.record("variance_correction", relative_deviation(diff, correction), inst.seed)

    # the joint normal matrix and its partitioned inverse
    joint = np.block([[d["a"], d["b"]], [d["e"], d["g"]]])
    joint_inv = np.linalg.inv(joint)
    f_inv, g_inv = d["f_inv"], d["g_inv"]
    lemma = np.block([
        [f_inv, -f_inv @ d["b"] @ g_inv],
        [-g_inv @ d["e"] @ f_inv, g_inv + g_inv @ d["e"] @ f_inv @ d["b"] @ g_inv],
    ])
    report.record("partitioned_inverse", relative_deviation(lemma, joint_inv), inst.seed)
    var_v = joint_inv[:k, :k]
    cov_bv = joint_inv[k:, :k]
    var_b = joint_inv[k:, k:]
    three_term = var_b - cov_bv @ np.linalg.solve(var_v, cov_bv.T)
    report.record("variance_three_term", max(
        relative_deviation(three_term, kalman),
        relative_deviation(var_b, gls_var),
    ), inst.seed)

    report.record("f_inverse", relative_deviation(f_inv, d["v_inv"]), inst.seed)
    report.record("g_inverse", relative_deviation(g_inv, d["cqc"] - d_om @ d["z"] @ d["cqc"]), inst.seed)
    report.record("omega_inverse", relative_deviation(
        d["h_inv"] - d["h_inv"] @ d["z"] @ g_inv @ d["z"].T @ d["h_inv"], d["om_inv"]), inst.seed)

    h_inv, z, ii, om_inv, c = d["h_inv"], d["z"], d["ii"], d["om_inv"], d["c"]
    cq_term = d["c_inv"].T @ d["q_inv"]
    v_inv = d["v_inv"]
    lhs1 = f_inv @ ii.T @ h_inv - f_inv @ d["b"] @ g_inv @ z.T @ h_inv
    rhs1 = v_inv @ ii.T @ om_inv
    report.record("intercept_weight_obs", relative_deviation(lhs1, rhs1), inst.seed)
    lhs2 = f_inv @ d["b"] @ g_inv @ cq_term
    rhs2 = v_inv @ ii.T @ om_inv @ z @ c
    report.record("intercept_weight_prior", relative_deviation(lhs2, rhs2), inst.seed)
    inner = g_inv + g_inv @ d["e"] @ f_inv @ d["b"] @ g_inv
    lhs3 = -g_inv @ d["e"] @ f_inv @ ii.T @ h_inv + inner @ z.T @ h_inv
    proj = np.eye(n * k) - ii @ v_inv @ ii.T @ om_inv
    rhs3 = d_om @ proj
    report.record("path_weight_obs", relative_deviation(lhs3, rhs3), inst.seed)
    lhs4 = inner @ cq_term
    rhs4 = (np.eye(n * m) - d_om @ z + d_om @ ii @ v_inv @ ii.T @ om_inv @ z) @ c
    report.record("path_weight_prior", relative_deviation(lhs4, rhs4), inst.seed)


def check_structure(inst: Instance, report: ValidationReport) -> None:
    sys = inst.tv
    rng = np.random.default_rng(inst.seed + 7919)
    m = sys.m
    x = rng.standard_normal(sys.n * m)
    report.record("c_round_trip", max(
        np.abs(apply_C_inverse(apply_C(x, m), m) - x).max(),
        np.abs(apply_C(apply_C_inverse(x, m), m) - x).max(),
    ), inst.seed)
    blockwise = normal_matrix(sys)
    report.record("normal_matrix_blockwise",
                  relative_deviation(blockwise.to_dense(), dense_normal_matrix(sys)), inst.seed)
    rhs = rng.standard_normal((sys.n * m, 3))
    report.record("solver_backends",
                  relative_deviation(block_cholesky(blockwise).solve(rhs), solve_spd(blockwise.to_dense(), rhs)),
                  inst.seed)
    d = 4
    s = np.eye(d) * 3 + 0.1 * rng.standard_normal((d, d))
    s = s @ s.T
    u = np.eye(2) * 2 + 0.1 * rng.standard_normal((2, 2))
    t = 0.3 * rng.standard_normal((d, 2))
    v = 0.3 * rng.standard_normal((2, d))
    left, right = woodbury_sides(s, t, u, v)
    report.record("woodbury", relative_deviation(right, left), inst.seed)


def run_validation(n_instances: int = 25, seed: int = 0, tolerance: float | None = None,
                   cap: int = DEFAULT_DENSE_CAP) -> ValidationReport:
    """Run the identity suite; ``tolerance`` overrides every per-identity tolerance."""
    tols = dict(TOLERANCES) if tolerance is None else {k: tolerance for k in TOLERANCES}
    report = ValidationReport(tols)
    seeds = np.random.SeedSequence(seed).generate_state(n_instances)
    for s in seeds:
        inst = random_instance(int(s))
        check_smoother_equivalence(inst, report, cap)
        check_intercept_identities(inst, report, cap)
        check_structure(inst, report)
        report.n_instances += 1
    return report

