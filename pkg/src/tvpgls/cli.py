"""Command-line interface: ``simulate``, ``replicate``, ``estimate`` and ``validate``.

Exit codes: 0 success, 2 input or validation error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import csvio
from .estimator import EstimationError, fgls_pipeline
from .model import DEFAULT_DENSE_CAP, InterceptMode, ModelSpec, ObservationSet
from .simulation import DgpConfig, ErrorKind, SimulationError, run_replications, simulate_tvvar
from .validation import run_validation

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("tvpgls")


def _model_flags(p: argparse.ArgumentParser, T: bool = True) -> None:
    p.add_argument("--k", type=int, default=3, help="number of variables")
    p.add_argument("--p", type=int, default=2, help="lag order")
    if T:
        p.add_argument("--T", type=int, default=100, help="number of observations")
    p.add_argument("--intercept", choices=[m.value for m in InterceptMode], default="time_varying")


def _dgp_flags(p: argparse.ArgumentParser) -> None:
    _model_flags(p)
    p.add_argument("--h-scale", type=float, default=1.0, help="observation noise sd")
    p.add_argument("--q-scale", type=float, default=0.03, help="state noise sd")
    p.add_argument("--error-kind", choices=[e.value for e in ErrorKind], default="gaussian")
    p.add_argument("--rho", type=float, default=1.0, help="log-volatility persistence (sv_ar)")
    p.add_argument("--seed", type=int, default=0)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.add_argument("--format", choices=sorted(csvio.DELIMITERS), default="csv")


def _dgp(args) -> DgpConfig:
    return DgpConfig(
        T=args.T, k=args.k, p=args.p, intercept_mode=args.intercept,
        h_scale=args.h_scale, q_scale=args.q_scale, error_kind=args.error_kind,
        rho=args.rho, seed=args.seed,
    )


def _out_dir(args) -> Path:
    try:
        args.out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise csvio.InputError(args.out_dir, f"cannot create output directory: {err.strerror or err}") from err
    return args.out_dir


def _write(path: Path, table: csvio.Table, fmt: str) -> None:
    try:
        csvio.write_table(path, table, fmt)
    except OSError as err:
        raise csvio.InputError(path, f"cannot write: {err.strerror or err}") from err


def cmd_simulate(args) -> int:
    cfg = _dgp(args)
    data = simulate_tvvar(cfg, args.rep)
    out = _out_dir(args)
    ext = args.format
    spec = cfg.spec
    y_cols = [f"y{i + 1}" for i in range(spec.k)]
    _write(out / f"y.{ext}", csvio.Table("t", [str(t + 1) for t in range(spec.T)], y_cols, data.obs.y), ext)
    labels = [str(t + 1) for t in range(spec.p, spec.T)]
    _write(out / f"beta_true.{ext}", csvio.path_table(labels, data.truth.beta), ext)
    print(f"T={spec.T}")
    print(f"m={spec.m}")
    print(f"rejections={data.rejections}")
    return EXIT_OK


def cmd_replicate(args) -> int:
    if args.reps < 1:
        raise ValueError("--reps must be >= 1")
    cfg = _dgp(args)
    start = time.perf_counter()
    res = run_replications(cfg, args.reps, steps=args.steps, workers=args.threads)
    out = _out_dir(args)
    path = out / f"metrics.{args.format}"
    delim = csvio.DELIMITERS[args.format]
    try:
        with path.open("w", encoding="utf-8") as fh:
            fh.write(delim.join(["method", "stat", "value", "n_reps", "seed", "rejections"]) + "\n")
            for method, stat, value, n_reps, seed, rej in res.rows():
                fh.write(delim.join([method, stat, csvio.fmt(value), str(n_reps), str(seed), str(rej)]) + "\n")
    except OSError as err:
        raise csvio.InputError(path, f"cannot write: {err.strerror or err}") from err
    print(f"metrics={path}")
    print(f"n_reps={res.n_reps}")
    print(f"failures={len(res.failures)}")
    print(f"rejections={res.rejections}")
    if "1FGLS" in res.loglik and "2FGLS" in res.loglik:
        frac = float(np.mean(res.loglik["2FGLS"] >= res.loglik["1FGLS"]))
        print(f"loglik_2fgls_ge_1fgls={frac:.4f}")
    for label, tab in res.tables.items():
        for stat, value in tab.medians.items():
            print(f"{label}.{stat}={value:.6g}")
    print(f"elapsed_s={time.perf_counter() - start:.1f}")
    return EXIT_OK


def _read_observations(args) -> tuple[csvio.Table, ObservationSet, ModelSpec]:
    table = csvio.read_table(args.data, args.format)
    T, k = table.values.shape
    if T <= args.p + 2:
        raise csvio.InputError(args.data, f"need more than p + 2 = {args.p + 2} data rows, got {T}")
    spec = ModelSpec(k, args.p, T, args.intercept)
    return table, ObservationSet(table.values), spec


def cmd_estimate(args) -> int:
    table, obs, spec = _read_observations(args)
    b0 = np.zeros(spec.m) if args.b0 == "zero" else None
    ests = fgls_pipeline(obs, spec, args.steps, b0=b0)
    out = _out_dir(args)
    labels = table.index[spec.p:]
    print(f"T={spec.T}")
    print(f"n={spec.n}")
    print(f"k={spec.k}")
    print(f"p={spec.p}")
    print(f"m={spec.m}")
    print(f"intercept_mode={spec.intercept_mode.value}")
    for est in ests:
        name = est.method.value
        se = np.sqrt(np.clip(np.diagonal(est.mse_blocks, axis1=1, axis2=2), 0.0, None))
        path = out / f"path_{name}.{args.format}"
        _write(path, csvio.path_table(labels, est.beta, se), args.format)
        cov = est.cov_estimates
        h_tr, q_tr = float(np.trace(cov.h)), float(np.trace(cov.q))
        print(f"{name}.path={path}")
        print(f"{name}.loglik={csvio.fmt(est.loglik)}")
        print(f"{name}.h_trace={csvio.fmt(h_tr)}")
        print(f"{name}.q_trace={csvio.fmt(q_tr)}")
        print(f"{name}.snr={csvio.fmt((q_tr / spec.m) / (h_tr / spec.k))}")
        print(f"{name}.jittered={str(est.jittered).lower()}")
        print(f"{name}.roughness={csvio.fmt(np.sum(np.diff(est.beta, axis=0) ** 2))}")
        if est.v_hat is not None:
            v_se = np.sqrt(np.diag(est.v_cov))
            for i, (v, s) in enumerate(zip(est.v_hat, v_se)):
                print(f"{name}.v{i + 1}={csvio.fmt(v)}")
                print(f"{name}.v{i + 1}_se={csvio.fmt(s)}")
    return EXIT_OK


def cmd_validate(args) -> int:
    if args.reps < 1:
        raise ValueError("--reps must be >= 1")
    start = time.perf_counter()
    report = run_validation(args.reps, seed=args.seed, tolerance=args.tolerance, cap=args.cap)
    print(f"instances={report.n_instances} seed={args.seed}")
    for line in report.lines():
        print(line)
    print(f"elapsed_s={time.perf_counter() - start:.1f}")
    if not report.ok:
        for name in report.failures:
            print(f"FAILED {name} seed={report.worst_seed[name]} max_dev={report.max_dev[name]:.3e}",
                  file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tvpgls", description="GLS estimation of time-varying parameter VARs")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw one data set and its true coefficient path")
    _dgp_flags(p)
    _common(p)
    p.add_argument("--rep", type=int, default=0, help="replication index (selects the random substream)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replicate", help="Monte Carlo replications of OLS / 1FGLS / 2FGLS")
    _dgp_flags(p)
    _common(p)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--steps", type=int, choices=[0, 1, 2], default=2)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_replicate)

    p = sub.add_parser("estimate", help="estimate coefficient paths for a CSV of observations")
    p.add_argument("data", type=Path, help="CSV with a header, a period column and k numeric columns")
    p.add_argument("--p", type=int, default=2, help="lag order")
    p.add_argument("--intercept", choices=[m.value for m in InterceptMode], default="time_varying")
    p.add_argument("--steps", type=int, choices=[0, 1, 2], default=2)
    p.add_argument("--b0", choices=["ols", "zero"], default="ols",
                   help="initial coefficients: full-sample constant VAR (ols) or zero")
    _common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("validate", help="run the numerical identity suite")
    p.add_argument("--reps", type=int, default=25, help="number of random instances")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=None, help="override every tolerance")
    p.add_argument("--cap", type=int, default=DEFAULT_DENSE_CAP, help="dense-validation size cap")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (EstimationError, SimulationError, np.linalg.LinAlgError, FloatingPointError) as err:
        print(f"error: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
