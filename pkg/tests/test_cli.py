from __future__ import annotations

import time

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tvpgls import csvio
from tvpgls.cli import EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK, main
from tvpgls.simulation import DgpConfig, compute_metrics, lower_median, simulate_tvvar


def _kv(text: str) -> dict[str, str]:
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line and " " not in line)


def _rows(path) -> list[str]:
    return path.read_text().splitlines()


def test_simulate_is_byte_stable(tmp_path):
    args = ["simulate", "--seed", "3", "--h-scale", "0.2"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out-dir", str(tmp_path / "b")]) == EXIT_OK
    for name in ("y.csv", "beta_true.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_row_counts(tmp_path, capsys):
    assert main(["simulate", "--k", "3", "--p", "2", "--T", "100", "--out-dir", str(tmp_path)]) == EXIT_OK
    y = _rows(tmp_path / "y.csv")
    beta = _rows(tmp_path / "beta_true.csv")
    assert y[0] == "t,y1,y2,y3" and len(y) == 101
    assert beta[0].split(",")[:2] == ["t", "b1"] and len(beta) == 99
    assert _kv(capsys.readouterr().out)["m"] == "21"


def test_simulate_zero_state_noise(tmp_path):
    assert main(["simulate", "--q-scale", "0", "--h-scale", "0.02", "--out-dir", str(tmp_path)]) == EXIT_OK
    table = csvio.read_table(tmp_path / "beta_true.csv")
    assert np.all(table.values == 0)


def test_simulate_tsv(tmp_path):
    assert main(["simulate", "--format", "tsv", "--T", "20", "--out-dir", str(tmp_path)]) == EXIT_OK
    assert _rows(tmp_path / "y.tsv")[0] == "t\ty1\ty2\ty3"


def test_replicate_smoke(tmp_path, capsys):
    start = time.perf_counter()
    rc = main(["replicate", "--reps", "1", "--threads", "1", "--out-dir", str(tmp_path)])
    assert rc == EXIT_OK
    assert time.perf_counter() - start < 10
    rows = _rows(tmp_path / "metrics.csv")
    assert rows[0] == "method,stat,value,n_reps,seed,rejections"
    assert len(rows) == 1 + 2 + 3 * 4
    out = _kv(capsys.readouterr().out)
    assert out["n_reps"] == "1" and "2FGLS.rat" in out


def test_replicate_rejects_zero_reps(tmp_path, capsys):
    assert main(["replicate", "--reps", "0", "--out-dir", str(tmp_path)]) == EXIT_INPUT
    assert "reps" in capsys.readouterr().err


def test_estimate_round_trip_accuracy(tmp_path, capsys):
    cfg = DgpConfig(T=250, h_scale=0.02, q_scale=0.03, seed=1)
    assert main(["simulate", "--T", "250", "--h-scale", "0.02", "--seed", "1", "--out-dir", str(tmp_path)]) == EXIT_OK
    assert main(["estimate", str(tmp_path / "y.csv"), "--p", "2", "--out-dir", str(tmp_path)]) == EXIT_OK
    truth = simulate_tvvar(cfg).truth.beta
    path = csvio.read_table(tmp_path / "path_OLS.csv")
    m = truth.shape[1]
    assert path.columns == [f"b{i + 1}" for i in range(m)] + [f"se{i + 1}" for i in range(m)]
    assert path.index[0] == "3" and len(path.index) == 248
    dist = compute_metrics(truth, path.values[:, :m]).dist
    assert lower_median(dist) <= 0.17
    assert np.all(path.values[:, m:] >= 0)
    out = _kv(capsys.readouterr().out)
    for method in ("OLS", "1FGLS", "2FGLS"):
        assert np.isfinite(float(out[f"{method}.loglik"]))
        assert float(out[f"{method}.snr"]) > 0


def test_estimate_fixed_intercepts(tmp_path, capsys):
    main(["simulate", "--T", "80", "--k", "2", "--p", "1", "--intercept", "time_invariant",
          "--h-scale", "0.2", "--out-dir", str(tmp_path)])
    capsys.readouterr()
    rc = main(["estimate", str(tmp_path / "y.csv"), "--p", "1", "--intercept", "time_invariant",
               "--steps", "1", "--out-dir", str(tmp_path)])
    assert rc == EXIT_OK
    out = _kv(capsys.readouterr().out)
    assert out["m"] == "4"
    assert {"OLS.v1", "OLS.v2_se", "1FGLS.v1"} <= set(out)
    assert not (tmp_path / "path_2FGLS.csv").exists()


def test_estimate_constant_series_is_flagged(tmp_path, capsys):
    data = tmp_path / "c.csv"
    data.write_text("t,y1,y2\n" + "".join(f"{t},1.5,2.0\n" for t in range(40)))
    rc = main(["estimate", str(data), "--p", "1", "--out-dir", str(tmp_path)])
    assert rc in (EXIT_OK, EXIT_NUMERICAL)
    if rc == EXIT_OK:
        out = _kv(capsys.readouterr().out)
        assert all(float(out[f"{m}.q_trace"]) < 1e-10 for m in ("OLS", "1FGLS", "2FGLS"))
        assert "true" in {out[f"{m}.jittered"] for m in ("OLS", "1FGLS", "2FGLS")}


@pytest.mark.parametrize("body, line, needle", [
    ("t,y1,y2\n1,0.5,1\n2,0.1\n", 3, "fields"),
    ("t,y1,y2\n1,0.5,1\n2,0.1,1\n3,abc,2\n", 4, "non-numeric"),
    ("t,y1\n1,nan\n", 2, "non-finite"),
])
def test_estimate_malformed_csv(tmp_path, capsys, body, line, needle):
    data = tmp_path / "bad.csv"
    data.write_text(body)
    assert main(["estimate", str(data), "--p", "1", "--out-dir", str(tmp_path)]) == EXIT_INPUT
    err = capsys.readouterr().err
    assert f"bad.csv:{line}" in err and needle in err


def test_estimate_short_sample(tmp_path, capsys):
    data = tmp_path / "short.csv"
    data.write_text("t,y1\n1,0.1\n2,0.2\n3,0.3\n4,0.5\n")
    assert main(["estimate", str(data), "--p", "2", "--out-dir", str(tmp_path)]) == EXIT_INPUT
    assert "p + 2" in capsys.readouterr().err


def test_estimate_missing_file(tmp_path, capsys):
    assert main(["estimate", str(tmp_path / "nope.csv")]) == EXIT_INPUT
    assert "nope.csv" in capsys.readouterr().err


def test_estimate_empty_file(tmp_path, capsys):
    data = tmp_path / "empty.csv"
    data.write_text("")
    assert main(["estimate", str(data)]) == EXIT_INPUT
    assert "empty.csv:1" in capsys.readouterr().err


def test_validate_default_passes(capsys):
    start = time.perf_counter()
    assert main(["validate"]) == EXIT_OK
    assert time.perf_counter() - start < 60
    assert "instances=25" in capsys.readouterr().out


def test_validate_tight_tolerance_fails(capsys):
    assert main(["validate", "--reps", "2", "--tolerance", "1e-14"]) == EXIT_NUMERICAL
    err = capsys.readouterr().err
    assert "FAILED" in err and "seed=" in err


def test_validate_seed_is_reproducible(capsys):
    main(["validate", "--reps", "2", "--seed", "9"])
    first = capsys.readouterr().out.splitlines()[:-1]
    main(["validate", "--reps", "2", "--seed", "9"])
    assert capsys.readouterr().out.splitlines()[:-1] == first


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 4)), elements=finite),
       st.sampled_from(["csv", "tsv"]))
def test_csv_round_trip(tmp_path, values, fmt):
    table = csvio.Table("t", [f"2001-{i:02d}" for i in range(values.shape[0])],
                        [f"c{j}" for j in range(values.shape[1])], values)
    path = tmp_path / f"rt.{fmt}"
    csvio.write_table(path, table, fmt)
    back = csvio.read_table(path, fmt)
    assert back.index == table.index and back.columns == table.columns
    np.testing.assert_array_equal(back.values, values)
