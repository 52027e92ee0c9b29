import json
import subprocess
import sys

import numpy as np
import pytest

from poisson_shrink.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, eb_demo, main
from poisson_shrink.risk import risk_delta_c_closed


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config ")
    return lines[1].split(","), np.array([[float(v) for v in l.split(",")] for l in lines[2:]])


def test_risk_curve_defaults(tmp_path):
    assert main(["risk-curve", "--out", str(tmp_path)]) == EXIT_OK
    cols, data = read_csv(tmp_path / "risk_curve.csv")
    assert cols == ["gamma", "risk", "se_or_zero"]
    assert data.shape == (200, 3)
    assert data[0, 0] == 0.01 and data[-1, 0] == 60
    assert data[0, 1] == pytest.approx(risk_delta_c_closed(9, 3, 0.01), abs=1e-12)
    assert np.all(np.diff(data[:, 1]) >= 0) and np.all(data[:, 1] < 12)
    assert (tmp_path / "risk_curve.svg").read_text().startswith("<svg")
    assert json.loads((tmp_path / "risk_curve.json").read_text())["method"] == "exact-series"
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["p"] == 9 and "timestamp" in manifest


def test_risk_curve_starts_at_origin_limit(tmp_path):
    assert main(["risk-curve", "--gamma-min", "1e-6", "--out", str(tmp_path), "--format", "csv"]) == 0
    _, data = read_csv(tmp_path / "risk_curve.csv")
    assert abs(data[0, 1] - 4 / 3) <= 1e-3


def test_risk_curve_cz(tmp_path):
    assert main(["risk-curve", "--estimator", "cz", "--c", "0", "--p", "2", "--out", str(tmp_path)]) == 0
    _, data = read_csv(tmp_path / "risk_curve.csv")
    assert np.all(data[:, 1] < 2)


@pytest.mark.parametrize("argv", [
    ["risk-curve", "--gamma-min", "5", "--gamma-max", "1"],
    ["risk-curve", "--estimator", "matrix"],
    ["risk-curve", "--format", "pdf"],
    ["no-such-command"],
    ["risk-curve", "--p", "nine"],
])
def test_usage_errors(tmp_path, argv):
    assert main(argv + ["--out", str(tmp_path)] if argv[0] != "no-such-command" else argv) == EXIT_USAGE


def test_dominance_scan_exit_codes(tmp_path):
    assert main(["dominance-scan", "--p", "2-9", "--c", "0,1,3", "--z-max", "2000",
                 "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["dominance-scan", "--estimator", "cz", "--p", "9", "--c", "2",
                 "--out", str(tmp_path / "b")]) == EXIT_FAIL
    assert main(["dominance-scan", "--mode", "quad", "--p", "3", "--variant", "leq1",
                 "--out", str(tmp_path / "c")]) == EXIT_FAIL
    report = json.loads((tmp_path / "c" / "dominance.json").read_text())
    assert report["reports"][0]["violations"] > 0 and report["reports"][0]["worst"]
    assert main(["dominance-scan", "--mode", "quad", "--p", "3", "--matrix", "cumulative",
                 "--out", str(tmp_path / "d")]) == EXIT_OK
    assert main(["dominance-scan", "--mode", "quad", "--p", "9", "--y-max", "9",
                 "--out", str(tmp_path / "e")]) == EXIT_USAGE


def test_estimate(tmp_path, capsys):
    f = tmp_path / "y.csv"
    f.write_text("1,1,1,1,1,1,1,1,1\n")
    assert main(["estimate", "--input", str(f), "--c", "3"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("# spec")
    cells = [float(v) for v in out[2].split(",")]
    assert cells[:9] == pytest.approx([9 / 11] * 9) and cells[9] == pytest.approx(81 / 11)


@pytest.mark.parametrize("text", ["", "1,2\n3\n", "1,-1\n", "1,0.5\n", "a,b\n"])
def test_estimate_bad_input(tmp_path, text):
    f = tmp_path / "y.csv"
    f.write_text(text)
    assert main(["estimate", "--input", str(f)]) == EXIT_USAGE


def test_estimate_matrix_mode(tmp_path):
    f = tmp_path / "m.csv"
    f.write_text("1,0,2\n0,1,1\n3,1,0\n1,1,1\n")
    spec = tmp_path / "s.json"
    spec.write_text('{"kind": "matrix", "c": 0}')
    assert main(["estimate", "--input", str(f), "--spec", str(spec), "--mode", "matrix",
                 "--k", "2", "--out", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "estimates.csv").read_text().splitlines()[2:]
    from poisson_shrink.shrinkers import matrix_shrinker
    Y = np.loadtxt(f, delimiter=",").reshape(2, 2, 3).astype(int)
    for b in range(2):
        est = matrix_shrinker(Y[b], 0.0)
        rows = [l.split(",") for l in lines if l.split(",")[0] == str(b)]
        np.testing.assert_allclose([float(v) for v in rows[0][2:5]], est[0])
        np.testing.assert_allclose([float(v) for v in rows[2][2:5]], est.sum(axis=0))
        assert float(rows[2][5]) == pytest.approx(est.sum())


def test_eb_demo_function():
    res = eb_demo(50, 1.0, 0.5, 1.0, 200, 20240101)
    assert res["check"] and res["mean_eb"] < res["mean_raw"]
    flat = eb_demo(10, 1.0, 0.0, 1.0, 1, 3)
    assert len(set(np.round(flat["scatter"]["alpha"], 12))) == 1


def test_eb_demo_rejects_bad_beta(tmp_path):
    assert main(["eb-demo", "--beta", "0", "--out", str(tmp_path)]) == EXIT_USAGE


def _snapshot(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


def test_reruns_are_byte_identical(tmp_path):
    argv = ["eb-demo", "--reps", "3", "--seed", "7", "--out", str(tmp_path)]
    assert main(argv) == 0
    first = _snapshot(tmp_path)
    m1 = json.loads((tmp_path / "manifest.json").read_text())
    assert main(argv) == 0
    assert _snapshot(tmp_path) == first
    m2 = json.loads((tmp_path / "manifest.json").read_text())
    m1.pop("timestamp"), m2.pop("timestamp")
    assert m1 == m2


def test_sample_model(tmp_path):
    prior = tmp_path / "prior.json"
    prior.write_text(json.dumps({"sum_law": {"kind": "gamma", "alpha0": 6, "beta0": 0.5},
                                 "alpha": [2, 2, 2]}))
    assert main(["sample-model", "--prior", str(prior), "--n", "0", "--out", str(tmp_path / "z")]) == 0
    lines = (tmp_path / "z" / "samples.csv").read_text().splitlines()
    assert len(lines) == 2 and lines[1].startswith("theta1")
    assert main(["sample-model", "--prior", str(prior), "--n", "100000", "--out", str(tmp_path / "s")]) == 0
    moments = json.loads((tmp_path / "s" / "moments.json").read_text())
    assert "rho" in moments["formula"] and "y_corr" in moments["formula"]
    est, se = moments["empirical"]["y_cov"]["estimate"], moments["empirical"]["y_cov"]["se"]
    assert abs(est) <= 3 * se
    flat = tmp_path / "flat.json"
    flat.write_text('{"sum_law": {"kind": "flat"}, "alpha": [1, 1]}')
    assert main(["sample-model", "--prior", str(flat), "--out", str(tmp_path / "f")]) == EXIT_USAGE


def test_config_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"p": 4, "c": 1.0, "gamma_points": 5, "format": "csv"}))
    assert main(["risk-curve", "--config", str(cfg), "--c", "0", "--out", str(tmp_path / "o")]) == 0
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["config"]["p"] == 4          # from the file
    assert manifest["config"]["c"] == 0.0        # flag beats file
    assert manifest["config"]["gamma_max"] == 60.0  # built-in default
    bad = tmp_path / "bad.json"
    bad.write_text('{"nonsense": 1}')
    assert main(["risk-curve", "--config", str(bad), "--out", str(tmp_path / "x")]) == EXIT_USAGE


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "poisson_shrink", "risk-curve", "--gamma-points", "3",
                           "--format", "csv", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0 and "risk-curve" in proc.stdout
