from __future__ import annotations

import json
import math
import subprocess
import sys

import pytest

from longedge.cli import build_parser, main
from longedge.constants import norming_homogeneous
from longedge.densities import EllipticalModel
from longedge.harness import summarize_replicates
from longedge.reports import read_csv


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_constants_csv(capsys):
    code, out, _ = run(["constants", "--model", "elliptical", "--rho", "0.5", "--n", "1e6"], capsys)
    assert code == 0
    prov, rows = read_csv(out)
    assert prov["config"]["model"] == {"family": "elliptical", "rho": 0.5}
    nc = norming_homogeneous(EllipticalModel.normal(0.5), 1e6)
    assert rows[0]["mu_n"] == nc.mu_n
    assert rows[0]["model"] == "elliptical(rho=0.5)"


def test_constants_json_for_each_family(capsys):
    for extra in (["--model", "parallel-circle"], ["--model", "weibull", "--alpha", "6"],
                  ["--model", "uniform-square"], ["--model", "parallel-circle", "--constants", "pipeline"]):
        code, out, _ = run(["constants", *extra, "--n", "1e6", "1e9", "--format", "json"], capsys)
        doc = json.loads(out)
        assert code == 0 and len(doc["rows"]) == 2
        assert doc["rows"][0]["r_n"] > doc["rows"][1]["r_n"] > 0


def test_config_file_with_flag_override(tmp_path, capsys):
    path = tmp_path / "run.yaml"
    path.write_text("command: constants\nmodel: elliptical\nrho: 0.3\nn: [1e6]\ntau: 2\n")
    _, out, _ = run(["constants", "--config", str(path), "--rho", "0.7"], capsys)
    _, rows = read_csv(out)
    assert rows[0]["model"] == "elliptical(rho=0.7)" and rows[0]["tau"] == 2


def test_config_error_exits_with_line(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("command: constants\nmodel: elliptical\nrho: 0\nn: [1e6]\n")
    with pytest.raises(SystemExit) as info:
        main(["constants", "--config", str(path)])
    assert info.value.code == 2
    err = capsys.readouterr().err
    assert "line 3, field 'rho'" in err and "parallel-circle" in err


def test_config_for_other_command(tmp_path, capsys):
    path = tmp_path / "run.yaml"
    path.write_text("command: simulate\nmodel: parallel-circle\nn: [1e3]\n")
    with pytest.raises(SystemExit):
        main(["constants", "--config", str(path)])
    assert "not 'constants'" in capsys.readouterr().err


def test_simulate_outputs(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("LONGEDGE_WORKERS", "1")
    out_path, summary_path, ecdf_path = tmp_path / "r.csv", tmp_path / "s.json", tmp_path / "e.csv"
    code, _, _ = run(["simulate", "--model", "parallel-circle", "--n", "500", "--replicates", "12",
                      "--seed", "3", "-o", str(out_path), "--summary", str(summary_path),
                      "--ecdf", str(ecdf_path)], capsys)
    assert code == 0
    prov, rows = read_csv(out_path.read_text())
    assert prov["seed"] == 3 and len(rows) == 12
    assert all(r["M_MST"] >= r["M_NNG"] for r in rows)
    summary = json.loads(summary_path.read_text())["summaries"][0]
    # the summary is reproducible from the saved rows alone
    s = summary
    col = lambda k: [r[k] for r in rows]
    from longedge.harness import Normalization
    norm = Normalization("location-scale", s["mu_n"], s["sigma_n"], s["mu_n"], s["sigma_n"], s["r_n"])
    again = summarize_replicates(col("M_NNG"), col("M_MST"), col("N"), col("Z_NNG"), col("Z_MST"),
                                 norm, ("nng", "mst"))
    assert json.loads(json.dumps(again)) == {k: v for k, v in summary.items() if k != "n"}
    _, ecdf = read_csv(ecdf_path.read_text())
    assert ecdf[0]["x"] == -3 and ecdf[-1]["x"] == 6


def test_simulate_summary_to_stderr_and_fixed_n(capsys, monkeypatch):
    monkeypatch.setenv("LONGEDGE_WORKERS", "1")
    code, out, err = run(["simulate", "--model", "uniform-square", "--n", "200", "--replicates", "3",
                          "--fixed-n", "--graphs", "nng"], capsys)
    _, rows = read_csv(out)
    assert code == 0 and all(r["N"] == 200 for r in rows)
    assert all(math.isnan(r["M_MST"]) for r in rows)
    assert json.loads(err)["config"]["poissonized"] is False


def test_integrals(capsys):
    code, out, _ = run(["integrals", "--model", "parallel-circle", "--n", "1e4", "--pairs", "2000",
                        "--format", "json"], capsys)
    row = json.loads(out)["rows"][0]
    assert code == 0
    assert row["mu1"] == pytest.approx(1.2104, abs=1e-3)
    assert 0 < row["mu2_ratio"] < 0.2 and row["method"] == "quadrature"
    code, out, _ = run(["integrals", "--model", "uniform-square", "--n", "1e4"], capsys)
    _, rows = read_csv(out)
    assert rows[0]["mu1"] == pytest.approx(2.2013, abs=1e-3)
    assert math.isnan(rows[0]["mu2_ratio"])


def test_verify_pass_and_json(tmp_path, capsys):
    path = tmp_path / "v.json"
    code, _, err = run(["verify", "--only", "geometry", "-o", str(path)], capsys)
    doc = json.loads(path.read_text())
    assert code == 0 and doc["passed"] and doc["failed"] == []
    assert err.startswith("PASS criterion 4 geometry")


def test_verify_forced_failure(capsys):
    code, out, err = run(["verify", "--only", "elliptical", "--force-fail"], capsys)
    doc = json.loads(out)
    assert code == 1 and doc["forced_failure"] and doc["failed"] == ["elliptical"]
    assert "FAIL criterion 1 elliptical" in err
    rows = doc["checks"][0]["details"]["rows"]
    assert rows[2]["k_abs_err"] > 0.009


def test_verify_skip_slow_is_reported(capsys):
    code, out, err = run(["verify", "--only", "gumbel", "determinism", "--skip-slow"], capsys)
    doc = json.loads(out)
    assert doc["skipped"] == ["gumbel"] and "SKIP criterion 7 gumbel" in err
    assert code == 0


def test_verify_unknown_check(capsys):
    with pytest.raises(SystemExit) as info:
        main(["verify", "--only", "nonsense"])
    assert info.value.code == 2


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "longedge.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("longedge ")
