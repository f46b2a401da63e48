from __future__ import annotations

import io
import math

import numpy as np
import pytest

from longedge.config import ConfigError, RunConfig, parse_config, validate_mapping
from longedge.reports import format_value, read_csv, to_json, write_csv


def test_minimal_document():
    cfg = parse_config("command: constants\nmodel: elliptical\nrho: 0.5\nn: [1e6, 1.0e+9]\n")
    assert cfg.model == {"family": "elliptical", "rho": 0.5}
    assert cfg.n == (1e6, 1e9)
    assert (cfg.tau, cfg.replicates, cfg.format) == (1.0, 1000, "csv")


def test_scalar_n_and_integer_strings():
    cfg = parse_config("command: simulate\nmodel: parallel-circle\nn: 1000\nreplicates: 5e2\n")
    assert cfg.n == (1000.0,) and cfg.replicates == 500


@pytest.mark.parametrize("text,line,key,fragment", [
    ("command: constants\nmodel: elliptical\nrho: 0\nn: [1e6]\n", 3, "rho", "parallel-circle"),
    ("command: constants\nmodel: weibull\nalpha: 3\nn: [1e6]\n", 3, "alpha", "strict"),
    ("command: constants\nmodel: elliptical\nrho: 0.5\nn: [1e6]\nbogus: 1\n", 5, "bogus", "unknown key"),
    ("command: constants\nmodel: elliptical\nrho: 0.5\nn: [0]\n", 4, "n", "positive"),
    ("command: constants\nmodel: elliptical\nrho: 0.5\nn: [1e6]\ntau: -1\n", 5, "tau", "positive"),
    ("command: simulate\nmodel: elliptical\nrho: 0.5\nn: [1e6]\nreplicates: 2.5\n", 5, "replicates", "integer"),
    ("command: simulate\nmodel: elliptical\nrho: 0.5\nn: [1e6]\nformat: xml\n", 5, "format", "csv"),
    ("command: simulate\nmodel: circle\nn: [1e6]\n", 2, "model", "expected one of"),
    ("command: simulate\nmodel: {family: elliptical}\nn: [1e6]\n", 2, "model", "top-level"),
    ("command: simulate\nmodel: elliptical\nrho: 0.5\nn: [1e6]\npoissonized: 1\n", 5, "poissonized", "true or false"),
    ("command: run\n", 1, "command", "expected one of"),
])
def test_diagnostics_name_line_and_field(text, line, key, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line
    assert info.value.key == key
    assert f"line {line}, field '{key}'" in str(info.value)
    assert fragment in str(info.value)


def test_missing_keys():
    with pytest.raises(ConfigError, match="'n'"):
        parse_config("command: constants\nmodel: parallel-circle\n")
    with pytest.raises(ConfigError, match="'model'"):
        parse_config("command: constants\nn: [1e6]\n")
    with pytest.raises(ConfigError, match="empty"):
        parse_config("")
    with pytest.raises(ConfigError, match="mapping"):
        parse_config("- 1\n- 2\n")


def test_yaml_syntax_error_has_line():
    with pytest.raises(ConfigError) as info:
        parse_config("command: constants\nmodel: [elliptical\nn: 3\n")
    assert info.value.line is not None


def test_permissive_weibull_warns():
    with pytest.warns(UserWarning):
        cfg = parse_config("command: constants\nmodel: weibull\nalpha: 3\npermissive: true\nn: [1e6]\n")
    assert cfg.model == {"family": "weibull", "alpha": 3.0, "permissive": True}


def test_verify_needs_no_model():
    cfg = validate_mapping({"command": "verify", "skip_slow": True})
    assert cfg.skip_slow and cfg.model == {}


def test_as_dict_is_plain():
    d = RunConfig("constants", {"family": "parallel-circle"}, (1e6,)).as_dict()
    assert d["n"] == [1e6] and d["graphs"] == ["nng", "mst"]


@pytest.mark.parametrize("value,text", [
    (0.1, "0.10000000000000001"), (1e6, "1000000"), (3, "3"), (True, "true"),
    (None, ""), (np.float64(math.pi), "3.1415926535897931"), ("x", "x"),
])
def test_format_value(value, text):
    assert format_value(value) == text


def test_csv_round_trip_is_exact():
    rng = np.random.default_rng(0)
    rows = [{"a": float(v), "b": i, "c": "s", "d": math.nan if i == 1 else None}
            for i, v in enumerate(rng.standard_normal(20))]
    buf = io.StringIO()
    write_csv(buf, ["a", "b", "c", "d"], rows, {"seed": 7, "config": {"n": [1e6]}})
    text = buf.getvalue()
    assert text.startswith("# seed: 7\n# config: ")
    assert "\r\n" in text
    prov, back = read_csv(text)
    assert prov == {"seed": 7, "config": {"n": [1e6]}}
    assert [r["a"] for r in back] == [r["a"] for r in rows]
    assert [r["b"] for r in back] == list(range(20))
    assert math.isnan(back[1]["d"]) and back[0]["d"] is None


def test_json_nan_becomes_null_and_keeps_order():
    text = to_json({"z": 1, "a": math.nan, "m": [np.float32(0.5), np.int64(2)]})
    assert text.index('"z"') < text.index('"a"') < text.index('"m"')
    assert '"a": null' in text
