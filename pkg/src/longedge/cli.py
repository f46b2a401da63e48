"""Command-line entry point: ``longedge {constants,simulate,integrals,verify}``.

Settings come from an optional YAML file (``--config``) with flags layered
on top.  The worker count for simulations is read from ``LONGEDGE_WORKERS``.
"""
from __future__ import annotations

import argparse
import io
import math
import sys
import warnings

from . import __version__
from .acceptance import perturbed_bands, load_bands, run_checks
from .config import ConfigError, RunConfig, read_document, validate_mapping
from .constants import (
    angular_profile,
    norming_circle_closed_form,
    norming_homogeneous,
    norming_parallel,
    r_uniform_square,
)
from .densities import HomogeneousModel, ParallelCurveModel, UniformSquareModel, model_from_spec
from .harness import ExperimentConfig, ecdf_table, run_experiment
from .integrals import mu1, mu2_ratio, sector_strip
from .reports import to_json, write_csv

CONSTANT_COLUMNS = ["model", "n", "tau", "xi_n", "eta_n", "c1", "c2", "r_n", "mu_n", "sigma_n"]
SIMULATE_COLUMNS = ["n", "replicate", "N", "M_NNG", "M_MST", "Z_NNG", "Z_MST"]
INTEGRAL_COLUMNS = ["model", "n", "tau", "r", "mu1", "mu2_ratio", "se", "window_b", "method"]


def _model_label(spec: dict) -> str:
    params = ",".join(f"{k}={v}" for k, v in spec.items() if k != "family")
    return f"{spec['family']}({params})" if params else spec["family"]


def _provenance(cfg: RunConfig) -> dict:
    return {"longedge": __version__, "config": cfg.as_dict(), "seed": cfg.seed}


def _emit(cfg: RunConfig, columns, rows, extra: dict | None = None) -> str:
    if cfg.format == "json":
        doc = _provenance(cfg)
        doc.update(extra or {})
        doc["rows"] = rows
        return to_json(doc)
    buf = io.StringIO()
    write_csv(buf, columns, rows, _provenance(cfg))
    return buf.getvalue()


def constants_row(spec: dict, n: float, tau: float, choice: str = "closed-form") -> dict:
    model = model_from_spec(spec)
    row = {"model": _model_label(spec), "n": n, "tau": tau}
    if isinstance(model, UniformSquareModel):
        row.update({k: math.nan for k in CONSTANT_COLUMNS[3:]})
        row["r_n"] = r_uniform_square(n, tau)
        return row
    if isinstance(model, ParallelCurveModel):
        if choice == "closed-form":
            nc = norming_circle_closed_form(n, tau)
        else:
            nc = norming_parallel(model, n, tau, xi="exact" if choice == "pipeline-exact" else "reduced")
    else:
        nc = norming_homogeneous(model, n, tau)
    row.update({k: getattr(nc, k) for k in CONSTANT_COLUMNS[3:]})
    return row


def render_constants(cfg: RunConfig) -> str:
    rows = [constants_row(cfg.model, n, cfg.tau, cfg.constants) for n in cfg.n]
    return _emit(cfg, CONSTANT_COLUMNS, rows)


def simulate(cfg: RunConfig, workers: int | None = None):
    reports = []
    for n in cfg.n:
        exp = ExperimentConfig(cfg.model, n, cfg.replicates, cfg.poissonized, cfg.normalization,
                               cfg.tau, cfg.seed, cfg.graphs, cfg.constants)
        reports.append(run_experiment(exp, workers))
    return reports


def _simulate_rows(reports) -> list[dict]:
    return [{"n": rep.config.n, **row} for rep in reports for row in rep.rows()]


def render_simulate(cfg: RunConfig, workers: int | None = None, reports=None) -> str:
    reports = simulate(cfg, workers) if reports is None else reports
    summaries = [{"n": rep.config.n, **rep.summary} for rep in reports]
    return _emit(cfg, SIMULATE_COLUMNS, _simulate_rows(reports), {"summaries": summaries})


def _strip_angle(model) -> float:
    if isinstance(model, HomogeneousModel):
        return float(angular_profile(model).angles[0])
    return 0.0


def integrals_row(cfg: RunConfig, n: float) -> dict:
    model = model_from_spec(cfg.model)
    if isinstance(model, UniformSquareModel):
        r = r_uniform_square(n, cfg.tau)
    else:
        r = constants_row(cfg.model, n, cfg.tau, cfg.constants)["r_n"]
    res = mu1(model, n, r, method=cfg.method)
    row = {"model": _model_label(cfg.model), "n": n, "tau": cfg.tau, "r": r, "mu1": res.value,
           "mu2_ratio": math.nan, "se": math.nan, "window_b": res.window_b, "method": res.method}
    if not isinstance(model, UniformSquareModel):
        strip = sector_strip(model, n, _strip_angle(model), cfg.arc_width * r)
        m2 = mu2_ratio(model, n, r, strip, pairs=cfg.pairs, seed=cfg.seed)
        row.update({"mu2_ratio": m2.ratio, "se": m2.se})
    return row


def render_integrals(cfg: RunConfig) -> str:
    return _emit(cfg, INTEGRAL_COLUMNS, [integrals_row(cfg, n) for n in cfg.n])


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


# argument handling ----------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML configuration file; flags override its values")
    p.add_argument("--model", choices=["elliptical", "weibull", "parallel-circle", "uniform-square"])
    p.add_argument("--rho", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--d", type=float)
    p.add_argument("--permissive", action="store_true", default=None,
                   help="accept Weibull margins with 2 < alpha <= 4")
    p.add_argument("--n", type=float, nargs="+", help="intensities")
    p.add_argument("--tau", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--output", "-o", help="output file (default: stdout)")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--constants", choices=["closed-form", "pipeline", "pipeline-exact"],
                   help="norming constants for the parallel-circle model")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="longedge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", help="norming constants (xi_n, eta_n, c1, c2, r_n, mu_n, sigma_n)")
    _add_common(p)

    p = sub.add_parser("simulate", help="Monte Carlo longest edges and their normalized values")
    _add_common(p)
    p.add_argument("--replicates", type=int)
    p.add_argument("--fixed-n", dest="poissonized", action="store_false", default=None,
                   help="use exactly n points instead of a Poisson(n) count")
    p.add_argument("--normalization", choices=["x", "tau"])
    p.add_argument("--graphs", nargs="+", choices=["nng", "mst"])
    p.add_argument("--summary", help="where to write the JSON summary (CSV format only)")
    p.add_argument("--ecdf", help="write an empirical CDF table (x, F_hat, Gumbel) for M_NNG")

    p = sub.add_parser("integrals", help="expected counts of r-separate points")
    _add_common(p)
    p.add_argument("--method", choices=["quadrature", "lemma9"])
    p.add_argument("--pairs", type=int)
    p.add_argument("--arc-width", dest="arc_width", type=float,
                   help="sector width for the pair ratio, in units of r")

    p = sub.add_parser("verify", help="run the acceptance checks")
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--output", "-o", help="pass/fail JSON (default: stdout)")
    p.add_argument("--skip-slow", dest="skip_slow", action="store_true", default=None,
                   help="skip the Monte Carlo ladder")
    p.add_argument("--only", nargs="+", help="run only the named checks")
    p.add_argument("--force-fail", action="store_true",
                   help="perturb an elliptical reference value to exercise the failure path")
    return parser


_FLAG_KEYS = ("model", "rho", "alpha", "d", "permissive", "n", "tau", "seed", "output", "format",
              "constants", "replicates", "poissonized", "normalization", "graphs", "ecdf", "method",
              "pairs", "arc_width", "skip_slow")


def resolve(args: argparse.Namespace) -> RunConfig:
    doc, lines = {}, {}
    if args.config:
        with open(args.config) as fh:
            doc, lines = read_document(fh.read())
        if doc.get("command", args.command) != args.command:
            raise ConfigError(f"file is for '{doc['command']}', not '{args.command}'",
                              lines.get("command"), "command")
    doc["command"] = args.command
    for key in _FLAG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            doc[key] = list(value) if isinstance(value, list) else value
            lines.pop(key, None)
    return validate_mapping(doc, lines)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            cfg = resolve(args)
    except ConfigError as exc:
        parser.exit(2, f"longedge {args.command}: configuration error: {exc}\n")
    except OSError as exc:
        parser.exit(2, f"longedge {args.command}: {exc}\n")

    if cfg.command == "constants":
        _write(cfg.output, render_constants(cfg))
    elif cfg.command == "simulate":
        reports = simulate(cfg)
        _write(cfg.output, render_simulate(cfg, reports=reports))
        if cfg.format == "csv":
            summary = to_json({"config": cfg.as_dict(),
                               "summaries": [{"n": r.config.n, **r.summary} for r in reports]})
            if args.summary:
                _write(args.summary, summary)
            else:
                sys.stderr.write(summary)
        if cfg.ecdf:
            rows = [{"n": r.config.n, "x": x, "ecdf": f, "gumbel": g}
                    for r in reports for x, f, g in ecdf_table(r.z_nng)]
            buf = io.StringIO()
            write_csv(buf, ["n", "x", "ecdf", "gumbel"], rows, _provenance(cfg))
            _write(cfg.ecdf, buf.getvalue())
    elif cfg.command == "integrals":
        _write(cfg.output, render_integrals(cfg))
    elif cfg.command == "verify":
        bands = perturbed_bands() if args.force_fail else load_bands()

        def progress(res):
            sys.stderr.write(res.line() + "\n")
            sys.stderr.flush()

        try:
            results = run_checks(args.only, cfg.skip_slow, bands, progress=progress)
        except ValueError as exc:
            parser.exit(2, f"longedge verify: {exc}\n")
        failed = [r.name for r in results if not r.skipped and not r.passed]
        doc = {
            "passed": not failed,
            "failed": failed,
            "skipped": [r.name for r in results if r.skipped],
            "forced_failure": bool(args.force_fail),
            "checks": [r.as_dict() for r in results],
        }
        _write(cfg.output, to_json(doc))
        return 1 if failed else 0
    else:  # pragma: no cover - argparse restricts the choices
        raise AssertionError(cfg.command)
    return 0


if __name__ == "__main__":
    sys.exit(main())
