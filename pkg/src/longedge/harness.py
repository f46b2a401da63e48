"""Seeded Monte Carlo experiments on normalized longest edges.

Replicate ``i`` draws from ``SeedSequence(seed, spawn_key=(i,))`` and nothing
else, so a report is a pure function of the configuration whatever the
number of worker processes.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .constants import norming_circle_closed_form, norming_homogeneous, norming_parallel
from .densities import (
    HomogeneousModel,
    ParallelCurveModel,
    UniformSquareModel,
    model_from_spec,
    sample,
    sample_poissonized,
)
from .geometry import longest_edges, nng_longest_edge

__all__ = [
    "GUMBEL_MEDIAN",
    "ExperimentConfig",
    "ExperimentReport",
    "Normalization",
    "ecdf_table",
    "gap_statistics",
    "gumbel_cdf",
    "ks_distance",
    "normalization_for",
    "run_experiment",
    "summarize_replicates",
    "worker_count",
]

GUMBEL_MEDIAN = -math.log(math.log(2.0))
QUANTILE_LEVELS = tuple(round(0.1 * i, 1) for i in range(1, 10))
WORKERS_ENV = "LONGEDGE_WORKERS"
GRAPHS = ("nng", "mst")


def gumbel_cdf(x):
    """``exp(-exp(-x))``."""
    return np.exp(-np.exp(-np.asarray(x, dtype=float)))


def ks_distance(sample_values, cdf=gumbel_cdf) -> float:
    """Kolmogorov-Smirnov distance between the empirical CDF and ``cdf``."""
    x = np.sort(np.asarray(sample_values, dtype=float))
    if x.size == 0:
        raise ValueError("KS distance of an empty sample")
    n = x.size
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(np.abs(i / n - f)), np.max(np.abs((i - 1) / n - f))))


def ecdf_table(values, grid=None) -> np.ndarray:
    """Rows ``(x, empirical CDF, Gumbel CDF)``."""
    values = np.sort(np.asarray(values, dtype=float))
    if grid is None:
        grid = np.linspace(-3.0, 6.0, 91)
    grid = np.asarray(grid, dtype=float)
    fhat = np.searchsorted(values, grid, side="right") / values.size
    return np.column_stack([grid, fhat, gumbel_cdf(grid)])


@dataclass(frozen=True)
class ExperimentConfig:
    """One Monte Carlo run.

    ``normalization`` is ``"x"`` for ``(M - mu_n)/sigma_n`` or ``"tau"`` for
    ``(M - r_n(tau))/sigma_n``.  ``constants`` picks how ``mu_n`` is obtained
    for the standard normal: its closed form or the parallel-curve pipeline.
    """

    model: dict
    n: float
    replicates: int = 1000
    poissonized: bool = True
    normalization: str = "x"
    tau: float = 1.0
    seed: int = 0
    graphs: tuple[str, ...] = GRAPHS
    constants: str = "closed-form"

    def __post_init__(self):
        object.__setattr__(self, "model", dict(self.model))
        object.__setattr__(self, "graphs", tuple(self.graphs))
        if not self.replicates >= 1:
            raise ValueError(f"replicates must be at least 1, got {self.replicates}")
        if not self.n >= 2:
            raise ValueError(f"n must be at least 2, got {self.n}")
        if not self.poissonized and self.n != int(self.n):
            raise ValueError(f"fixed-size runs need an integer n, got {self.n}")
        if self.normalization not in ("x", "tau"):
            raise ValueError(f"normalization must be 'x' or 'tau', got {self.normalization!r}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.graphs or set(self.graphs) - set(GRAPHS):
            raise ValueError(f"graphs must be a nonempty subset of {GRAPHS}, got {self.graphs}")
        if self.constants not in ("closed-form", "pipeline", "pipeline-exact"):
            raise ValueError(f"unknown constants choice {self.constants!r}")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["graphs"] = list(self.graphs)
        return d


@dataclass(frozen=True)
class Normalization:
    """``z = (M - loc) / scale``; the square uses ``z = n pi M**2 - loc``."""

    kind: str
    loc: float
    scale: float
    mu_n: float
    sigma_n: float
    r_n: float

    def apply(self, m: np.ndarray, n: float) -> np.ndarray:
        m = np.asarray(m, dtype=float)
        if self.kind == "square":
            return n * math.pi * m * m - self.loc
        return (m - self.loc) / self.scale


def normalization_for(model, n: float, mode: str = "x", tau: float = 1.0,
                      constants: str = "closed-form") -> Normalization:
    if isinstance(model, UniformSquareModel):
        logn = math.log(n)
        loc = logn if mode == "x" else logn - math.log(tau)
        r_n = math.sqrt(max(logn - math.log(tau), 0.0) / (n * math.pi))
        return Normalization("square", loc, 1.0, math.nan, math.nan, r_n)
    if not n > math.e**math.e:
        # too few points for the norming constants to be defined
        return Normalization("none", math.nan, math.nan, math.nan, math.nan, math.nan)
    if isinstance(model, ParallelCurveModel):
        if constants == "closed-form":
            nc = norming_circle_closed_form(n, tau)
        else:
            nc = norming_parallel(model, n, tau, xi="exact" if constants == "pipeline-exact" else "reduced")
    elif isinstance(model, HomogeneousModel):
        nc = norming_homogeneous(model, n, tau)
    else:
        raise TypeError(f"no norming constants for {type(model).__name__}")
    loc = nc.mu_n if mode == "x" else nc.r_n
    return Normalization("location-scale", loc, nc.sigma_n, nc.mu_n, nc.sigma_n, nc.r_n)


@lru_cache(maxsize=8)
def _model(key: str):
    return model_from_spec(json.loads(key))


def _model_key(spec: dict) -> str:
    return json.dumps(spec, sort_keys=True)


def _replicate(key: str, n: float, poissonized: bool, seed: int, index: int, graphs: tuple) -> tuple:
    model = _model(key)
    ss = np.random.SeedSequence(seed, spawn_key=(index,))
    pts = sample_poissonized(model, n, ss) if poissonized else sample(model, int(n), ss)
    count = len(pts)
    if count < 2:
        # an empty graph has no edges; its longest edge is taken to be 0
        return 0.0, 0.0, count
    if "mst" in graphs:
        nng, mst = longest_edges(pts)
        return nng.longest_edge, mst.longest_edge, count
    return nng_longest_edge(pts).longest_edge, math.nan, count


def _replicate_block(args) -> list[tuple]:
    key, n, poissonized, seed, lo, hi, graphs = args
    return [_replicate(key, n, poissonized, seed, i, graphs) for i in range(lo, hi)]


def worker_count() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {env!r}") from None
        if value < 1:
            raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {env!r}")
        return value
    return os.cpu_count() or 1


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    m_nng: np.ndarray
    m_mst: np.ndarray
    counts: np.ndarray
    z_nng: np.ndarray
    z_mst: np.ndarray
    normalization: Normalization
    summary: dict = field(default_factory=dict)

    def rows(self):
        for i in range(len(self.counts)):
            yield {
                "replicate": i,
                "N": int(self.counts[i]),
                "M_NNG": float(self.m_nng[i]),
                "M_MST": float(self.m_mst[i]),
                "Z_NNG": float(self.z_nng[i]),
                "Z_MST": float(self.z_mst[i]),
            }


def _summarize(z: np.ndarray) -> dict | None:
    z = z[np.isfinite(z)]
    if z.size == 0:
        return None
    return {
        "ks": ks_distance(z),
        "median": float(np.median(z)),
        "quantiles": {f"{q:.1f}": float(np.quantile(z, q)) for q in QUANTILE_LEVELS},
    }


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    """Simulate ``cfg.replicates`` samples and normalize their longest edges."""
    key = _model_key(cfg.model)
    model = _model(key)
    if isinstance(model, ParallelCurveModel) and model.homogeneous is None:
        raise ValueError(
            "this parallel-curve model has no sampler; use the constants subcommand instead"
        )
    norm = normalization_for(model, cfg.n, cfg.normalization, cfg.tau, cfg.constants)
    workers = worker_count() if workers is None else workers
    r = cfg.replicates
    if workers <= 1 or r < 2:
        results = _replicate_block((key, cfg.n, cfg.poissonized, cfg.seed, 0, r, cfg.graphs))
    else:
        size = max(1, math.ceil(r / (4 * workers)))
        blocks = [(key, cfg.n, cfg.poissonized, cfg.seed, lo, min(lo + size, r), cfg.graphs)
                  for lo in range(0, r, size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = [row for block in pool.map(_replicate_block, blocks) for row in block]

    m_nng = np.array([row[0] for row in results])
    m_mst = np.array([row[1] for row in results])
    counts = np.array([row[2] for row in results], dtype=np.int64)
    if "mst" in cfg.graphs and np.any(m_mst < m_nng):
        raise AssertionError("a spanning tree came out shorter than the nearest-neighbor graph")
    report = ExperimentReport(
        cfg, m_nng, m_mst, counts, norm.apply(m_nng, cfg.n), norm.apply(m_mst, cfg.n), norm
    )
    report.summary = summarize_replicates(
        m_nng, m_mst, counts, report.z_nng, report.z_mst, norm, cfg.graphs
    )
    return report


def summarize_replicates(m_nng, m_mst, counts, z_nng, z_mst, norm: Normalization, graphs) -> dict:
    """Summary block of a report; also used to re-derive it from saved rows."""
    m_nng, m_mst, z_nng, z_mst = (np.asarray(a, dtype=float) for a in (m_nng, m_mst, z_nng, z_mst))
    summary = {
        "replicates": int(len(m_nng)),
        "mu_n": norm.mu_n,
        "sigma_n": norm.sigma_n,
        "r_n": norm.r_n,
        "mean_count": float(np.mean(counts)),
        "nng": _summarize(z_nng),
    }
    if "mst" in graphs:
        summary["mst"] = _summarize(z_mst)
        summary["gap"] = _gaps(m_nng, m_mst, z_nng, z_mst)
    return summary


def _gaps(m_nng, m_mst, z_nng, z_mst) -> dict:
    return {
        "fraction_equal": float(np.mean(m_mst == m_nng)),
        "mean_gap": float(np.mean(z_mst - z_nng)),
    }


def gap_statistics(report: ExperimentReport) -> dict:
    """Share of replicates where both graphs agree, and the mean normalized gap."""
    if "mst" not in report.config.graphs or "nng" not in report.config.graphs:
        raise ValueError("gap statistics need both the NNG and MST longest edges")
    return _gaps(report.m_nng, report.m_mst, report.z_nng, report.z_mst)
