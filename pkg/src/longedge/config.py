"""Run configuration documents (YAML) with strict keys and line diagnostics.

A minimal document::

    command: constants
    model: elliptical
    rho: 0.5
    n: [1e6]
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import yaml

from .densities import FAMILIES, model_from_spec

__all__ = ["COMMANDS", "ConfigError", "RunConfig", "parse_config", "read_document", "validate_mapping"]

COMMANDS = ("constants", "simulate", "integrals", "verify")
MODEL_KEYS = ("rho", "alpha", "d", "permissive")
RUN_KEYS = (
    "command", "model", "n", "tau", "normalization", "seed", "replicates", "output",
    "format", "poissonized", "graphs", "constants", "pairs", "arc_width", "method",
    "skip_slow", "ecdf",
)


class ConfigError(ValueError):
    """Invalid configuration, with the offending line when known."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"field '{key}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    """Resolved run settings.  Defaults: ``tau = 1``, ``replicates = 1000``, ``format = "csv"``."""

    command: str
    model: dict = field(default_factory=dict)
    n: tuple[float, ...] = ()
    tau: float = 1.0
    normalization: str = "x"
    seed: int = 0
    replicates: int = 1000
    output: str | None = None
    format: str = "csv"
    poissonized: bool = True
    graphs: tuple[str, ...] = ("nng", "mst")
    constants: str = "closed-form"
    pairs: int = 100_000
    arc_width: float = 10.0
    method: str = "quadrature"
    skip_slow: bool = False
    ecdf: str | None = None

    def as_dict(self) -> dict:
        d = asdict(self)
        d["n"] = list(self.n)
        d["graphs"] = list(self.graphs)
        return d


def _number(value, key, line, cast=float):
    # YAML 1.1 reads "1e6" as a string, so accept numeric strings
    if isinstance(value, bool):
        raise ConfigError(f"expected a number, got {value!r}", line, key)
    try:
        out = cast(float(value)) if cast is int else cast(value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {value!r}", line, key) from None
    if cast is int and float(value) != out:
        raise ConfigError(f"expected an integer, got {value!r}", line, key)
    if cast is float and not math.isfinite(out):
        raise ConfigError(f"expected a finite number, got {value!r}", line, key)
    return out


def _flag(value, key, line) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"expected true or false, got {value!r}", line, key)
    return value


def _choice(value, options, key, line) -> str:
    if value not in options:
        raise ConfigError(f"expected one of {list(options)}, got {value!r}", line, key)
    return value


def validate_mapping(doc: dict, lines: dict | None = None) -> RunConfig:
    """Check a plain mapping and resolve it to a :class:`RunConfig`."""
    lines = lines or {}

    def line(key):
        return lines.get(key)

    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping of keys to values", 1)
    for key in doc:
        if key not in RUN_KEYS and key not in MODEL_KEYS:
            raise ConfigError(f"unknown key (allowed: {', '.join(RUN_KEYS + MODEL_KEYS)})", line(key), key)
    if "command" not in doc:
        raise ConfigError("missing required key", None, "command")
    command = _choice(doc["command"], COMMANDS, "command", line("command"))
    out: dict = {"command": command}

    model = doc.get("model")
    if isinstance(model, dict):
        raise ConfigError("give the family name here and its parameters as top-level keys",
                          line("model"), "model")
    params = {k: doc[k] for k in MODEL_KEYS if k in doc}
    if model is None:
        if command != "verify":
            raise ConfigError("missing required key", None, "model")
        if params:
            key = next(iter(params))
            raise ConfigError("model parameter given without a model", line(key), key)
    else:
        _choice(model, FAMILIES, "model", line("model"))
        spec = {"family": model}
        for key, value in params.items():
            spec[key] = _flag(value, key, line(key)) if key == "permissive" else _number(value, key, line(key))
        try:
            model_from_spec(spec)
        except (ValueError, KeyError) as exc:
            msg = f"missing model parameter {exc}" if isinstance(exc, KeyError) else str(exc)
            key = next((k for k in params if k in msg), None) or "model"
            raise ConfigError(msg, line(key), key) from None
        out["model"] = spec

    if "n" in doc:
        raw = doc["n"] if isinstance(doc["n"], list) else [doc["n"]]
        ns = tuple(_number(v, "n", line("n")) for v in raw)
        if not ns or any(not v > 0 for v in ns):
            raise ConfigError("n must be a nonempty list of positive numbers", line("n"), "n")
        out["n"] = ns
    elif command in ("constants", "simulate", "integrals"):
        raise ConfigError("missing required key", None, "n")

    if "tau" in doc:
        out["tau"] = _number(doc["tau"], "tau", line("tau"))
        if not out["tau"] > 0:
            raise ConfigError("tau must be positive", line("tau"), "tau")
    if "normalization" in doc:
        out["normalization"] = _choice(doc["normalization"], ("x", "tau"), "normalization", line("normalization"))
    if "seed" in doc:
        out["seed"] = _number(doc["seed"], "seed", line("seed"), int)
        if out["seed"] < 0:
            raise ConfigError("seed must be nonnegative", line("seed"), "seed")
    for key in ("replicates", "pairs"):
        if key in doc:
            out[key] = _number(doc[key], key, line(key), int)
            if out[key] < 1:
                raise ConfigError("must be at least 1", line(key), key)
    if "arc_width" in doc:
        out["arc_width"] = _number(doc["arc_width"], "arc_width", line("arc_width"))
        if not out["arc_width"] > 0:
            raise ConfigError("must be positive", line("arc_width"), "arc_width")
    for key in ("output", "ecdf"):
        if key in doc and doc[key] is not None:
            if not isinstance(doc[key], str):
                raise ConfigError("expected a file path", line(key), key)
            out[key] = doc[key]
    if "format" in doc:
        out["format"] = _choice(doc["format"], ("csv", "json"), "format", line("format"))
    for key in ("poissonized", "skip_slow"):
        if key in doc:
            out[key] = _flag(doc[key], key, line(key))
    if "graphs" in doc:
        graphs = doc["graphs"] if isinstance(doc["graphs"], list) else [doc["graphs"]]
        for g in graphs:
            _choice(g, ("nng", "mst"), "graphs", line("graphs"))
        if not graphs:
            raise ConfigError("must name at least one graph", line("graphs"), "graphs")
        out["graphs"] = tuple(dict.fromkeys(graphs))
    if "constants" in doc:
        out["constants"] = _choice(doc["constants"], ("closed-form", "pipeline", "pipeline-exact"),
                                   "constants", line("constants"))
    if "method" in doc:
        out["method"] = _choice(doc["method"], ("quadrature", "lemma9"), "method", line("method"))
    return RunConfig(**out)


def read_document(text: str) -> tuple[dict, dict]:
    """YAML mapping plus the line number of each top-level key."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ConfigError(f"YAML syntax error: {exc.problem}", mark.line + 1 if mark else None) from None
    if doc is None:
        return {}, {}
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping of keys to values", 1)
    lines = {}
    for key_node, _ in node.value:
        lines[key_node.value] = key_node.start_mark.line + 1
    return doc, lines


def parse_config(text: str) -> RunConfig:
    """Parse and validate a YAML configuration document."""
    doc, lines = read_document(text)
    if not doc:
        raise ConfigError("empty configuration document")
    return validate_mapping(doc, lines)
