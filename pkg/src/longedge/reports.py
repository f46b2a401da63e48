"""CSV and JSON emission with a provenance header."""
from __future__ import annotations

import csv
import io
import json
import math
from typing import Iterable, TextIO

import numpy as np

__all__ = ["format_value", "read_csv", "to_json", "write_csv"]

PROVENANCE_PREFIX = "# "


def format_value(value) -> str:
    """Reals get 17 significant digits so they read back bit-identical."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return None if not math.isfinite(obj) else float(obj)
    return obj


def to_json(obj) -> str:
    """JSON with insertion-ordered keys; non-finite reals become null."""
    return json.dumps(_jsonable(obj), indent=2, allow_nan=False) + "\n"


def write_csv(stream: TextIO, columns: list[str], rows: Iterable[dict], provenance: dict | None = None) -> None:
    """Header row plus one line per row; provenance goes in leading ``#`` lines."""
    if provenance:
        for key, value in provenance.items():
            stream.write(f"{PROVENANCE_PREFIX}{key}: {json.dumps(_jsonable(value), allow_nan=False)}\n")
    writer = csv.writer(stream, lineterminator="\r\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row.get(c)) for c in columns])


def _parse(text: str):
    if text == "":
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text in ("true", "false"):
        return text == "true"
    return text


def read_csv(stream: TextIO | str) -> tuple[dict, list[dict]]:
    """Inverse of :func:`write_csv`: ``(provenance, rows)``."""
    text = stream if isinstance(stream, str) else stream.read()
    provenance, body = {}, []
    for line in text.splitlines(keepends=True):
        if line.startswith(PROVENANCE_PREFIX.rstrip()) and not body:
            key, _, value = line[len(PROVENANCE_PREFIX):].partition(": ")
            provenance[key] = json.loads(value)
        else:
            body.append(line)
    reader = csv.DictReader(io.StringIO("".join(body)))
    rows = [{k: _parse(v) for k, v in row.items()} for row in reader]
    return provenance, rows
