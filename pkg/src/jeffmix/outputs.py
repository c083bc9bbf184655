"""Deterministic, atomic writers for study outputs.

JSON files carry ``schema_version`` and sorted keys; CSV files use the long
format ``study, n, k, replication, parameter, component, value``. Every
file is written to a temporary sibling and moved into place, so a reader
never sees a partial file. SVG output has its date stamp and element ids
fixed so reruns produce the same drawing.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "SCHEMA_VERSION",
    "LONG_COLUMNS",
    "LongRow",
    "to_jsonable",
    "write_text_atomic",
    "write_json",
    "read_json",
    "write_long_csv",
    "read_long_csv",
    "write_svg",
]

SCHEMA_VERSION = 1
LONG_COLUMNS = ("study", "n", "k", "replication", "parameter", "component", "value")


@dataclass(frozen=True)
class LongRow:
    study: str
    n: int | None
    k: int | None
    replication: int | None
    parameter: str
    component: int | None
    value: float

    def cells(self):
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(v)
            return str(v)

        return [fmt(getattr(self, c)) for c in LONG_COLUMNS]


def to_jsonable(obj):
    """Convert numpy scalars/arrays, tuples and non-finite floats for JSON.

    Non-finite floats become the strings ``"nan"``, ``"inf"``, ``"-inf"``.
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):  # enums
        return obj.value
    return obj


def write_text_atomic(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path, payload: dict):
    body = {"schema_version": SCHEMA_VERSION, **to_jsonable(payload)}
    return write_text_atomic(path, json.dumps(body, sort_keys=True, indent=2) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_long_csv(path, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LONG_COLUMNS)
    for r in rows:
        w.writerow(r.cells())
    return write_text_atomic(path, buf.getvalue())


def read_long_csv(path):
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        return [dict(r) for r in rd]


def write_svg(path, fig):
    """Save a matplotlib figure as SVG without a timestamp, then close it."""
    import matplotlib.pyplot as plt

    buf = io.StringIO()
    with plt.rc_context({"svg.hashsalt": "jeffmix", "svg.fonttype": "none"}):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return write_text_atomic(path, buf.getvalue())
