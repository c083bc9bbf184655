"""Loading the one-dimensional datasets used in the analyses.

Only the galaxy velocities ship with the package. Other datasets are read
from single-column CSV files with a header line; a sidecar
``<file>.json`` such as ``{"transform": "log"}`` selects a transform. Named
datasets (``enzyme``, ``acidity``, ``network``) are looked up as
``<name>.csv`` in the directory given by ``JEFFMIX_DATA``.
"""

from __future__ import annotations

import csv
import json
import os
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .mixture import Dataset

__all__ = ["BUNDLED", "EXPECTED_SIZE", "read_column", "load_dataset", "find_dataset"]

BUNDLED = ("galaxy",)
# size of the usual public versions, used only as a sanity warning in reports
EXPECTED_SIZE = {"galaxy": 82, "enzyme": 245, "acidity": 155}
DATA_ENV = "JEFFMIX_DATA"


def read_column(path) -> np.ndarray:
    """Values of a single-column CSV file with a header line.

    Blank lines are skipped; any non-numeric cell is an error naming the
    line.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path} is empty", field="data")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        cells = [c for c in row if c.strip()]
        if not cells:
            continue
        if len(cells) != 1:
            raise ConfigError(f"{path}:{lineno}: expected one column, got {len(cells)}", field="data")
        try:
            out.append(float(cells[0]))
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: not a number: {cells[0]!r}", field="data") from None
    if not out:
        raise ConfigError(f"{path} has no data rows", field="data")
    return np.asarray(out)


def _sidecar_transform(path: Path):
    side = path.with_suffix(path.suffix + ".json")
    if not side.exists():
        side = path.with_suffix(".json")
    if not side.exists():
        return None
    try:
        spec = json.loads(side.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{side}: {exc}", field="transform") from None
    return spec.get("transform")


def find_dataset(name: str) -> Path | None:
    """Path of a named dataset under ``$JEFFMIX_DATA``, or ``None``."""
    root = os.environ.get(DATA_ENV)
    if not root:
        return None
    p = Path(root) / f"{name}.csv"
    return p if p.exists() else None


def load_dataset(source, transform=None) -> Dataset:
    """Load a dataset by bundled name, ``$JEFFMIX_DATA`` name, or file path.

    Parameters
    ----------
    source : str or path
        ``"galaxy"``, another name resolved through ``$JEFFMIX_DATA``, or a
        CSV path.
    transform : {"none", "log"}, optional
        Overrides the sidecar setting.

    Raises
    ------
    FileNotFoundError
        Neither a bundled name, a file under ``$JEFFMIX_DATA``, nor an
        existing path.
    """
    name = str(source)
    if name in BUNDLED:
        with resources.files("jeffmix").joinpath(f"data/{name}.csv").open() as fh:
            next(fh)
            values = np.array([float(line) for line in fh if line.strip()])
        return Dataset.from_raw(values, name=name, transform=transform or "none")
    path = Path(name)
    if not path.exists():
        if path.suffix or len(path.parts) > 1:
            raise FileNotFoundError(f"dataset file not found: {path}")
        found = find_dataset(name)
        if found is None:
            raise FileNotFoundError(
                f"dataset {name!r} not found: not bundled, not a file, and no {name}.csv under ${DATA_ENV}"
            )
        path = found
    values = read_column(path)
    tr = transform or _sidecar_transform(path) or "none"
    return Dataset.from_raw(values, name=path.stem, transform=tr)
