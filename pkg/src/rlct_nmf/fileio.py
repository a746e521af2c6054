"""Matrix CSV files, dataset directories and JSON reports.

Matrices are row-major CSV with no header unless asked for. Floats are
written with 17 significant digits, which round-trips every IEEE double.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from .bayes_nmf import Dataset
from .divergences import Family
from .errors import ValidationError
from .rlct_core import TrueStructure

__all__ = [
    "CsvFormatError",
    "RaggedRowError",
    "NonNumericCellError",
    "NegativeEntryError",
    "parse_matrix_csv",
    "load_matrix_csv",
    "format_matrix_csv",
    "write_matrix_csv",
    "make_report",
    "write_report_json",
    "write_dataset",
    "read_dataset",
]


class CsvFormatError(ValidationError):
    """A matrix CSV could not be read as a rectangular table of finite reals."""


class RaggedRowError(CsvFormatError):
    pass


class NonNumericCellError(CsvFormatError):
    pass


class NegativeEntryError(CsvFormatError):
    pass


def parse_matrix_csv(text: str, *, header: bool = False, allow_negative: bool = False,
                     source: str = "<string>") -> np.ndarray:
    """Parse CSV text into a 2-D float array; row numbers in errors are 1-based file lines."""
    rows = list(csv.reader(text.splitlines()))
    start = 1 if header else 0
    body = [(i + 1, r) for i, r in enumerate(rows) if i >= start and any(c.strip() for c in r)]
    if not body:
        raise CsvFormatError(f"{source}: no data rows")
    width = len(body[0][1])
    values = []
    for line, row in body:
        if len(row) != width:
            raise RaggedRowError(f"{source}: row {line} has {len(row)} cells, expected {width}")
        parsed = []
        for col, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise NonNumericCellError(
                    f"{source}: row {line}, column {col}: {cell.strip()!r} is not a number"
                ) from None
            if not math.isfinite(v):
                raise NonNumericCellError(f"{source}: row {line}, column {col}: non-finite value")
            if v < 0 and not allow_negative:
                raise NegativeEntryError(f"{source}: row {line}, column {col}: negative entry {v}")
            parsed.append(v)
        values.append(parsed)
    return np.array(values, dtype=float)


def load_matrix_csv(path, *, header: bool = False, allow_negative: bool = False) -> np.ndarray:
    path = Path(path)
    return parse_matrix_csv(path.read_text(), header=header, allow_negative=allow_negative,
                            source=str(path))


def format_matrix_csv(matrix, *, header: bool = False) -> str:
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2:
        raise ValidationError(f"expected a 2-D matrix, got shape {m.shape}")
    lines = []
    if header:
        lines.append(",".join(f"c{j}" for j in range(m.shape[1])))
    for row in m:
        lines.append(",".join(format(v, ".17g") for v in row))
    return "\n".join(lines) + "\n"


def write_matrix_csv(path, matrix, *, header: bool = False) -> None:
    Path(path).write_text(format_matrix_csv(matrix, header=header))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def make_report(command: str, config: dict, seed: int | None, result: dict) -> dict:
    """Envelope every output with the resolved config, master seed and version."""
    return _jsonable({
        "tool": "rlct-nmf",
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": config,
        "result": result,
    })


def write_report_json(path, report: dict) -> None:
    Path(path).write_text(json.dumps(_jsonable(report), indent=2) + "\n")


# --- dataset directories ------------------------------------------------------

MANIFEST = "manifest.json"


def write_dataset(directory, dataset: Dataset) -> Path:
    """One CSV per observation plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(max(dataset.n - 1, 0))))
    files = []
    for i, W in enumerate(dataset.observations):
        name = f"obs_{i:0{width}d}.csv"
        write_matrix_csv(directory / name, W)
        files.append(name)
    truth = None
    if dataset.truth is not None:
        t = dataset.truth
        truth = {"H0": t.H0,
                 "A": None if t.A is None else np.asarray(t.A).tolist(),
                 "B": None if t.B is None else np.asarray(t.B).tolist()}
    manifest = {
        "family": dataset.family.value,
        "n": dataset.n,
        "shape": list(dataset.shape),
        "seed": dataset.seed,
        "truncated": dataset.truncated,
        "truth": truth,
        "files": files,
        "version": __version__,
    }
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    return directory


def read_dataset(directory) -> Dataset:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / MANIFEST).read_text())
    except FileNotFoundError:
        raise ValidationError(f"{directory}: missing {MANIFEST}") from None
    family = Family(manifest["family"])
    shape = tuple(manifest["shape"])
    mats = []
    for name in manifest["files"]:
        W = load_matrix_csv(directory / name, allow_negative=family is Family.GAUSSIAN)
        if W.shape != shape:
            raise ValidationError(f"{name}: shape {W.shape} does not match manifest {shape}")
        mats.append(W)
    if len(mats) != manifest["n"]:
        raise ValidationError(f"manifest lists n={manifest['n']} but {len(mats)} files")
    obs = np.stack(mats) if mats else np.empty((0,) + shape)
    truth = None
    if manifest.get("truth"):
        t = manifest["truth"]
        A = None if t["A"] is None else np.array(t["A"], dtype=float).reshape(shape[0], t["H0"])
        B = None if t["B"] is None else np.array(t["B"], dtype=float).reshape(t["H0"], shape[1])
        truth = TrueStructure(t["H0"], A, B)
    return Dataset(family, obs, truth, manifest.get("seed"), bool(manifest.get("truncated")))
