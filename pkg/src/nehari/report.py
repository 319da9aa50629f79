"""Reports and their on-disk form: ``report.json`` plus CSV tables.

CSV files are comma separated with LF line endings and a header row; floats
are written with 17 significant digits so that they read back exactly.
``report.json`` lists every emitted file in its ``manifest``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .discretize import Discretization
from .errors import NehariError


class ReportIOError(NehariError, OSError):
    """Writing a report file failed."""


@dataclass
class Table:
    header: Sequence[str]
    rows: list[Sequence[Any]]


@dataclass
class Report:
    metadata: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    tables: dict[str, Table] = field(default_factory=dict)
    ok: bool = True

    def to_dict(self, manifest: Sequence[str]) -> dict:
        return {"metadata": self.metadata, "results": self.results, "ok": self.ok,
                "manifest": list(manifest)}


def format_float(x: float) -> str:
    return f"{x:.17g}"


def _cell(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format_float(float(x))
    return str(x)


def profile_table(disc: Discretization, u: np.ndarray) -> Table:
    """Nodal profile, one row per interior node."""
    return Table(("x", "u"), [(float(x), float(v)) for x, v in zip(disc.nodes, u)])


def solution_filename(sol) -> str:
    return f"sol_{sol.branch.value}_{format_float(sol.lam)}.csv"


def _jsonable(obj):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_csv(path: Path, table: Table) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(table.header)
            for row in table.rows:
                writer.writerow([_cell(x) for x in row])
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc.strerror}") from exc


def read_profile(path: Path) -> tuple[np.ndarray, np.ndarray]:
    """Read back a profile CSV written by :func:`emit_reports`."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["x", "u"]:
        raise ValueError(f"{path} is not a profile file (header {rows[0]})")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    return data[:, 0], data[:, 1]


def emit_reports(report: Report, directory: Path) -> list[str]:
    """Write all tables and ``report.json`` into ``directory``; returns the manifest."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportIOError(f"cannot create output directory {directory}: {exc.strerror}") from exc
    manifest = sorted(report.tables)
    for name in manifest:
        write_csv(directory / name, report.tables[name])
    path = directory / "report.json"
    try:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            json.dump(_jsonable(report.to_dict(manifest)), fh, indent=2, allow_nan=False)
            fh.write("\n")
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc.strerror}") from exc
    return manifest
