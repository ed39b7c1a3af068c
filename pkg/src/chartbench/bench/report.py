"""Report tables, reference values and their CSV/JSON serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from .. import __version__
from ..mc import RunLengthEstimate

CSV_COLUMNS = ("estimate", "stderr", "n", "paper_value", "method")


@dataclass(frozen=True)
class PaperValue:
    """A published number together with its printed precision."""

    text: str

    @property
    def value(self) -> float:
        return float(self.text)

    @property
    def half_unit(self) -> float:
        """Half a unit in the last printed digit (the rounding uncertainty)."""
        decimals = len(self.text.split(".")[1]) if "." in self.text else 0
        return 0.5 * 10.0 ** (-decimals)


def load_paper_values(table: str) -> dict[tuple[str, str], PaperValue]:
    """Reference values for ``table`` keyed by ``(row, col)``; empty if none are shipped."""
    ref = resources.files(__package__).joinpath("paper_values", f"{table}.csv")
    if not ref.is_file():
        return {}
    with ref.open("r", encoding="utf-8") as fh:
        return {(r["row"], r["col"]): PaperValue(r["value"]) for r in csv.DictReader(fh)}


def paper_tables() -> list[str]:
    root = resources.files(__package__).joinpath("paper_values")
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".csv"))


@dataclass
class Cell:
    estimate: float
    stderr: float | None = None
    n: int | None = None
    method: str = "MonteCarlo"
    paper_value: str | None = None
    conditioned_fraction: float | None = None
    censored: int = 0

    @classmethod
    def from_estimate(cls, est: RunLengthEstimate, paper: PaperValue | None = None) -> "Cell":
        return cls(est.mean, est.stderr, est.replications, "MonteCarlo",
                   paper.text if paper else None, est.conditioned_fraction, est.censored)

    @classmethod
    def exact(cls, value: float, method: str, paper: PaperValue | None = None) -> "Cell":
        return cls(float(value), None, None, method, paper.text if paper else None)

    @property
    def stochastic(self) -> bool:
        return self.method == "MonteCarlo"


@dataclass
class ReportTable:
    """Row/column labelled cells of one experiment, with provenance metadata."""

    table_id: str
    title: str
    row_name: str
    col_name: str
    rows: list[str]
    cols: list[str]
    cells: dict[tuple[str, str], Cell] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows = list(self.rows)
        self.cols = list(self.cols)

    def set(self, row: str, col: str, cell: Cell) -> None:
        if row not in self.rows:
            self.rows.append(row)
        if col not in self.cols:
            self.cols.append(col)
        self.cells[(row, col)] = cell

    def get(self, row: str, col: str) -> Cell:
        return self.cells[(row, col)]

    def row(self, row: str) -> list[Cell]:
        return [self.cells[(row, c)] for c in self.cols if (row, c) in self.cells]

    def validate(self) -> None:
        for (r, c), cell in self.cells.items():
            if cell.stochastic and (cell.stderr is None or not math.isfinite(cell.stderr)):
                raise ValueError(f"{self.table_id}: stochastic cell ({r}, {c}) lacks a standard error")
            if cell.censored:
                raise ValueError(f"{self.table_id}: cell ({r}, {c}) has {cell.censored} censored runs")

    # -- serialization ---------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.row_name, self.col_name, *CSV_COLUMNS])
        for r in self.rows:
            for c in self.cols:
                cell = self.cells.get((r, c))
                if cell is None:
                    continue
                w.writerow([r, c, _num(cell.estimate), _num(cell.stderr), "" if cell.n is None else cell.n,
                            cell.paper_value or "", cell.method])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "table_id": self.table_id, "title": self.title, "row_name": self.row_name,
            "col_name": self.col_name, "rows": self.rows, "cols": self.cols,
            "cells": [{"row": r, "col": c, **asdict(cell)} for (r, c), cell in self.cells.items()],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReportTable":
        cells = {}
        for item in d["cells"]:
            item = dict(item)
            r, c = item.pop("row"), item.pop("col")
            cells[(r, c)] = Cell(**item)
        return cls(d["table_id"], d["title"], d["row_name"], d["col_name"], d["rows"], d["cols"],
                   cells, d.get("metadata", {}))


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def emit(report: ReportTable, out_dir, fmt: str = "csv") -> list[Path]:
    """Write ``<table_id>.csv`` (or ``.json``) plus a JSON metadata sidecar; returns the paths."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sidecar = out / f"{report.table_id}.json"
    paths = []
    if fmt == "csv":
        p = out / f"{report.table_id}.csv"
        p.write_text(report.to_csv(), encoding="utf-8")
        paths.append(p)
    sidecar.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True, default=_json_default) + "\n",
                       encoding="utf-8")
    paths.append(sidecar)
    return paths


def load_report(path) -> ReportTable:
    return ReportTable.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _json_default(o):
    if hasattr(o, "item"):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def version_string() -> str:
    return __version__
