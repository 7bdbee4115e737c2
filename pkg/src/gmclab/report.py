"""Report tables and their CSV / JSON serialisation.

CSV: header row, ``,`` separator, ``\\n`` line endings, ``.`` decimal point and
``repr`` floats so every value parses back bit-exactly.  An empty cell is a
missing value; empty strings are stored as missing.  JSON mirrors the CSV
content plus a metadata block.  Files are written to a temporary sibling and
moved into place with ``os.replace``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def _parse(s: str):
    if s == "":
        return None
    if s in ("true", "false"):
        return s == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def _plain(v):
    if isinstance(v, str) and v == "":
        return None
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    return v


@dataclass(frozen=True)
class Table:
    """Named table with a fixed column schema; rows are tuples of scalars."""

    name: str
    columns: tuple
    rows: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        rows = tuple(tuple(_plain(v) for v in r) for r in self.rows)
        for r in rows:
            if len(r) != len(self.columns):
                raise ValueError(f"table {self.name}: row has {len(r)} cells, expected {len(self.columns)}")
        object.__setattr__(self, "rows", rows)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def records(self) -> list[dict]:
        return [dict(zip(self.columns, r)) for r in self.rows]

    def where(self, **match) -> list[dict]:
        return [rec for rec in self.records() if all(rec[k] == v for k, v in match.items())]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_cell(v) for v in r])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, name: str, text: str) -> "Table":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        return cls(name, tuple(header), tuple(tuple(_parse(c) for c in row) for row in reader))

    def to_json_obj(self) -> dict:
        return {"columns": list(self.columns), "rows": [list(r) for r in self.rows]}

    @classmethod
    def from_json_obj(cls, name: str, obj: dict) -> "Table":
        return cls(name, tuple(obj["columns"]), tuple(tuple(r) for r in obj["rows"]))

    def equals(self, other: "Table") -> bool:
        """Cell-wise equality with NaN equal to NaN."""
        if self.name != other.name or self.columns != other.columns or len(self.rows) != len(other.rows):
            return False
        for a, b in zip(self.rows, other.rows):
            for x, y in zip(a, b):
                if isinstance(x, float) and isinstance(y, float) and math.isnan(x) and math.isnan(y):
                    continue
                if x != y or type(x) is not type(y):
                    return False
        return True


@dataclass
class ReportFile:
    """Metadata block plus data tables; ``warnings`` and ``gates`` travel in the metadata."""

    metadata: dict
    tables: list = field(default_factory=list)

    def table(self, name: str) -> Table:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    def to_json(self) -> str:
        obj = {"format": FORMAT_VERSION, "metadata": self.metadata,
               "tables": {t.name: t.to_json_obj() for t in self.tables}}
        return json.dumps(obj, indent=1, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ReportFile":
        obj = json.loads(text)
        return cls(obj["metadata"], [Table.from_json_obj(k, v) for k, v in obj["tables"].items()])


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_report(report: ReportFile, fmt: str, path) -> list[Path]:
    """Write ``report`` as JSON (one file at ``path``) or CSV (one file per table in dir ``path``)."""
    path = Path(path)
    if fmt == "json":
        atomic_write(path, report.to_json())
        return [path]
    if fmt == "csv":
        out = []
        for t in report.tables:
            p = path / f"{t.name}.csv"
            atomic_write(p, t.to_csv())
            out.append(p)
        return out
    raise ValueError(f"unknown report format {fmt!r}")


def read_csv_dir(path, names) -> list[Table]:
    path = Path(path)
    return [Table.from_csv(n, (path / f"{n}.csv").read_text()) for n in names]
