"""CSV reading and writing for observation and coefficient-path tables.

Floats are written with 17 significant digits so that a write/read round
trip reproduces every value exactly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FLOAT_FORMAT = ".17g"
DELIMITERS = {"csv": ",", "tsv": "\t"}


class InputError(ValueError):
    """Malformed input file; ``line`` is the 1-based line number when known."""

    def __init__(self, path, message: str, line: int | None = None):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class Table:
    """A period-label column plus named float columns."""

    index_name: str
    index: list[str]
    columns: list[str]
    values: np.ndarray          # (rows, len(columns))


def fmt(x: float) -> str:
    return format(float(x), FLOAT_FORMAT)


def write_table(path, table: Table, fmt_name: str = "csv") -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=DELIMITERS[fmt_name], lineterminator="\n")
        w.writerow([table.index_name, *table.columns])
        for label, row in zip(table.index, table.values):
            w.writerow([label, *(fmt(v) for v in row)])


def read_table(path, fmt_name: str = "csv") -> Table:
    """Read a header + rows table whose first column is an opaque period label."""
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as err:
        raise InputError(path, f"cannot open: {err.strerror or err}") from err
    with fh:
        reader = csv.reader(fh, delimiter=DELIMITERS[fmt_name])
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(path, "empty file; a header row is required", 1) from None
        header = [h.strip() for h in header]
        if len(header) < 2:
            raise InputError(path, "header needs a period column and at least one data column", 1)
        index, rows = [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(path, f"expected {len(header)} fields, got {len(row)}", line)
            vals = []
            for name, cell in zip(header[1:], row[1:]):
                try:
                    v = float(cell)
                except ValueError:
                    raise InputError(path, f"non-numeric value {cell!r} in column {name!r}", line) from None
                if not np.isfinite(v):
                    raise InputError(path, f"non-finite value {cell!r} in column {name!r}", line)
                vals.append(v)
            index.append(row[0].strip())
            rows.append(vals)
    values = np.array(rows, dtype=float).reshape(len(rows), len(header) - 1)
    return Table(header[0], index, header[1:], values)


def path_table(index: list[str], beta: np.ndarray, se: np.ndarray | None = None, prefix: str = "b") -> Table:
    m = beta.shape[1]
    cols = [f"{prefix}{i + 1}" for i in range(m)]
    vals = beta
    if se is not None:
        cols += [f"se{i + 1}" for i in range(m)]
        vals = np.hstack([beta, se])
    return Table("t", list(index), cols, np.asarray(vals, dtype=float))
