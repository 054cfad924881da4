"""Plot-ready CSV tables with ``#`` metadata lines."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class Table:
    name: str
    header: list
    rows: list = field(default_factory=list)
    meta: list = field(default_factory=list)  # (key, value) pairs


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render(table: Table, preamble=()) -> str:
    buf = io.StringIO()
    for key, value in [*preamble, *table.meta]:
        buf.write(f"# {key}: {value}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.header)
    for row in table.rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_table(table: Table, out_dir, prefix: str, preamble=()) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{prefix}_{table.name}.csv"
    path.write_text(render(table, preamble), encoding="utf-8")
    return path


def read_table(path):
    """Return ``(meta, header, rows)`` from a file written by :func:`write_table`."""
    meta, lines = {}, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(": ")
            meta[key] = value
        else:
            lines.append(line)
    reader = csv.reader(lines)
    header = next(reader)
    return meta, header, [row for row in reader]
