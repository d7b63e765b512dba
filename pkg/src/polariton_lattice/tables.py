"""Comma-separated output tables with a ``#`` metadata preamble.

Formatting rules (stable across runs so data sections compare byte for byte):

* floats: 12 significant digits (``format(x, ".12g")``), ``nan``/``inf`` spelled out;
  negative zero is written as ``0``
* integers as integers, booleans as ``true``/``false``
* complex quantities are split into ``*_re`` / ``*_im`` columns by the caller
* rows are written in scan order; ``\\n`` line endings; strings that contain a
  comma are quoted by the csv module
* preamble lines: ``# tool: polariton-lattice <version>``, ``# config_sha256: <hex>``,
  ``# created: <UTC ISO time>`` and any extra ``# key: value`` pairs.  Only the
  ``created`` line varies between identical runs.
* trailing ``# key: value`` lines may follow the data (e.g. a stability verdict)
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__

DIGITS = 12


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if x == 0:
            return "0"
        return format(x, f".{DIGITS}g")
    if value is None:
        return ""
    return str(value)


@dataclass
class OutputTable:
    columns: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    footer: dict = field(default_factory=dict)

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValueError(f"row has {len(values)} values, table has {len(self.columns)} columns")
        self.rows.append(values)

    def data_text(self) -> str:
        """Header plus data rows: the deterministic part of the file."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([fmt(v) for v in row])
        return buf.getvalue()

    def render(self, config_hash: str, created: str | None = None) -> str:
        created = created or datetime.now(timezone.utc).replace(microsecond=0).isoformat()
        head = [f"# tool: polariton-lattice {__version__}", f"# config_sha256: {config_hash}",
                f"# created: {created}"]
        head += [f"# {k}: {fmt(v)}" for k, v in self.meta.items()]
        tail = [f"# {k}: {fmt(v)}" for k, v in self.footer.items()]
        return "\n".join(head) + "\n" + self.data_text() + "".join(t + "\n" for t in tail)

    def write(self, path, config_hash: str):
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(self.render(config_hash), encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot write table {path}: {exc.strerror or exc}") from exc
        return path


@dataclass
class ReadTable:
    columns: list
    rows: list  # list of dicts (strings)
    meta: dict


def read_table(path) -> ReadTable:
    """Parse a table written by ``OutputTable.write`` (values stay strings)."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise OSError(f"cannot read table {path}: {exc.strerror or exc}") from exc
    meta, body = {}, []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    if not body:
        raise ValueError(f"table {path} has no header row")
    reader = csv.reader(body)
    columns = next(reader)
    rows = [dict(zip(columns, r)) for r in reader]
    return ReadTable(columns=columns, rows=rows, meta=meta)


def data_section(path) -> str:
    """File contents without the ``#`` lines (for determinism checks)."""
    return "".join(line + "\n" for line in Path(path).read_text(encoding="utf-8").splitlines()
                   if not line.startswith("#"))
