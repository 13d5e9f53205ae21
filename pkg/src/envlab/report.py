"""Deterministic text rendering for batch results.

Every value is formatted through one function so the three output styles
(aligned table, CSV, JSON) agree byte for byte across runs: exact fractions
print as "a/b", floats at 12 significant digits, complex entries as
re/im pairs.  No locale, no timestamps, no hashing of dict order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

FORMATS = ("table", "csv", "structured")


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple
    rows: tuple


@dataclass(frozen=True)
class Report:
    title: str
    scalars: tuple = ()   # ordered (name, value) pairs
    tables: tuple = ()


def format_value(value) -> str:
    if isinstance(value, bool) or isinstance(value, np.bool_):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (complex, np.complexfloating)):
        return f"{value.real:.12g}{value.imag:+.12g}j"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return str(value)


def _formatted_rows(table: Table) -> list:
    rows = [[format_value(c) for c in row] for row in table.rows]
    for row in rows:
        if len(row) != len(table.columns):
            raise ValueError(f"row width mismatch in table {table.name!r}")
    return rows


def _emit_table_style(report: Report) -> str:
    lines = [f"# {report.title}"]
    for name, value in report.scalars:
        lines.append(f"{name} = {format_value(value)}")
    for table in report.tables:
        lines.append("")
        lines.append(f"[{table.name}]")
        rows = _formatted_rows(table)
        header = [str(c) for c in table.columns]
        widths = [
            max(len(header[i]), *(len(r[i]) for r in rows)) if rows else len(header[i])
            for i in range(len(header))
        ]
        lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip())
        for row in rows:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def _emit_csv(report: Report) -> str:
    lines = [f"# title={report.title}"]
    for name, value in report.scalars:
        lines.append(f"# {name}={format_value(value)}")
    for table in report.tables:
        lines.append(f"# table={table.name}")
        lines.append(",".join(str(c) for c in table.columns))
        for row in _formatted_rows(table):
            for cell in row:
                if "," in cell:
                    raise ValueError(f"comma inside CSV cell {cell!r}")
            lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _emit_structured(report: Report) -> str:
    payload = {
        "title": report.title,
        "scalars": {name: format_value(v) for name, v in report.scalars},
        "tables": [
            {
                "name": t.name,
                "columns": list(t.columns),
                "rows": _formatted_rows(t),
            }
            for t in report.tables
        ],
    }
    return json.dumps(payload, indent=2) + "\n"


def emit_report(report: Report, fmt: str) -> str:
    if fmt == "table":
        return _emit_table_style(report)
    if fmt == "csv":
        return _emit_csv(report)
    if fmt == "structured":
        return _emit_structured(report)
    raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")
