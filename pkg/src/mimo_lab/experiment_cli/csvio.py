"""Result CSV: a ``# schema=1`` line, a header, then one RFC 4180 record per row."""

from __future__ import annotations

import csv
import dataclasses
import io
from pathlib import Path
from typing import Sequence

from .sweep import ResultRow

__all__ = ["SCHEMA_LINE", "COLUMNS", "emit_csv", "format_rows", "parse_csv", "parse_rows",
           "SchemaError"]

SCHEMA_LINE = "# schema=1"
COLUMNS = tuple(f.name for f in dataclasses.fields(ResultRow))
_INT = {"group", "subcarrier", "seed"}
_FLOAT = {"tau", "snr_db", "snr_b_db", "mi_bits", "mi_bits_clamped", "spectral_efficiency",
          "std_error", "runtime_ms"}


class SchemaError(ValueError):
    """Input is not a result file of a supported schema."""


def _cell(name: str, value) -> str:
    if value is None:
        return ""
    if name in _FLOAT:
        return format(float(value), ".9g")
    return str(value)


def format_rows(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    buf.write(SCHEMA_LINE + "\r\n")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(COLUMNS)
    for r in rows:
        writer.writerow([_cell(name, getattr(r, name)) for name in COLUMNS])
    return buf.getvalue()


def emit_csv(rows: Sequence[ResultRow], path) -> None:
    """Write rows in the order given. ``OSError`` carries the offending path."""
    Path(path).write_bytes(format_rows(rows).encode("utf-8"))


def _value(name: str, text: str):
    if text == "":
        return None if name in _FLOAT else text
    if name in _INT:
        return int(text)
    if name in _FLOAT:
        return float(text)
    return text


def parse_rows(text: str) -> list:
    lines = text.splitlines(keepends=True)
    if not lines or lines[0].strip() != SCHEMA_LINE:
        raise SchemaError(f"missing '{SCHEMA_LINE}' line")
    reader = csv.reader(io.StringIO("".join(lines[1:]), newline=""))
    header = next(reader, None)
    if header is None or tuple(header) != COLUMNS:
        raise SchemaError("unexpected header")
    rows = []
    for n, record in enumerate(reader, start=3):
        if len(record) != len(COLUMNS):
            raise SchemaError(f"line {n}: expected {len(COLUMNS)} fields, got {len(record)}")
        rows.append(ResultRow(**{k: _value(k, v) for k, v in zip(COLUMNS, record)}))
    return rows


def parse_csv(path) -> list:
    return parse_rows(Path(path).read_bytes().decode("utf-8"))
