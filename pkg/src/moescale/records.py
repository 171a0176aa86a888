"""Typed CSV records.

A schema is an ordered tuple of ``(column, type)`` pairs with type one of
``int``, ``float`` or ``str``. Floats are written with ``repr`` so every value
reads back bit-identically; empty cells read back as ``None``.
"""

from __future__ import annotations

import csv
import io
from typing import Iterable

from .errors import InputError

Schema = tuple[tuple[str, type], ...]


def header(schema: Schema) -> list[str]:
    return [name for name, _ in schema]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    text = str(value)
    if any(ch in text for ch in "\n\r\0"):
        raise InputError(f"record field {text!r} contains a line break or NUL")
    return text


def write_records(schema: Schema, records: Iterable[dict], fh=None) -> str | None:
    """Write records to ``fh``; with no handle, return the CSV text."""
    out = io.StringIO() if fh is None else fh
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header(schema))
    for rec in records:
        writer.writerow([_fmt(rec.get(name)) for name, _ in schema])
    return out.getvalue() if fh is None else None


def _parse(kind: type, raw: str, where: str):
    if raw == "":
        return None
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise InputError(f"{where}: cannot parse {raw!r} as {kind.__name__}") from None
    return raw


def read_records(schema: Schema, source) -> list[dict]:
    """Parse CSV text or an open handle against ``schema``; the header must match exactly."""
    fh = io.StringIO(source) if isinstance(source, str) else source
    reader = csv.reader(fh)
    try:
        got = next(reader)
    except StopIteration:
        raise InputError("empty CSV input") from None
    if got != header(schema):
        raise InputError(f"expected header {','.join(header(schema))}, got {','.join(got)}")
    rows = []
    for lineno, raw in enumerate(reader, start=2):
        if len(raw) != len(schema):
            raise InputError(f"line {lineno}: expected {len(schema)} fields, got {len(raw)}")
        rows.append({name: _parse(kind, v, f"line {lineno}, column {name}")
                     for (name, kind), v in zip(schema, raw)})
    return rows
