"""CSV persistence for diagnostics series.

Fixed column schema (the field order of DiagRecord), 17 significant digits so
every float64 round-trips exactly.  Writing to an existing file appends rows
without duplicating the header.
"""

from __future__ import annotations

import csv
import os

from .diagnostics import DiagnosticsSeries, DiagRecord, RECORD_FIELDS

CSV_SCHEMA = RECORD_FIELDS


def emit_csv(series: DiagnosticsSeries, path) -> None:
    """Write (or append) the series; momentum is scalar, so the schema is the
    d = 1 diagnostic set."""
    new_file = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(CSV_SCHEMA)
        for rec in series:
            writer.writerow(f"{getattr(rec, name):.17g}" for name in CSV_SCHEMA)


def read_csv(path) -> DiagnosticsSeries:
    """Parse a diagnostics CSV back into a series (full 64-bit values)."""
    series = DiagnosticsSeries()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return series
        if tuple(header) != CSV_SCHEMA:
            raise ValueError(f"unexpected CSV header {header!r}")
        for row in reader:
            if len(row) != len(CSV_SCHEMA):
                raise ValueError(f"row has {len(row)} columns, expected {len(CSV_SCHEMA)}")
            series.append(DiagRecord(*(float(tok) for tok in row)))
    return series
