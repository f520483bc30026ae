"""Small CSV helpers shared by the file formats."""

import csv

import numpy as np


class FormatError(ValueError):
    """Malformed or unreadable input file."""


def fmt(x) -> str:
    # repr of a float round-trips bit-exactly
    return repr(float(x))


def read_rows(path, header):
    """Numeric rows of a headed CSV as an ``(n, len(header))`` float array."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if not rows or [c.strip() for c in rows[0]] != list(header):
        raise FormatError(f"{path}: expected header {','.join(header)}")
    try:
        data = [[float(c) for c in row] for row in rows[1:] if row]
    except ValueError as exc:
        raise FormatError(f"{path}: malformed row ({exc})") from exc
    if any(len(row) != len(header) for row in data):
        raise FormatError(f"{path}: every row needs {len(header)} fields")
    return np.array(data, dtype=float).reshape(-1, len(header))
