"""CSV emission with a trailing ``# key=value`` metadata block.

Floats are written with ``repr`` so identical values give identical bytes.
"""

from __future__ import annotations

import csv
import io
import sys
from fractions import Fraction


def fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, Fraction):
        return repr(float(value))
    return str(value)


def render_csv(header, rows, metadata: dict | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    for key, value in (metadata or {}).items():
        buf.write(f"# {key}={fmt(value)}\n")
    return buf.getvalue()


def write_csv(path, header, rows, metadata: dict | None = None) -> str:
    """Write to ``path`` (``None`` or ``-`` for stdout) and return the text."""
    text = render_csv(header, rows, metadata)
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
