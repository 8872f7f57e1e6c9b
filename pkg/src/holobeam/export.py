"""Deterministic CSV / JSON table export."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Sequence


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def to_csv_text(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r[c]) for c in columns])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if hasattr(v, "tolist"):
        return _jsonable(v.tolist())
    if isinstance(v, complex):
        return {"re": v.real, "im": v.imag}
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def to_json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def export(rows: Sequence[dict], fmt: str, path, columns: Sequence[str] | None = None) -> Path:
    """Write ``rows`` as CSV (header + rows) or as a JSON array of objects.

    Raises ``OSError`` when the file cannot be written.
    """
    path = Path(path)
    if fmt == "csv":
        if columns is None:
            if not rows:
                raise ValueError("an empty CSV table needs explicit columns")
            columns = list(rows[0].keys())
        text = to_csv_text(rows, columns)
    elif fmt == "json":
        text = to_json_text(list(rows))
    else:
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)
    return path


def write_json(obj, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(to_json_text(obj))
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
