"""CSV/JSON input and output helpers.

CSV files are comma separated UTF-8 with a header row. Floats are written
with ``repr``, which round-trips exactly through ``float()``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from .core import SelectionError


class InputError(SelectionError):
    pass


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise InputError(f"{path}: empty file (a header row is required)")
    header = [h.strip() for h in rows[0]]
    if len(rows) == 1:
        raise InputError(f"{path}: no data rows")
    return header, rows[1:]


def read_table(path, required, optional=()) -> dict[str, list[str]]:
    """Raw string columns; missing required columns and ragged rows are errors."""
    header, rows = _read_rows(path)
    missing = [c for c in required if c not in header]
    if missing:
        raise InputError(f"{path}: missing column(s) {missing}; header is {header}")
    out = {c: [] for c in list(required) + [c for c in optional if c in header]}
    pos = {c: header.index(c) for c in out}
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise InputError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
        for c, j in pos.items():
            out[c].append(row[j].strip())
    return out


def parse_floats(path, name: str, values: list[str], finite: bool = True) -> np.ndarray:
    out = np.empty(len(values))
    for i, v in enumerate(values):
        try:
            out[i] = float(v)
        except ValueError:
            raise InputError(f"{path}: row {i + 2} column {name!r}: not a number: {v!r}") from None
        if finite and not math.isfinite(out[i]):
            raise InputError(f"{path}: row {i + 2} column {name!r}: value must be finite")
    return out


def read_columns(path, required, optional=()) -> dict[str, np.ndarray | list[str]]:
    """Numeric columns from a CSV; columns named in ``optional`` are kept as strings."""
    raw = read_table(path, required, optional)
    return {c: (parse_floats(path, c, v) if c in required else v) for c, v in raw.items()}


def read_pvalues(path) -> np.ndarray:
    p = read_columns(path, ["p"])["p"]
    bad = np.flatnonzero((p < 0) | (p > 1))
    if bad.size:
        raise InputError(f"{path}: row {bad[0] + 2}: p-value {p[bad[0]]!r} outside [0, 1]")
    return p


def read_observations(path) -> list[tuple[str, str, float]]:
    raw = read_table(path, ["task_id", "group", "value"])
    values = parse_floats(path, "value", raw["value"])
    return list(zip(raw["task_id"], raw["group"], values.tolist()))


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=False) + "\n"


def write_text(path, text: str) -> None:
    """Write atomically (temp file in the target directory, then rename); ``-``/None means stdout."""
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
