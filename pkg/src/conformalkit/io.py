"""CSV and snapshot plumbing for the command-line interface.

Column conventions: features are ``x1..xd``, the outcome is ``y`` (real) or
``label`` (integer in 1..k), with optional ``u`` (tie-break uniform),
``score`` (precomputed nonconformity), ``w_ratio`` (density ratio), and
model-prediction columns ``m_hat``, ``q_lo``, ``q_hi``, ``pi_1..pi_k``.
Numbers are written with 17 significant digits so round-trips are exact.
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import InputError

__all__ = [
    "read_columns",
    "column_floats",
    "column_ints",
    "feature_matrix",
    "pi_matrix",
    "fmt_number",
    "write_rows",
    "SNAPSHOT_FORMAT",
    "save_snapshot",
    "load_snapshot",
]

SNAPSHOT_FORMAT = "conformalkit.calibration/1"


def read_columns(path: str | Path) -> tuple[dict[str, list[str]], int]:
    """Read a CSV file into named columns; returns (columns, row count)."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise InputError(f"{path}: empty file") from None
            header = [h.strip() for h in header]
            if len(set(header)) != len(header):
                raise InputError(f"{path}: duplicate column names")
            cols: dict[str, list[str]] = {h: [] for h in header}
            count = 0
            for lineno, row in enumerate(reader, start=2):
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                if len(row) != len(header):
                    raise InputError(
                        f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                    )
                for h, v in zip(header, row):
                    cols[h].append(v.strip())
                count += 1
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    return cols, count


def column_floats(
    cols: dict[str, list[str]], name: str, where: str, allow_nan: bool = False
) -> np.ndarray:
    if name not in cols:
        raise InputError(f"{where}: missing required column {name!r}")
    out = np.empty(len(cols[name]), dtype=np.float64)
    for i, raw in enumerate(cols[name]):
        try:
            out[i] = float(raw)
        except ValueError:
            raise InputError(f"{where}: bad number {raw!r} in column {name!r}") from None
    if not allow_nan and np.any(np.isnan(out)):
        raise InputError(f"{where}: NaN in column {name!r}")
    return out


def column_ints(cols: dict[str, list[str]], name: str, where: str) -> list[int]:
    if name not in cols:
        raise InputError(f"{where}: missing required column {name!r}")
    out = []
    for raw in cols[name]:
        try:
            out.append(int(raw))
        except ValueError:
            raise InputError(f"{where}: bad integer {raw!r} in column {name!r}") from None
    return out


def _indexed_matrix(cols: dict[str, list[str]], prefix: str, where: str):
    names = []
    d = 0
    while f"{prefix}{d + 1}" in cols:
        d += 1
        names.append(f"{prefix}{d}")
    if d == 0:
        return None
    if any(name.startswith(prefix) and name not in names and name[len(prefix):].isdigit()
           for name in cols):
        raise InputError(f"{where}: {prefix}* columns must be consecutive from {prefix}1")
    return np.column_stack([column_floats(cols, name, where) for name in names])


def feature_matrix(cols: dict[str, list[str]], where: str) -> np.ndarray | None:
    """The x1..xd columns as a matrix, or None when absent."""
    return _indexed_matrix(cols, "x", where)


def pi_matrix(cols: dict[str, list[str]], where: str) -> np.ndarray | None:
    """The pi_1..pi_k columns as a matrix, or None when absent."""
    names = []
    k = 0
    while f"pi_{k + 1}" in cols:
        k += 1
        names.append(f"pi_{k}")
    if k == 0:
        return None
    return np.column_stack([column_floats(cols, name, where) for name in names])


def fmt_number(v) -> str:
    """Serialize a number: 17 significant digits, inf/-inf/nan spelled out."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    f = float(v)
    if math.isnan(f):
        return "nan"
    if math.isinf(f):
        return "inf" if f > 0 else "-inf"
    return f"{f:.17g}"


def _jsonable(v):
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isfinite(f):
            return f
        return fmt_number(f)
    return v


def write_rows(
    destination,
    header: Sequence[str],
    rows: Iterable[Sequence],
    fmt: str = "csv",
) -> str:
    """Render rows as CSV or JSON and write them to a path or stream.

    ``destination`` may be a path, an open text stream, or None to only
    return the rendered text.
    """
    rows = [list(r) for r in rows]
    if fmt == "csv":
        buf = _io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [fmt_number(v) if isinstance(v, (int, float, np.number)) else str(v)
                 for v in row]
            )
        text = buf.getvalue()
    elif fmt == "json":
        records = [
            {name: _jsonable(v) for name, v in zip(header, row)} for row in rows
        ]
        text = json.dumps(records, indent=2) + "\n"
    else:
        raise InputError(f"unknown output format {fmt!r}")
    if destination is None:
        return text
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        Path(destination).write_text(text)
    return text


def save_snapshot(payload: dict, destination) -> str:
    data = dict(payload)
    data["format"] = SNAPSHOT_FORMAT
    for key, value in list(data.items()):
        data[key] = _jsonable(value)
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    if destination is None:
        return text
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        Path(destination).write_text(text)
    return text


def _parse_extended(v) -> float:
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            raise InputError(f"bad number {v!r} in snapshot") from None
    return float(v)


def load_snapshot(path: str | Path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict) or data.get("format") != SNAPSHOT_FORMAT:
        raise InputError(f"{path}: not a {SNAPSHOT_FORMAT} snapshot")
    for key in ("threshold",):
        if key in data and data[key] is not None:
            data[key] = _parse_extended(data[key])
    if "scores" in data:
        data["scores"] = [float(s) for s in data["scores"]]
    return data
