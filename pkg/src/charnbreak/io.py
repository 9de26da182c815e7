"""CSV series, moving-average detrending, flat config files and result records."""

from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ParseError
from .model_core import TimeSeries, as_series

if TYPE_CHECKING:
    from numpy.typing import ArrayLike

RESULT_VERSION = "1"
SEED_ENV = "CHARN_SEED"


# ------------------------------------------------------------------- CSV


def _number(cell: str) -> float | None:
    try:
        return float(cell)
    except ValueError:
        return None


def load_csv(path: str | os.PathLike) -> TimeSeries:
    """Read a series from a CSV file.

    The file holds either one numeric column, or two columns ``t,value``.  A
    header row is optional; with a header the ``value`` column is located by
    name.  Integer ``t`` labels set the series' ``origin_label``.

    Raises
    ------
    ParseError
        Empty file, blank row, or a cell that is not a finite number; the
        message cites the 1-based row (and column).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or all(not any(c.strip() for c in r) for r in rows):
        raise ParseError("empty file")
    # trailing empty lines are tolerated, inner ones are not
    while rows and not any(c.strip() for c in rows[-1]):
        rows.pop()

    first = [c.strip() for c in rows[0]]
    start = 0
    value_col, t_col = (0, None) if len(first) == 1 else (1, 0)
    if any(_number(c) is None for c in first):
        names = [c.lower() for c in first]
        if "value" not in names:
            raise ParseError("header has no 'value' column", row=1)
        value_col = names.index("value")
        t_col = names.index("t") if "t" in names else None
        start = 1

    values, labels = [], []
    for r in range(start, len(rows)):
        row = rows[r]
        if not any(c.strip() for c in row):
            raise ParseError("blank row", row=r + 1)
        if len(row) <= value_col:
            raise ParseError("missing value column", row=r + 1, column=value_col + 1)
        v = _number(row[value_col].strip())
        if v is None or not math.isfinite(v):
            raise ParseError(f"not a finite number: {row[value_col]!r}", row=r + 1, column=value_col + 1)
        values.append(v)
        if t_col is not None:
            labels.append(row[t_col].strip())
    if not values:
        raise ParseError("no data rows")
    origin = None
    if labels:
        try:
            origin = int(labels[0])
        except ValueError:
            origin = None
    return TimeSeries(np.array(values), origin_label=origin)


def format_float(x: float) -> str:
    """17 significant digits: enough to round-trip any double exactly."""
    return format(float(x), ".17g")


def save_csv(series: TimeSeries | ArrayLike, path: str | os.PathLike, header: bool = True) -> None:
    """Write ``t,value`` rows (``t`` counts from the origin label)."""
    s = as_series(series)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(["t", "value"])
        for t, v in enumerate(s.values, start=1):
            w.writerow([s.label(t), format_float(v)])


def write_table(path: str | os.PathLike, header: list[str], rows: list[list[Any]]) -> None:
    """Plot-ready CSV; floats are written with 17 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(c) if isinstance(c, (float, np.floating)) else c for c in row])


# ------------------------------------------------------------- detrending


def detrend_ma(
    series: TimeSeries | ArrayLike, order: int = 5, endpoints: str = "shrink"
) -> tuple[TimeSeries, TimeSeries]:
    """Centred moving-average trend and the residual ``X_t - T_t``.

    Parameters
    ----------
    order : int
        Odd window length.
    endpoints : {"shrink", "drop"}
        ``"shrink"`` averages the first and last ``order // 2`` points over
        the widest symmetric window that fits; ``"drop"`` returns only the
        points where the full window fits.
    """
    s = as_series(series)
    x = s.values
    n = x.size
    if order < 1 or order % 2 == 0:
        raise ConfigError("moving-average order must be an odd positive integer")
    if order >= n and order > 1:
        raise ConfigError(f"moving-average order {order} must be smaller than n={n}")
    if endpoints not in ("shrink", "drop"):
        raise ConfigError("endpoints must be 'shrink' or 'drop'")
    half = order // 2
    trend = x.copy()
    if half:
        trend[half : n - half] = sliding_window_view(x, order).mean(axis=1)
        for i in range(half):
            trend[i] = x[: 2 * i + 1].mean()
            trend[n - 1 - i] = x[n - 1 - 2 * i :].mean()
    resid = x - trend
    if endpoints == "drop" and half:
        start = s.label(half + 1)
        return TimeSeries(resid[half : n - half], start), TimeSeries(trend[half : n - half], start)
    return TimeSeries(resid, s.origin_label), TimeSeries(trend, s.origin_label)


# ---------------------------------------------------------------- config


def _split(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def parse_bool(text: str | bool) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def int_list(text: str | list) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    try:
        return [int(p) for p in _split(text)]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers: {text!r}") from None


def float_list(text: str | list) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(p) for p in _split(text)]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers: {text!r}") from None


def load_config(path: str | os.PathLike) -> dict[str, str]:
    """Read a flat ``key = value`` file.

    Blank lines and lines starting with ``#`` are skipped; keys may not
    repeat.  Values are returned as raw strings and converted by
    :func:`validate_config`.
    """
    out: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if not key:
            raise ConfigError(f"config line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def dump_config(values: Mapping[str, Any]) -> str:
    """Inverse of :func:`load_config` for validated values."""
    lines = []
    for key in sorted(values):
        v = values[key]
        if v is None:
            continue
        if isinstance(v, (list, tuple)):
            v = ",".join(format_float(x) if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, float):
            v = format_float(v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{key} = {v}")
    return "\n".join(lines) + "\n"


def validate_config(raw: Mapping[str, Any], schema: Mapping[str, tuple[Callable, Any]]) -> dict[str, Any]:
    """Convert raw values with ``schema`` (key -> (converter, default)).

    Unknown keys raise :class:`ConfigError`; missing keys take the default.
    """
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
    out = {}
    for key, (conv, default) in schema.items():
        v = raw.get(key)
        if v is None:
            out[key] = default
            continue
        try:
            out[key] = conv(v)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {v!r} ({exc})") from None
    return out


def resolve_seed(seed: int | None) -> int | None:
    """``CHARN_SEED`` from the environment wins over ``seed``."""
    env = os.environ.get(SEED_ENV)
    if env is None or env.strip() == "":
        return seed
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None


# ---------------------------------------------------------------- results


def _jsonable(v: Any) -> Any:
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else None
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


def write_result(
    path: str | os.PathLike,
    command: str,
    inputs: Mapping[str, Any],
    outputs: Mapping[str, Any],
    timing: Mapping[str, float] | None = None,
) -> None:
    """Structured run record, one JSON object per line.

    Lines, in order: ``version``, ``command``, ``inputs``, ``outputs`` and,
    only when given, ``timing``.  Keys are sorted so equal runs produce
    identical bytes.
    """
    records: list[tuple[str, Any]] = [
        ("version", RESULT_VERSION),
        ("command", command),
        ("inputs", inputs),
        ("outputs", outputs),
    ]
    if timing is not None:
        records.append(("timing", timing))
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in records:
            fh.write(json.dumps({key: _jsonable(value)}, sort_keys=True, allow_nan=False) + "\n")


def read_result(path: str | os.PathLike) -> dict[str, Any]:
    out: dict[str, Any] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.update(json.loads(line))
    return out
