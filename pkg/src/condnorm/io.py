"""CSV ingestion and emission.

Data files carry a header row whose first column is ``timestamp``
(ISO-8601, UTC); remaining columns are numeric, with an empty cell or
``NA`` meaning missing. Flag files carry ``timestamp,variable,flag`` rows.
"""

from __future__ import annotations

import csv
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .series import CovariateSet, QualityFlag, TimeSeries

_MISSING_TOKENS = {"", "NA", "NaN", "nan"}


def parse_timestamp(text: str, path="", row: int = 0) -> int:
    """Parse an ISO-8601 UTC timestamp into whole epoch seconds."""
    raw = text.strip()
    try:
        dt = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    except ValueError:
        raise SchemaError(f"{path}: row {row}: bad timestamp {text!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    epoch = dt.timestamp()
    if epoch != int(epoch):
        raise SchemaError(f"{path}: row {row}: sub-second timestamps are not supported")
    return int(epoch)


def format_timestamp(epoch: int) -> str:
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def format_value(v) -> str:
    if v is None:
        return ""
    v = float(v)
    if np.isnan(v):
        return ""
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def read_table(path):
    """Read a data CSV into (timestamps, column names, values, missing mask)."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if not header or header[0].strip() != "timestamp":
            raise SchemaError(f"{path}: first column must be named 'timestamp'")
        names = [h.strip() for h in header[1:]]
        if not names:
            raise SchemaError(f"{path}: no data columns")
        stamps: list[int] = []
        rows: list[list[float]] = []
        for i, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(names) + 1:
                raise SchemaError(f"{path}: row {i}: expected {len(names) + 1} fields, got {len(rec)}")
            stamps.append(parse_timestamp(rec[0], path, i))
            vals = []
            for name, cell in zip(names, rec[1:]):
                cell = cell.strip()
                if cell in _MISSING_TOKENS:
                    vals.append(np.nan)
                else:
                    try:
                        vals.append(float(cell))
                    except ValueError:
                        raise SchemaError(
                            f"{path}: row {i}: column {name!r}: bad number {cell!r}"
                        ) from None
            rows.append(vals)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    ts = np.asarray(stamps, dtype=np.int64)
    values = np.asarray(rows, dtype=np.float64)
    return ts, names, values, ~np.isfinite(values)


def load_covariates(path, names=None, delta=None) -> CovariateSet:
    """Load a data CSV as a covariate set, optionally selecting columns."""
    ts, all_names, values, mask = read_table(path)
    try:
        cov = CovariateSet(
            timestamps=ts, names=tuple(all_names), values=values, mask=mask, delta=delta
        )
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    if names is not None:
        cov = cov.select(list(names))
    return cov


def load_series(path, name, delta=None) -> TimeSeries:
    """Load one named column of a data CSV as a time series."""
    return load_covariates(path, delta=delta).column(name)


def load_flags(path):
    """Read a flag CSV into {variable: [(epoch, QualityFlag), ...]}."""
    path = Path(path)
    out: dict[str, list] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["timestamp", "variable", "flag"]:
            raise SchemaError(f"{path}: header must be 'timestamp,variable,flag'")
        for i, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) < 3:
                raise SchemaError(f"{path}: row {i}: expected 3 fields")
            epoch = parse_timestamp(rec[0], path, i)
            variable = rec[1].strip()
            try:
                flag = QualityFlag(rec[2].strip())
            except ValueError:
                raise SchemaError(f"{path}: row {i}: unknown flag {rec[2]!r}") from None
            out.setdefault(variable, []).append((epoch, flag))
    return out


def flags_for_series(series: TimeSeries, flag_records, variable: str):
    """Project flag records for one variable onto a series grid.

    Positions without a record are ``clean``; records outside the grid are
    ignored; records off the grid phase raise.
    """
    flags = [QualityFlag.clean] * len(series)
    start = int(series.timestamps[0])
    end = int(series.timestamps[-1])
    for epoch, flag in flag_records.get(variable, []):
        if epoch < start or epoch > end:
            continue
        if (epoch - start) % series.delta != 0:
            raise SchemaError(
                f"flag timestamp {format_timestamp(epoch)} is not on the grid of {series.name!r}"
            )
        flags[(epoch - start) // series.delta] = flag
    return flags


def write_csv(path, header, rows) -> None:
    """Write rows of already-formatted strings with a deterministic layout."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_series(path, series: TimeSeries, extra_columns=None) -> None:
    """Write ``timestamp,value`` (plus optional named float columns)."""
    extra = list(extra_columns or [])
    header = ["timestamp", series.name] + [name for name, _ in extra]
    rows = []
    for i, ts in enumerate(series.timestamps):
        row = [format_timestamp(ts), "" if series.mask[i] else format_value(series.values[i])]
        row += [format_value(col[i]) for _, col in extra]
        rows.append(row)
    write_csv(path, header, rows)
