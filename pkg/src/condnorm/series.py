"""Regular-grid time series containers and the sensor-data cleaning operations.

Missing values are grid positions with a mask bit set, never absent rows,
so lag arithmetic stays trivially correct. All containers are immutable
after construction and every operation returns new objects on the same
grid (only masks and filled values change).
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, EstimationError, OverlapError, SchemaError


class QualityFlag(enum.Enum):
    """Per-observation quality label attached by upstream QA processes."""

    clean = "clean"
    range_flag = "range_flag"
    wiper = "wiper"
    manual = "manual"


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _check_grid(timestamps: np.ndarray, delta: int | None) -> int:
    if timestamps.ndim != 1 or timestamps.size < 1:
        raise ValueError("timestamps must be a non-empty 1-d array")
    if timestamps.size == 1:
        if delta is None:
            raise ValueError("a single-point series needs an explicit delta")
        if delta <= 0:
            raise ValueError("delta must be a positive number of seconds")
        return int(delta)
    diffs = np.diff(timestamps)
    if np.any(diffs <= 0):
        raise AlignmentError("timestamps must be strictly increasing")
    step = int(diffs[0])
    if np.any(diffs != step):
        raise AlignmentError("timestamps must be equally spaced")
    if delta is not None and int(delta) != step:
        raise AlignmentError(
            f"declared spacing {delta}s does not match the data spacing {step}s"
        )
    return step


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """A named univariate series on a regular grid of epoch-second timestamps.

    ``mask`` is True where the value is missing; masked entries carry no
    information (they are stored as NaN and must never be read).
    """

    name: str
    timestamps: np.ndarray
    values: np.ndarray
    mask: np.ndarray | None = None
    delta: int | None = None

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps, dtype=np.int64)
        step = _check_grid(ts, self.delta)
        values = np.asarray(self.values, dtype=np.float64).copy()
        if values.shape != ts.shape:
            raise ValueError("values and timestamps must have the same length")
        if self.mask is None:
            mask = np.zeros(ts.shape, dtype=bool)
        else:
            mask = np.asarray(self.mask, dtype=bool).copy()
            if mask.shape != ts.shape:
                raise ValueError("mask and timestamps must have the same length")
        mask |= ~np.isfinite(values)
        values[mask] = np.nan
        object.__setattr__(self, "timestamps", _freeze(ts))
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "mask", _freeze(mask))
        object.__setattr__(self, "delta", step)

    def __len__(self) -> int:
        return self.timestamps.size

    @property
    def observed(self) -> np.ndarray:
        return ~self.mask

    @property
    def n_missing(self) -> int:
        return int(self.mask.sum())

    def replace(self, values=None, mask=None, name=None) -> "TimeSeries":
        """Return a copy on the same grid with values and/or mask swapped."""
        return TimeSeries(
            name=self.name if name is None else name,
            timestamps=self.timestamps,
            values=self.values if values is None else values,
            mask=self.mask if mask is None else mask,
            delta=self.delta,
        )


@dataclass(frozen=True, eq=False)
class CovariateSet:
    """Named covariate columns sharing one timestamp grid.

    ``values`` is (n, p); ``mask`` marks per-column missingness.
    """

    timestamps: np.ndarray
    names: tuple
    values: np.ndarray
    mask: np.ndarray | None = None
    delta: int | None = None

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps, dtype=np.int64)
        step = _check_grid(ts, self.delta)
        names = tuple(str(n) for n in self.names)
        if len(names) < 1:
            raise ValueError("a covariate set needs at least one column")
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate covariate names in {names}")
        values = np.asarray(self.values, dtype=np.float64).copy()
        if values.ndim != 2 or values.shape != (ts.size, len(names)):
            raise ValueError("values must have shape (n_times, n_columns)")
        if self.mask is None:
            mask = np.zeros(values.shape, dtype=bool)
        else:
            mask = np.asarray(self.mask, dtype=bool).copy()
            if mask.shape != values.shape:
                raise ValueError("mask must have the same shape as values")
        mask |= ~np.isfinite(values)
        values[mask] = np.nan
        object.__setattr__(self, "timestamps", _freeze(ts))
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "mask", _freeze(mask))
        object.__setattr__(self, "delta", step)

    def __len__(self) -> int:
        return self.timestamps.size

    @property
    def n_columns(self) -> int:
        return len(self.names)

    @property
    def any_missing(self) -> np.ndarray:
        """Row bool array: True where any column is missing."""
        return self.mask.any(axis=1)

    def column(self, name: str) -> TimeSeries:
        try:
            j = self.names.index(name)
        except ValueError:
            raise SchemaError(f"no covariate named {name!r}") from None
        return TimeSeries(
            name=name,
            timestamps=self.timestamps,
            values=self.values[:, j],
            mask=self.mask[:, j],
            delta=self.delta,
        )

    def select(self, names) -> "CovariateSet":
        idx = [self.names.index(n) if n in self.names else -1 for n in names]
        missing = [n for n, i in zip(names, idx) if i < 0]
        if missing:
            raise SchemaError(f"no covariate named {missing[0]!r}")
        return CovariateSet(
            timestamps=self.timestamps,
            names=tuple(names),
            values=self.values[:, idx],
            mask=self.mask[:, idx],
            delta=self.delta,
        )


def check_same_grid(a, b) -> None:
    """Raise AlignmentError unless a and b share an identical grid."""
    if a.delta != b.delta:
        raise AlignmentError(f"grid spacing differs: {a.delta}s vs {b.delta}s")
    if len(a) != len(b) or a.timestamps[0] != b.timestamps[0]:
        raise AlignmentError("series are not on the same timestamp grid")


def align(inputs) -> CovariateSet:
    """Intersect the grids of several series/covariate sets into one set.

    All inputs must share one spacing and be phase-compatible; positions
    missing in a source are masked in that column only.
    """
    if not inputs:
        raise ValueError("align needs at least one input")
    deltas = {s.delta for s in inputs}
    if len(deltas) != 1:
        raise AlignmentError(f"grid spacings differ: {sorted(deltas)}")
    delta = deltas.pop()
    starts = [int(s.timestamps[0]) for s in inputs]
    ends = [int(s.timestamps[-1]) for s in inputs]
    for st in starts[1:]:
        if (st - starts[0]) % delta != 0:
            raise AlignmentError("grids share a spacing but are phase-shifted")
    start, end = max(starts), min(ends)
    if start > end:
        raise OverlapError("inputs have no overlapping time range")
    n = (end - start) // delta + 1
    ts = start + delta * np.arange(n, dtype=np.int64)

    names: list[str] = []
    cols: list[np.ndarray] = []
    masks: list[np.ndarray] = []
    for s in inputs:
        offset = (start - int(s.timestamps[0])) // delta
        sl = slice(offset, offset + n)
        if isinstance(s, TimeSeries):
            names.append(s.name)
            cols.append(s.values[sl])
            masks.append(s.mask[sl])
        else:
            for j, nm in enumerate(s.names):
                names.append(nm)
                cols.append(s.values[sl, j])
                masks.append(s.mask[sl, j])
    if len(set(names)) != len(names):
        raise SchemaError(f"duplicate column names after alignment: {names}")
    return CovariateSet(
        timestamps=ts,
        names=tuple(names),
        values=np.column_stack(cols),
        mask=np.column_stack(masks),
        delta=delta,
    )


def remove_range_flagged(series: TimeSeries, flags) -> TimeSeries:
    """Mask every position whose quality flag is ``range_flag``."""
    flags = list(flags)
    if len(flags) != len(series):
        raise AlignmentError(
            f"flag sequence length {len(flags)} does not match series length {len(series)}"
        )
    hit = np.fromiter((f == QualityFlag.range_flag for f in flags), dtype=bool, count=len(flags))
    return series.replace(mask=series.mask | hit)


def detect_wiper_phase(series: TimeSeries, period: int) -> int:
    """Pick the residue class (mod period) that looks like wiper spikes.

    The winner has the largest mean absolute deviation from a centered
    rolling median of window ``period``; exact ties go to the smallest
    residue (with a warning, since detection was ambiguous).
    """
    if period < 2:
        raise ValueError("period must be at least 2")
    if int(series.observed.sum()) < 2 * period:
        raise EstimationError(
            f"need at least {2 * period} observed values to detect a wiper phase"
        )
    n = len(series)
    left = period // 2
    right = period - 1 - left
    padded = np.concatenate([np.full(left, np.nan), series.values, np.full(right, np.nan)])
    windows = np.lib.stride_tricks.sliding_window_view(padded, period)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN windows
        med = np.nanmedian(windows, axis=1)
    dev = np.abs(series.values - med)
    scores = np.full(period, -np.inf)
    for r in range(period):
        sel = np.zeros(n, dtype=bool)
        sel[r::period] = True
        sel &= series.observed & np.isfinite(dev)
        if sel.any():
            scores[r] = float(np.mean(dev[sel]))
    if not np.isfinite(scores).any():
        raise EstimationError("no usable values for wiper phase detection")
    best = float(np.max(scores))
    winners = np.flatnonzero(scores == best)
    if winners.size > 1:
        warnings.warn(
            "wiper phase detection is ambiguous (tied residues "
            f"{winners.tolist()}); using the smallest",
            stacklevel=2,
        )
    return int(winners[0])


def remove_wiper_anomalies(series: TimeSeries, period: int, phase="auto") -> TimeSeries:
    """Mask every ``period``-th observation (sensor-wiper spikes).

    ``phase`` is the residue class to drop, or ``"auto"`` to detect it via
    :func:`detect_wiper_phase`.
    """
    if period < 2:
        raise ValueError("period must be at least 2")
    if phase == "auto":
        phase = detect_wiper_phase(series, period)
    phase = int(phase) % period
    hit = np.zeros(len(series), dtype=bool)
    hit[phase::period] = True
    return series.replace(mask=series.mask | hit)


def aggregate(series: TimeSeries, target_delta: int, statistic: str = "mean") -> TimeSeries:
    """Aggregate to a coarser grid; bins are left-labeled, left-closed.

    Each output bin is the mean of its non-missing members; a bin with no
    observed member is masked. ``target_delta`` must be an integer multiple
    of the input spacing. Only ``mean`` is implemented (a median variant
    would slot in here if ever needed).
    """
    if statistic != "mean":
        raise ValueError(f"unsupported statistic {statistic!r}; only 'mean' is implemented")
    target_delta = int(target_delta)
    if target_delta <= 0 or target_delta % series.delta != 0:
        raise AlignmentError(
            f"target spacing {target_delta}s is not a multiple of the input spacing {series.delta}s"
        )
    factor = target_delta // series.delta
    if factor == 1:
        return series
    n = len(series)
    n_out = -(-n // factor)
    pad = n_out * factor - n
    vals = np.concatenate([np.where(series.mask, 0.0, series.values), np.zeros(pad)])
    obs = np.concatenate([series.observed, np.zeros(pad, dtype=bool)])
    sums = vals.reshape(n_out, factor).sum(axis=1)
    counts = obs.reshape(n_out, factor).sum(axis=1)
    out_mask = counts == 0
    out_vals = np.divide(sums, counts, out=np.full(n_out, np.nan), where=~out_mask)
    ts = series.timestamps[0] + target_delta * np.arange(n_out, dtype=np.int64)
    return TimeSeries(
        name=series.name, timestamps=ts, values=out_vals, mask=out_mask, delta=target_delta
    )


def linear_interpolate(series: TimeSeries):
    """Fill interior gaps by straight lines between flanking observations.

    Leading and trailing gaps stay masked. Returns ``(filled_series,
    filled_indicator)`` where the indicator marks positions whose values
    were interpolated; observed values are returned bit-identical.
    """
    obs_idx = np.flatnonzero(series.observed)
    if obs_idx.size < 2:
        raise EstimationError("linear interpolation needs at least 2 observed values")
    fill = series.mask.copy()
    fill[: obs_idx[0]] = False
    fill[obs_idx[-1] + 1 :] = False
    values = series.values.copy()
    pos = np.flatnonzero(fill)
    values[pos] = np.interp(pos, obs_idx, series.values[obs_idx])
    out = series.replace(values=values, mask=series.mask & ~fill)
    return out, fill
