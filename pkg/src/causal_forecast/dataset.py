"""Loading, chronological splitting, normalization and windowing of series."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Raised for unreadable or degenerate input data."""


@dataclass(frozen=True, eq=False)
class SeriesFrame:
    """A ``T x D`` block of observations with variable names."""

    values: np.ndarray
    names: tuple[str, ...]
    timestamps: tuple[str, ...] | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 2:
            raise DataError(f"values must be 2-D, got shape {v.shape}")
        t, d = v.shape
        if t < 1 or d < 2:
            raise DataError(f"need T >= 1 and D >= 2, got T={t}, D={d}")
        if not np.isfinite(v).all():
            r, c = map(int, np.argwhere(~np.isfinite(v))[0])
            raise DataError(f"non-finite value at ({r},{c})")
        names = tuple(str(n) for n in self.names)
        if len(names) != d:
            raise DataError(f"{len(names)} names for {d} columns")
        if len(set(names)) != d:
            raise DataError("variable names must be unique")
        if self.timestamps is not None:
            ts = tuple(str(s) for s in self.timestamps)
            if len(ts) != t:
                raise DataError(f"{len(ts)} timestamps for {t} rows")
            object.__setattr__(self, "timestamps", ts)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "names", names)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    def rows(self, start: int, stop: int) -> "SeriesFrame":
        ts = self.timestamps[start:stop] if self.timestamps is not None else None
        return SeriesFrame(self.values[start:stop], self.names, ts)

    def select(self, columns: Sequence[int]) -> "SeriesFrame":
        cols = list(columns)
        return SeriesFrame(self.values[:, cols], tuple(self.names[c] for c in cols), self.timestamps)

    def with_values(self, values: np.ndarray) -> "SeriesFrame":
        return SeriesFrame(values, self.names, self.timestamps)


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_csv(path: str | Path) -> SeriesFrame:
    """Read a header-first CSV; a leading ``date`` column becomes timestamps."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise DataError(f"{path}: need a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    has_date = header[0].lower() == "date"
    names = header[1:] if has_date else header
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise DataError(f"{path}: duplicate variable names {dup}")
    values = []
    stamps = []
    for r_idx, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise DataError(f"{path}: ragged row {r_idx} has {len(row)} cells, header has {len(header)}")
        cells = row[1:] if has_date else row
        if has_date:
            stamps.append(row[0].strip())
        parsed = []
        for c_idx, cell in enumerate(cells):
            if not _is_float(cell):
                raise DataError(f"{path}: non-numeric cell at ({r_idx},{names[c_idx]}): {cell!r}")
            parsed.append(float(cell))
        values.append(parsed)
    return SeriesFrame(np.array(values), tuple(names), tuple(stamps) if has_date else None)


def save_csv(path: str | Path, frame: SeriesFrame) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if frame.timestamps is not None:
            w.writerow(["date", *frame.names])
            for ts, row in zip(frame.timestamps, frame.values):
                w.writerow([ts, *(repr(float(x)) for x in row)])
        else:
            w.writerow(frame.names)
            for row in frame.values:
                w.writerow([repr(float(x)) for x in row])


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.7
    val_frac: float = 0.1
    test_frac: float = 0.2

    def __post_init__(self):
        fr = (self.train_frac, self.val_frac, self.test_frac)
        if any(not 0 < f < 1 for f in fr):
            raise DataError(f"split fractions must lie in (0,1): {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise DataError(f"split fractions sum to {sum(fr)}, not 1")


def split_lengths(n: int, spec: SplitSpec) -> tuple[int, int, int]:
    # the epsilon keeps products like 100*0.7 = 69.999... from flooring low
    n_train = int(math.floor(n * spec.train_frac + 1e-9))
    n_val = int(math.floor(n * spec.val_frac + 1e-9))
    return n_train, n_val, n - n_train - n_val


def split_chrono(frame: SeriesFrame, spec: SplitSpec) -> tuple[SeriesFrame, SeriesFrame, SeriesFrame]:
    """Contiguous train/val/test row ranges in time order."""
    n_train, n_val, n_test = split_lengths(frame.n_steps, spec)
    if min(n_train, n_val, n_test) <= 0:
        raise DataError(f"empty split: lengths ({n_train},{n_val},{n_test}) from T={frame.n_steps}")
    a, b = n_train, n_train + n_val
    return frame.rows(0, a), frame.rows(a, b), frame.rows(b, frame.n_steps)


@dataclass(frozen=True, eq=False)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, frame: SeriesFrame) -> "Normalizer":
        mean = frame.values.mean(axis=0)
        std = frame.values.std(axis=0)
        bad = [frame.names[i] for i in np.nonzero(std <= 1e-12 * np.maximum(1.0, np.abs(mean)))[0]]
        if bad:
            raise DataError(f"constant column(s) cannot be normalized: {bad}")
        return cls(mean, std)

    def apply(self, x):
        if isinstance(x, SeriesFrame):
            return x.with_values((x.values - self.mean) / self.std)
        return (np.asarray(x) - self.mean) / self.std

    def invert(self, z):
        if isinstance(z, SeriesFrame):
            return z.with_values(z.values * self.std + self.mean)
        return np.asarray(z) * self.std + self.mean


@dataclass(frozen=True, eq=False)
class WindowSet:
    """Stacked (history, future) pairs: ``X`` is ``N x T_in x D``, ``Y`` is ``N x S x D``."""

    X: np.ndarray
    Y: np.ndarray
    lookback: int
    horizon: int
    stride: int
    starts: np.ndarray

    def __len__(self) -> int:
        return self.X.shape[0]

    def subset(self, idx) -> "WindowSet":
        return WindowSet(self.X[idx], self.Y[idx], self.lookback, self.horizon, self.stride, self.starts[idx])


def n_windows(length: int, lookback: int, horizon: int, stride: int = 1) -> int:
    span = length - lookback - horizon
    return span // stride + 1 if span >= 0 else 0


def window(frame: SeriesFrame | np.ndarray, lookback: int, horizon: int, stride: int = 1) -> WindowSet:
    if lookback < 1 or horizon < 1 or stride < 1:
        raise DataError(f"lookback, horizon, stride must be >= 1 (got {lookback}, {horizon}, {stride})")
    values = frame.values if isinstance(frame, SeriesFrame) else np.asarray(frame, dtype=np.float64)
    n, d = values.shape
    count = n_windows(n, lookback, horizon, stride)
    starts = np.arange(count) * stride
    if count == 0:
        return WindowSet(np.zeros((0, lookback, d)), np.zeros((0, horizon, d)), lookback, horizon, stride, starts)
    idx_x = starts[:, None] + np.arange(lookback)[None, :]
    idx_y = starts[:, None] + lookback + np.arange(horizon)[None, :]
    return WindowSet(values[idx_x], values[idx_y], lookback, horizon, stride, starts)


@dataclass(frozen=True)
class PreparedData:
    """Normalized splits plus their windows, as consumed by training."""

    train: SeriesFrame
    val: SeriesFrame
    test: SeriesFrame
    normalizer: Normalizer
    train_windows: WindowSet
    val_windows: WindowSet
    test_windows: WindowSet


def prepare(frame: SeriesFrame, split: SplitSpec, lookback: int, horizon: int, stride: int = 1) -> PreparedData:
    """Split, fit the normalizer on train only, normalize every split, and window each one."""
    tr, va, te = split_chrono(frame, split)
    norm = Normalizer.fit(tr)
    tr, va, te = norm.apply(tr), norm.apply(va), norm.apply(te)
    return PreparedData(
        tr, va, te, norm,
        window(tr, lookback, horizon, stride),
        window(va, lookback, horizon, stride),
        window(te, lookback, horizon, stride),
    )
