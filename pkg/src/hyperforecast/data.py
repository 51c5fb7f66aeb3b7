"""CSV ingestion, chronological splits, sliding windows and instance normalization."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

ETT_SPLIT = (0.6, 0.2, 0.2)
LARGE_SPLIT = (0.7, 0.2, 0.1)
CONSTANT_STD = 1e-12
SPLITS = ("train", "val", "test")


class DataError(ValueError):
    """Raised for unreadable, malformed or insufficient input data."""


class OrderingError(DataError):
    """Timestamps are not strictly increasing."""


class InsufficientDataError(DataError):
    """A segment is too short for the requested window geometry."""


@dataclass
class RawSeries:
    timestamps: list[datetime]
    values: np.ndarray
    variate_names: list[str]
    offset: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError("values must be a [length x variates] matrix")
        if len(self.timestamps) != self.values.shape[0]:
            raise DataError("timestamps and values disagree on length")
        if self.values.shape[1] != len(self.variate_names):
            raise DataError("variate_names and values disagree on width")
        if not np.all(np.isfinite(self.values)):
            raise DataError("values contain NaN or Inf")
        for i in range(1, len(self.timestamps)):
            if self.timestamps[i] <= self.timestamps[i - 1]:
                raise OrderingError(f"timestamp at row {i} is not after row {i - 1}")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def n_variates(self) -> int:
        return self.values.shape[1]

    def slice(self, start: int, stop: int) -> "RawSeries":
        return RawSeries(self.timestamps[start:stop], self.values[start:stop],
                         list(self.variate_names), self.offset + start)

    def interval(self) -> timedelta:
        if len(self) < 2:
            return timedelta(hours=1)
        return self.timestamps[-1] - self.timestamps[-2]


@dataclass
class WindowedDataset:
    """Normalized inputs ``[count, T, V]`` with raw targets ``[count, H, V]``.

    ``mean``/``std`` hold each window's per-variate input statistics and
    ``starts`` the absolute index of each window's first input step.
    """

    inputs: np.ndarray
    targets: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    split: str
    starts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_length(self) -> int:
        return self.inputs.shape[1]

    @property
    def horizon(self) -> int:
        return self.targets.shape[1]

    @property
    def n_variates(self) -> int:
        return self.inputs.shape[2]

    def normalized_targets(self) -> np.ndarray:
        return (self.targets - self.mean[:, None, :]) / self.std[:, None, :]

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        return denormalize(values, self.mean, self.std)

    def raw_inputs(self) -> np.ndarray:
        return self.denormalize(self.inputs)

    def subset(self, index) -> "WindowedDataset":
        return WindowedDataset(self.inputs[index], self.targets[index], self.mean[index],
                               self.std[index], self.split, self.starts[index])


def _parse_time(text: str, row: int) -> datetime:
    try:
        return datetime.fromisoformat(text.strip())
    except ValueError:
        raise DataError(f"row {row}: unparseable timestamp {text!r}") from None


def load_csv(path, datetime_column: str | None = None,
             variate_columns: Sequence[str] | None = None) -> RawSeries:
    """Read a header-first CSV whose rows are time-ordered observations.

    ``datetime_column`` defaults to the first column and ``variate_columns``
    to every other column. Row numbers in errors count data rows from 0.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        rows = list(reader)
    time_col = datetime_column or header[0]
    if time_col not in header:
        raise DataError(f"datetime column {time_col!r} not in header")
    names = list(variate_columns) if variate_columns else [h for h in header if h != time_col]
    missing = [n for n in names if n not in header]
    if missing:
        raise DataError(f"columns not in header: {missing}")
    t_idx = header.index(time_col)
    v_idx = [header.index(n) for n in names]

    stamps, values = [], np.empty((len(rows), len(names)))
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"row {r}: expected {len(header)} cells, found {len(row)}")
        stamps.append(_parse_time(row[t_idx], r))
        for c, j in enumerate(v_idx):
            cell = row[j].strip()
            try:
                values[r, c] = float(cell)
            except ValueError:
                raise DataError(f"row {r}: unparseable value {cell!r} in column {names[c]!r}") from None
            if not math.isfinite(values[r, c]):
                raise DataError(f"row {r}: non-finite value in column {names[c]!r}")
    return RawSeries(stamps, values, names)


def write_csv(path, timestamps: Sequence[datetime], values: np.ndarray,
              names: Sequence[str], time_header: str = "date") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([time_header, *names])
        for ts, row in zip(timestamps, np.asarray(values)):
            writer.writerow([ts.strftime("%Y-%m-%d %H:%M:%S"), *(repr(float(v)) for v in row)])


def split_bounds(length: int, ratio: Sequence[float]) -> list[int]:
    if len(ratio) != 3 or any(r <= 0 for r in ratio):
        raise ValueError(f"ratio needs three positive parts, got {ratio}")
    if abs(sum(ratio) - 1.0) > 1e-9:
        raise ValueError(f"ratio must sum to 1, got {sum(ratio)!r}")
    cum = np.cumsum(ratio)
    # the epsilon absorbs binary representation error, e.g. 10 * (0.7 + 0.2)
    first = math.floor(length * cum[0] + 1e-9)
    second = math.floor(length * cum[1] + 1e-9)
    return [0, first, second, length]


def split_chronological(series: RawSeries, ratio: Sequence[float] = ETT_SPLIT):
    b = split_bounds(len(series), ratio)
    return tuple(series.slice(b[i], b[i + 1]) for i in range(3))


def instance_stats(windows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-window, per-variate mean and population std over the time axis.

    Windows whose std falls below ``CONSTANT_STD`` get std = 1, so their
    normalized values are exactly 0.
    """
    mean = windows.mean(axis=-2)
    std = windows.std(axis=-2)
    std = np.where(std < CONSTANT_STD, 1.0, std)
    return mean, std


def normalize(windows: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return (windows - mean[..., None, :]) / std[..., None, :]


def denormalize(values: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return values * std[..., None, :] + mean[..., None, :]


def window_count(length: int, input_length: int, horizon: int) -> int:
    return length - input_length - horizon + 1


def make_windows(segment: RawSeries, input_length: int, horizon: int,
                 split: str = "train", stride: int = 1) -> WindowedDataset:
    if stride != 1:
        raise ValueError("only dense windows (stride 1) are supported")
    count = window_count(len(segment), input_length, horizon)
    if count < 1:
        raise InsufficientDataError(
            f"{split} segment has {len(segment)} rows; needs at least {input_length + horizon}")
    span = input_length + horizon
    view = np.lib.stride_tricks.sliding_window_view(segment.values, span, axis=0)
    view = np.swapaxes(view, 1, 2)  # [count, span, V]
    raw_in = np.ascontiguousarray(view[:, :input_length])
    targets = np.ascontiguousarray(view[:, input_length:])
    mean, std = instance_stats(raw_in)
    return WindowedDataset(normalize(raw_in, mean, std), targets, mean, std, split,
                           segment.offset + np.arange(count))


def build_datasets(series: RawSeries, input_length: int, horizon: int,
                   ratio: Sequence[float] = ETT_SPLIT) -> dict[str, WindowedDataset]:
    parts = split_chronological(series, ratio)
    return {name: make_windows(part, input_length, horizon, name)
            for name, part in zip(SPLITS, parts)}


def synthetic_series(length: int, periods: Sequence[int] = (24, 96), amplitude: float = 1.0,
                     noise: float = 0.1, seed: int = 0, variates: int = 1,
                     start: datetime = datetime(2020, 1, 1)) -> RawSeries:
    """Hourly sum of sinusoids plus Gaussian noise; variates differ by random phase."""
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=np.float64)[:, None]
    phases = rng.uniform(0.0, 2 * np.pi, size=(len(periods), variates))
    signal = np.zeros((length, variates))
    for k, period in enumerate(periods):
        signal += amplitude * np.sin(2 * np.pi * t / period + phases[k])
    values = signal + noise * rng.standard_normal((length, variates))
    stamps = [start + timedelta(hours=i) for i in range(length)]
    return RawSeries(stamps, values, [f"var{i}" for i in range(variates)])


def parse_synthetic_spec(tokens: Sequence[str]) -> dict:
    """Parse ``periods=24,96 amplitude=1.0 noise=0.1 length=N seed=K`` tokens."""
    spec = {"periods": (24, 96), "amplitude": 1.0, "noise": 0.1, "length": 4000,
            "seed": 0, "variates": 1}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep or key not in spec:
            raise ValueError(f"bad synthetic option {tok!r}")
        if key == "periods":
            spec[key] = tuple(int(p) for p in value.split(",") if p)
        elif key in ("length", "seed", "variates"):
            spec[key] = int(value)
        else:
            spec[key] = float(value)
    return spec
