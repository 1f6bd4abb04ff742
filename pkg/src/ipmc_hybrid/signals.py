"""Uniformly sampled real-valued time series and their CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, ParameterDomainError

UNIFORM_RTOL = 1e-6


@dataclass(frozen=True, eq=False)
class Signal:
    """Samples taken at ``sample_rate`` Hz, the first one at time ``t0``."""

    samples: np.ndarray
    sample_rate: float
    label: str = ""
    t0: float = 0.0

    def __post_init__(self):
        x = np.array(self.samples, dtype=float).reshape(-1)
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        if not self.sample_rate > 0 or not np.isfinite(self.sample_rate):
            raise ParameterDomainError("sample_rate", self.sample_rate, "> 0")
        object.__setattr__(self, "sample_rate", float(self.sample_rate))
        if not np.all(np.isfinite(x)):
            bad = int(np.flatnonzero(~np.isfinite(x))[0])
            raise DataError(f"signal {self.label!r} has a non-finite sample at index {bad}")

    def __len__(self):
        return self.samples.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Signal):
            return NotImplemented
        return (
            self.sample_rate == other.sample_rate
            and self.t0 == other.t0
            and self.label == other.label
            and np.array_equal(self.samples, other.samples)
        )

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self)) / self.sample_rate

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def with_samples(self, samples, label=None) -> "Signal":
        return Signal(samples, self.sample_rate, self.label if label is None else label, self.t0)


def format_float(x: float) -> str:
    """Shortest string that round-trips to the same float."""
    return repr(float(x))


def infer_sample_rate(times, lines=None) -> float:
    """Sample rate of a strictly increasing, uniform time column.

    ``lines`` optionally gives the file line number of each entry so that
    errors can name the first offending row.
    """
    t = np.asarray(times, dtype=float)
    if t.size < 2:
        raise DataError("need at least two samples to infer a sample rate")
    where = (lambda i: f"line {int(lines[i])}") if lines is not None else (lambda i: f"row {i}")
    dt = np.diff(t)
    bad = np.flatnonzero(dt <= 0)
    if bad.size:
        raise DataError(f"time column is not strictly increasing at {where(bad[0] + 1)}")
    bad = np.flatnonzero(np.abs(dt - dt[0]) > UNIFORM_RTOL * dt[0])
    if bad.size:
        raise DataError(
            f"non-uniform sampling at {where(bad[0] + 1)}: step {float(dt[bad[0]])!r} vs first step {float(dt[0])!r}"
        )
    step = (t[-1] - t[0]) / (t.size - 1)
    rate = 1.0 / step
    # times are written as i/fs, so the rate is recoverable to a few ulp; snap it
    snapped = float(f"{rate:.9g}")
    if abs(snapped - rate) <= 1e-9 * rate:
        rate = snapped
    return rate


def write_signal_csv(sig: Signal, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(signal_to_csv(sig))


def signal_to_csv(sig: Signal) -> str:
    buf = io.StringIO()
    buf.write("time_s,value\n")
    for t, v in zip(sig.times, sig.samples):
        buf.write(f"{format_float(t)},{format_float(v)}\n")
    return buf.getvalue()


def read_signal_csv(path, label: str | None = None) -> Signal:
    path = Path(path)
    rows, lines = read_numeric_csv(path, expected=("time_s", "value"))
    if rows.shape[0] == 0:
        raise DataError(f"{path}: no data rows")
    if rows.shape[0] == 1:
        raise DataError(f"{path}: a single row does not determine the sample rate")
    rate = infer_sample_rate(rows[:, 0], lines)
    return Signal(rows[:, 1], rate, path.stem if label is None else label, float(rows[0, 0]))


def read_numeric_csv(path, expected: tuple[str, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Parse a headed numeric CSV into (values, line_numbers).

    Lines starting with ``#`` are comments and may appear anywhere.
    """
    header = None
    values, lines = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if header is None:
                header = tuple(c.strip() for c in row)
                if header != tuple(expected):
                    raise DataError(
                        f"{path}: line {lineno}: expected header {','.join(expected)}, got {','.join(header)}"
                    )
                continue
            if len(row) != len(expected):
                raise DataError(f"{path}: line {lineno}: expected {len(expected)} columns, got {len(row)}")
            try:
                values.append([float(c) for c in row])
            except ValueError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
            lines.append(lineno)
    if header is None:
        raise DataError(f"{path}: empty file")
    arr = np.array(values, dtype=float).reshape(-1, len(expected))
    return arr, np.array(lines, dtype=int)
