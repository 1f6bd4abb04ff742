"""Synthetic actuator used as ground truth, and recording I/O.

The surrogate chains the reference RC cascade, a static cubic and a
first-order low-pass, then adds seeded Gaussian noise.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .circuit import DEFAULT_OVERSAMPLE, CascadeModel, PhysicalParams, build_cascade, simulate_cascade
from .errors import DataError, ParameterDomainError
from .signals import Signal, format_float, infer_sample_rate, read_numeric_csv

RECORDING_COLUMNS = ("time_s", "v_in", "displacement")


@dataclass(frozen=True)
class PlantSpec:
    """Ground-truth actuator.

    ``post_filter_pole`` of ``None`` bypasses the low-pass stage.
    ``noise_std`` is relative to the noiseless output range (max - min).
    """

    params: PhysicalParams = field(default_factory=PhysicalParams)
    N: int = 45
    a1: float = 1.0
    a3: float = -0.15
    post_filter_pole: float | None = 3.0
    noise_std: float = 0.005
    seed: int = 0
    oversample: int = DEFAULT_OVERSAMPLE

    def __post_init__(self):
        if self.a1 == 0 or not math.isfinite(self.a1):
            raise ParameterDomainError("a1", self.a1, "finite and nonzero")
        if not math.isfinite(self.a3):
            raise ParameterDomainError("a3", self.a3, "finite")
        if self.post_filter_pole is not None and not self.post_filter_pole > 0:
            raise ParameterDomainError("post_filter_pole", self.post_filter_pole, "> 0 or null")
        if not self.noise_std >= 0:
            raise ParameterDomainError("noise_std", self.noise_std, ">= 0")
        if not isinstance(self.N, int) or self.N < 1:
            raise ParameterDomainError("N", self.N, "a positive integer")

    @property
    def cascade(self) -> CascadeModel:
        return build_cascade(self.params, self.N)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "N": self.N,
            "a1": self.a1,
            "a3": self.a3,
            "post_filter_pole": self.post_filter_pole,
            "noise_std": self.noise_std,
            "seed": self.seed,
            "oversample": self.oversample,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PlantSpec":
        data = dict(data)
        if "params" in data:
            data["params"] = PhysicalParams.from_dict(data["params"])
        return cls(**data)


def lowpass(x: np.ndarray, pole: float, sample_rate: float) -> np.ndarray:
    """``pole / (s + pole)`` driven by a zero-order-hold input, discretised exactly."""
    a = math.exp(-pole / sample_rate)
    return sps.lfilter([0.0, 1.0 - a], [1.0, -a], x)


def plant_response(spec: PlantSpec, v_i: Signal, noise_seed=None) -> Signal:
    v_o = simulate_cascade(spec.cascade, v_i, spec.oversample).samples
    y = spec.a1 * v_o + spec.a3 * v_o**3
    if spec.post_filter_pole is not None:
        y = lowpass(y, spec.post_filter_pole, v_i.sample_rate)
    if spec.noise_std > 0 and y.size:
        span = float(np.max(y) - np.min(y))
        rng = np.random.default_rng(spec.seed if noise_seed is None else noise_seed)
        y = y + rng.normal(0.0, spec.noise_std * span, size=y.shape)
    return v_i.with_samples(y, label="displacement")


def recording_to_csv(v_i: Signal, w: Signal, units=("V", "mm")) -> str:
    if len(v_i) != len(w) or v_i.sample_rate != w.sample_rate:
        raise DataError("recording signals must share length and sample rate")
    buf = io.StringIO()
    buf.write(f"# units: time_s=s, v_in={units[0]}, displacement={units[1]}\n")
    buf.write(",".join(RECORDING_COLUMNS) + "\n")
    for t, v, d in zip(v_i.times, v_i.samples, w.samples):
        buf.write(f"{format_float(t)},{format_float(v)},{format_float(d)}\n")
    return buf.getvalue()


def write_recording(path, v_i: Signal, w: Signal, units=("V", "mm")) -> None:
    Path(path).write_text(recording_to_csv(v_i, w, units))


def ingest_recording(path) -> tuple[Signal, Signal]:
    """Read a ``time_s,v_in,displacement`` CSV into aligned input and output signals."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    rows, lines = read_numeric_csv(path, RECORDING_COLUMNS)
    if rows.shape[0] < 2:
        raise DataError(f"{path}: need at least two data rows, got {rows.shape[0]}")
    try:
        rate = infer_sample_rate(rows[:, 0], lines)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None
    t0 = float(rows[0, 0])
    return Signal(rows[:, 1], rate, "v_in", t0), Signal(rows[:, 2], rate, "displacement", t0)
