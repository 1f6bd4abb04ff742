"""Excitation stimuli and sliding-window framing for supervised learning."""

from __future__ import annotations

import io
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import DataError, EmptyDatasetError, ParameterDomainError
from .signals import Signal, format_float

STIMULUS_KINDS = ("prbs", "sine", "chirp", "pulse")

# Fibonacci LFSR feedback taps (1-based bit positions) of primitive polynomials
LFSR_TAPS = {
    2: (2, 1),
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
    11: (11, 9),
    12: (12, 11, 10, 4),
    13: (13, 12, 11, 8),
    14: (14, 13, 12, 2),
    15: (15, 14),
    16: (16, 15, 13, 4),
    17: (17, 14),
    18: (18, 11),
    19: (19, 18, 17, 14),
    20: (20, 17),
    21: (21, 19),
    22: (22, 21),
    23: (23, 18),
    24: (24, 23, 22, 17),
}

SPLIT_NAMES = ("train", "validation", "test")
TRAIN, VALIDATION, TEST = 0, 1, 2


@dataclass(frozen=True)
class StimulusSpec:
    kind: str
    amplitude: float = 2.0
    duration: float = 120.0
    sample_rate: float = 30.0
    frequency: float = 0.25
    f0: float = 0.05
    f1: float = 1.0
    period: float = 8.0
    duty: float = 0.5
    bit_duration: float = 1.0
    lfsr_order: int = 9
    seed: int | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in STIMULUS_KINDS:
            raise ParameterDomainError("kind", self.kind, f"one of {', '.join(STIMULUS_KINDS)}")
        for name in ("amplitude", "duration", "sample_rate"):
            if not getattr(self, name) > 0:
                raise ParameterDomainError(name, getattr(self, name), "> 0")
        if self.kind == "sine" and not self.frequency >= 0:
            raise ParameterDomainError("frequency", self.frequency, ">= 0")
        if self.kind == "chirp":
            for name in ("f0", "f1"):
                if not getattr(self, name) >= 0:
                    raise ParameterDomainError(name, getattr(self, name), ">= 0")
        if self.kind == "pulse":
            if not self.period > 0:
                raise ParameterDomainError("period", self.period, "> 0")
            if not 0 < self.duty < 1:
                raise ParameterDomainError("duty", self.duty, "in (0, 1)")
        if self.kind == "prbs":
            if self.lfsr_order not in LFSR_TAPS:
                raise ParameterDomainError("lfsr_order", self.lfsr_order, f"in {min(LFSR_TAPS)}..{max(LFSR_TAPS)}")
            if self.seed is not None and (self.seed == 0 or self.seed % (1 << self.lfsr_order) == 0):
                raise ParameterDomainError("seed", self.seed, "nonzero modulo 2**lfsr_order")
            if not self.bit_duration > 0:
                raise ParameterDomainError("bit_duration", self.bit_duration, "> 0")

    @property
    def label(self) -> str:
        return self.name or self.kind

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "StimulusSpec":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ParameterDomainError(sorted(extra)[0], data[sorted(extra)[0]], "a known stimulus field")
        return cls(**data)


def default_stimuli() -> list[StimulusSpec]:
    return [StimulusSpec(kind) for kind in STIMULUS_KINDS]


def lfsr_bits(order: int, seed: int, count: int) -> np.ndarray:
    """First ``count`` output bits of a maximal-length Fibonacci LFSR."""
    taps = LFSR_TAPS[order]
    mask = (1 << order) - 1
    state = seed & mask
    if state == 0:
        raise ParameterDomainError("seed", seed, "nonzero modulo 2**order")
    out = np.empty(count, dtype=np.int8)
    for i in range(count):
        out[i] = state & 1
        fb = 0
        for t in taps:
            fb ^= state >> (order - t)
        state = (state >> 1) | ((fb & 1) << (order - 1))
    return out


def generate_stimulus(spec: StimulusSpec) -> Signal:
    n = int(math.floor(spec.duration * spec.sample_rate + 1e-9))
    idx = np.arange(n)
    t = idx / spec.sample_rate
    A = spec.amplitude
    if spec.kind == "sine":
        x = A * np.sin(2 * np.pi * spec.frequency * t)
    elif spec.kind == "chirp":
        x = A * np.sin(2 * np.pi * (spec.f0 * t + (spec.f1 - spec.f0) * t**2 / (2 * spec.duration)))
    elif spec.kind == "pulse":
        phase = np.mod(t, spec.period) / spec.period
        x = np.where(phase < spec.duty, A, 0.0)
    else:
        samples_per_bit = spec.bit_duration * spec.sample_rate
        bit_idx = np.floor(idx / samples_per_bit + 1e-9).astype(np.int64)
        seed = 1 if spec.seed is None else spec.seed
        bits = lfsr_bits(spec.lfsr_order, seed, int(bit_idx[-1]) + 1 if n else 0)
        x = np.where(bits[bit_idx] == 1, A, -A).astype(float)
    return Signal(x, spec.sample_rate, spec.label)


@dataclass(frozen=True)
class WindowConfig:
    tau: int = 60
    stride: int = 1

    def __post_init__(self):
        if not isinstance(self.tau, (int, np.integer)) or self.tau < 1:
            raise ParameterDomainError("tau", self.tau, "a positive integer")
        if not isinstance(self.stride, (int, np.integer)) or self.stride < 1:
            raise ParameterDomainError("stride", self.stride, "a positive integer")


@dataclass(frozen=True, eq=False)
class WindowedDataset:
    """Lag windows of one signal with the target sampled at each window end.

    ``end_index[i]`` is the sample index of the last element of row ``i``
    (and of its target). ``split`` holds TRAIN/VALIDATION/TEST codes, or -1
    for rows not yet assigned.
    """

    inputs: np.ndarray
    targets: np.ndarray
    end_index: np.ndarray
    sample_rate: float
    split: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.inputs.shape[0] != self.targets.shape[0]:
            raise DataError("inputs rows must match targets length")
        if self.split is None:
            object.__setattr__(self, "split", np.full(self.n_rows, -1, dtype=np.int8))

    @property
    def n_rows(self) -> int:
        return self.inputs.shape[0]

    @property
    def tau(self) -> int:
        return self.inputs.shape[1]

    def rows(self, which: int) -> np.ndarray:
        return np.flatnonzero(self.split == which)

    def subset(self, which: int) -> tuple[np.ndarray, np.ndarray]:
        idx = self.rows(which)
        return self.inputs[idx], self.targets[idx]

    def with_split(self, split: np.ndarray) -> "WindowedDataset":
        split = np.asarray(split, dtype=np.int8)
        if split.shape != (self.n_rows,):
            raise DataError("split length must equal row count")
        return WindowedDataset(self.inputs, self.targets, self.end_index, self.sample_rate, split)

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = [f"x{j}" for j in range(self.tau)] + ["target", "split"]
        buf.write(",".join(cols) + "\n")
        for row, target, tag in zip(self.inputs, self.targets, self.split):
            name = SPLIT_NAMES[tag] if tag >= 0 else ""
            buf.write(",".join(format_float(v) for v in row))
            buf.write(f",{format_float(target)},{name}\n")
        return buf.getvalue()


def window_matrix(x: np.ndarray, cfg: WindowConfig) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[0] < cfg.tau:
        raise EmptyDatasetError(f"signal length {x.shape[0]} is shorter than window tau={cfg.tau}")
    view = np.lib.stride_tricks.sliding_window_view(x, cfg.tau)
    return np.ascontiguousarray(view[:: cfg.stride])


def frame_windows(x: Signal, y: Signal, cfg: WindowConfig) -> WindowedDataset:
    """Row ``i`` is ``x[i*stride : i*stride + tau]``; its target is ``y`` at the row's last index."""
    if len(x) != len(y):
        raise DataError(f"input and target lengths differ ({len(x)} vs {len(y)})")
    if x.sample_rate != y.sample_rate:
        raise DataError(f"input and target sample rates differ ({x.sample_rate} vs {y.sample_rate})")
    inputs = window_matrix(x.samples, cfg)
    end = np.arange(inputs.shape[0]) * cfg.stride + cfg.tau - 1
    return WindowedDataset(inputs, y.samples[end].copy(), end, x.sample_rate)


def split_counts(n: int, ratios) -> tuple[int, int, int]:
    """Row counts for (train, test, validation) ratios; remainder goes to train."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 or not math.isfinite(r) for r in ratios):
        raise ParameterDomainError("ratios", ratios, "three non-negative numbers (train, test, validation)")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ParameterDomainError("ratios", ratios, "summing to 1")
    n_test = int(round(n * ratios[1]))
    n_val = int(round(n * ratios[2]))
    if n_test + n_val > n:
        n_val = n - n_test
    return n - n_test - n_val, n_test, n_val


def split_assignment(n: int, ratios=(0.3, 0.5, 0.2), seed=0) -> np.ndarray:
    """Random per-row split codes, reproducible for a given seed."""
    n_train, n_test, n_val = split_counts(n, ratios)
    order = np.random.default_rng(seed).permutation(n)
    split = np.empty(n, dtype=np.int8)
    split[order[:n_train]] = TRAIN
    split[order[n_train : n_train + n_test]] = TEST
    split[order[n_train + n_test :]] = VALIDATION
    return split


def split_dataset(d: WindowedDataset, ratios=(0.3, 0.5, 0.2), seed=0) -> WindowedDataset:
    return d.with_split(split_assignment(d.n_rows, ratios, seed))
