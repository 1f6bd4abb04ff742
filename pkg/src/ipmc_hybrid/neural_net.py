"""Deep MLP regressor over lag windows, trained by Levenberg-Marquardt.

Parameter vector layout (used by :func:`jacobian` and the JSON format):
layer by layer from input to output, each layer's weight matrix first
(shape ``(fan_in, fan_out)``, flattened row-major) followed by its bias.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import linalg

from .errors import DataError, EmptyDatasetError, NumericError, ParameterDomainError
from .signal_lab import TRAIN, VALIDATION, WindowConfig, WindowedDataset, window_matrix
from .signals import Signal

MODEL_FORMAT = "ipmc-hybrid-mlp"
MODEL_VERSION = 1

ACTIVATIONS = {
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "logistic": (lambda z: 0.5 * (1.0 + np.tanh(0.5 * z)), lambda z, a: a * (1.0 - a)),
    "linear": (lambda z: z, lambda z, a: np.ones_like(z)),
}


def default_layer_sizes(tau: int = 60, hidden_layers: int = 11, width: int = 10) -> list[int]:
    return [tau] + [width] * hidden_layers + [1]


@dataclass(frozen=True)
class Normalization:
    """Per-feature affine map ``(x - center) / half_range`` onto [-1, 1]."""

    center: np.ndarray
    half_range: np.ndarray

    @classmethod
    def identity(cls, n: int) -> "Normalization":
        return cls(np.zeros(n), np.ones(n))

    @classmethod
    def fit(cls, x: np.ndarray) -> "Normalization":
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        lo, hi = x.min(axis=0), x.max(axis=0)
        half = 0.5 * (hi - lo)
        half[half == 0] = 1.0
        return cls(0.5 * (hi + lo), half)

    def apply(self, x):
        return (x - self.center) / self.half_range

    def invert(self, xn):
        return xn * self.half_range + self.center

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "half_range": self.half_range.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalization":
        return cls(np.array(d["center"], dtype=float), np.array(d["half_range"], dtype=float))


@dataclass(frozen=True, eq=False)
class MlpModel:
    layer_sizes: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activation: str = "tanh"
    x_norm: Normalization = None
    y_norm: Normalization = None

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if self.activation not in ACTIVATIONS:
            raise ParameterDomainError("activation", self.activation, f"one of {sorted(ACTIVATIONS)}")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise DataError("weights/biases do not match layer_sizes")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (sizes[l], sizes[l + 1]) or b.shape != (sizes[l + 1],):
                raise DataError(f"layer {l}: expected W {(sizes[l], sizes[l + 1])}, b {(sizes[l + 1],)}")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise NumericError(f"layer {l} has non-finite parameters")
        if self.x_norm is None:
            object.__setattr__(self, "x_norm", Normalization.identity(sizes[0]))
        if self.y_norm is None:
            object.__setattr__(self, "y_norm", Normalization.identity(1))

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(self.weights, self.biases)])

    def with_params(self, theta: np.ndarray) -> "MlpModel":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise DataError(f"expected {self.n_params} parameters, got {theta.shape}")
        weights, biases, pos = [], [], 0
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            weights.append(theta[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out).copy())
            pos += fan_in * fan_out
            biases.append(theta[pos : pos + fan_out].copy())
            pos += fan_out
        return replace(self, weights=tuple(weights), biases=tuple(biases))

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "layer_sizes": list(self.layer_sizes),
            "activation": self.activation,
            "output_activation": "linear",
            "parameter_order": "layer-major; weights (fan_in x fan_out, row-major) then biases",
            "input_normalization": self.x_norm.to_dict(),
            "output_normalization": self.y_norm.to_dict(),
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        if d.get("format") != MODEL_FORMAT:
            raise DataError(f"not a {MODEL_FORMAT} document")
        if d.get("version") != MODEL_VERSION:
            raise DataError(f"unsupported model version {d.get('version')!r}")
        sizes = tuple(d["layer_sizes"])
        return cls(
            layer_sizes=sizes,
            weights=tuple(np.array(W, dtype=float).reshape(sizes[l], sizes[l + 1]) for l, W in enumerate(d["weights"])),
            biases=tuple(np.array(b, dtype=float).reshape(-1) for b in d["biases"]),
            activation=d["activation"],
            x_norm=Normalization.from_dict(d["input_normalization"]),
            y_norm=Normalization.from_dict(d["output_normalization"]),
        )


def init_model(layer_sizes, activation: str = "tanh", seed=0) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ParameterDomainError("layer_sizes", layer_sizes, "at least [input, output]")
    if any(s < 1 for s in sizes):
        raise ParameterDomainError("layer_sizes", layer_sizes, "all positive")
    if sizes[-1] != 1:
        raise ParameterDomainError("layer_sizes", layer_sizes, "ending in a single output")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(tuple(sizes), tuple(weights), tuple(biases), activation)


def _forward_normalized(m: MlpModel, xn: np.ndarray, keep=False):
    act, dact = ACTIVATIONS[m.activation]
    a = xn
    tape = []
    last = len(m.weights) - 1
    for l, (W, b) in enumerate(zip(m.weights, m.biases)):
        z = a @ W + b
        if l == last:
            out = z[:, 0]
        else:
            a_next = act(z)
            if keep:
                tape.append((a, dact(z, a_next)))
            a = a_next
    if keep:
        tape.append((a, None))
        return out, tape
    return out


def _as_batch(m: MlpModel, windows) -> np.ndarray:
    x = np.asarray(windows, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != m.layer_sizes[0]:
        raise DataError(f"window length must be {m.layer_sizes[0]}, got shape {x.shape}")
    if np.any(np.isnan(x)):
        raise DataError("NaN in model input")
    return x


def forward(m: MlpModel, window) -> float | np.ndarray:
    """Prediction for one window (scalar) or a batch of windows (vector)."""
    x = _as_batch(m, window)
    out = m.y_norm.invert(_forward_normalized(m, m.x_norm.apply(x)))
    return float(out[0]) if np.ndim(window) == 1 else out


def _output_jacobian(m: MlpModel, xn: np.ndarray):
    """Network output (normalized units) and d(output)/d(params), reverse mode."""
    out, tape = _forward_normalized(m, xn, keep=True)
    n = xn.shape[0]
    blocks = []
    delta = np.ones((n, 1))
    # tape[l] = (input to layer l, activation derivative at layer l's output)
    for l in range(len(m.weights) - 1, -1, -1):
        a_in = tape[l][0]
        blocks.append((np.einsum("ni,nj->nij", a_in, delta).reshape(n, -1), delta))
        if l > 0:
            delta = (delta @ m.weights[l].T) * tape[l - 1][1]
    J = np.concatenate([np.concatenate(pair, axis=1) for pair in reversed(blocks)], axis=1)
    return out, J


def jacobian(m: MlpModel, rows, targets=None) -> np.ndarray:
    """d(target - forward(row)) / d(param) for each row, shape (n_rows, n_params).

    ``targets`` does not affect the derivative and is accepted for symmetry
    with the residual definition.
    """
    x = _as_batch(m, rows)
    _, J = _output_jacobian(m, m.x_norm.apply(x))
    return -m.y_norm.half_range[0] * J


@dataclass(frozen=True)
class LmConfig:
    mu0: float = 1e-3
    mu_increase: float = 10.0
    mu_decrease: float = 0.1
    mu_max: float = 1e10
    max_epochs: int = 300
    min_gradient: float = 1e-7
    patience: int = 6
    seed: int = 0
    normalize: bool = True

    def __post_init__(self):
        if not self.mu0 > 0:
            raise ParameterDomainError("mu0", self.mu0, "> 0")
        if not self.mu_max > self.mu0:
            raise ParameterDomainError("mu_max", self.mu_max, f"> mu0 ({self.mu0})")
        if not self.mu_increase > 1:
            raise ParameterDomainError("mu_increase", self.mu_increase, "> 1")
        if not 0 < self.mu_decrease < 1:
            raise ParameterDomainError("mu_decrease", self.mu_decrease, "in (0, 1)")
        if not isinstance(self.max_epochs, int) or self.max_epochs < 0:
            raise ParameterDomainError("max_epochs", self.max_epochs, "a non-negative integer")
        if not isinstance(self.patience, int) or self.patience < 1:
            raise ParameterDomainError("patience", self.patience, "an integer >= 1")
        if not self.min_gradient >= 0:
            raise ParameterDomainError("min_gradient", self.min_gradient, ">= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainingReport:
    stop_reason: str = ""
    epochs: list = field(default_factory=list)
    accepted_train_sse: list = field(default_factory=list)
    best_epoch: int = 0
    best_validation_sse: float = math.inf
    n_params: int = 0
    n_train: int = 0
    n_validation: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _canonical_order(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # lexicographic row order makes training independent of dataset row order
    keys = np.column_stack([x, y])[:, ::-1].T
    return np.lexsort(keys)


def _sse(r: np.ndarray) -> float:
    return float(r @ r)


def train_lm(m: MlpModel, d: WindowedDataset, cfg: LmConfig = LmConfig()) -> tuple[MlpModel, TrainingReport]:
    """Full-batch Levenberg-Marquardt on the training rows of ``d``.

    Returns the parameters with the lowest validation SSE seen (including the
    starting point) and a per-epoch report. SSE values are in normalized
    target units.
    """
    x_tr, y_tr = d.subset(TRAIN)
    x_va, y_va = d.subset(VALIDATION)
    if x_tr.shape[0] == 0:
        raise EmptyDatasetError("training split is empty")
    if x_va.shape[0] == 0:
        raise EmptyDatasetError("validation split is empty")
    _as_batch(m, x_tr)

    if cfg.normalize:
        m = replace(m, x_norm=Normalization.fit(x_tr), y_norm=Normalization.fit(y_tr))
    order = _canonical_order(x_tr, y_tr)
    xn_tr = m.x_norm.apply(x_tr[order])
    yn_tr = m.y_norm.apply(y_tr[order])
    order = _canonical_order(x_va, y_va)
    xn_va = m.x_norm.apply(x_va[order])
    yn_va = m.y_norm.apply(y_va[order])

    report = TrainingReport(n_params=m.n_params, n_train=x_tr.shape[0], n_validation=x_va.shape[0])
    theta = m.params
    out, J = _output_jacobian(m, xn_tr)
    r = yn_tr - out
    sse = _sse(r)
    val_sse = _sse(yn_va - _forward_normalized(m, xn_va))
    best_theta, best_val, best_epoch = theta, val_sse, 0
    report.accepted_train_sse.append(sse)
    report.epochs.append({"epoch": 0, "train_sse": sse, "validation_sse": val_sse, "mu": cfg.mu0, "rejections": 0})

    mu = cfg.mu0
    fails = 0
    stop = "max_epochs"
    eye = np.eye(m.n_params)
    for epoch in range(1, cfg.max_epochs + 1):
        # J above is d(out)/d(theta) = -d(r)/d(theta); the step is theta + (J'J + mu I)^-1 J' r
        g = J.T @ r
        if np.max(np.abs(g)) < cfg.min_gradient:
            stop = "min_gradient"
            break
        JtJ = J.T @ J
        rejections = 0
        while True:
            try:
                factor = linalg.cho_factor(JtJ + mu * eye, check_finite=False)
                step = linalg.cho_solve(factor, g, check_finite=False)
            except linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                cand = m.with_params(theta + step)
                out_c = _forward_normalized(cand, xn_tr)
                sse_c = _sse(yn_tr - out_c)
                if sse_c < sse:
                    break
            rejections += 1
            mu *= cfg.mu_increase
            if mu > cfg.mu_max:
                stop = "mu_max"
                break
        if stop == "mu_max":
            report.epochs.append({"epoch": epoch, "train_sse": sse, "validation_sse": val_sse, "mu": mu, "rejections": rejections})
            break
        mu *= cfg.mu_decrease
        m, theta, sse = cand, theta + step, sse_c
        out, J = _output_jacobian(m, xn_tr)
        r = yn_tr - out
        val_sse = _sse(yn_va - _forward_normalized(m, xn_va))
        report.accepted_train_sse.append(sse)
        report.epochs.append({"epoch": epoch, "train_sse": sse, "validation_sse": val_sse, "mu": mu, "rejections": rejections})
        if val_sse < best_val:
            best_theta, best_val, best_epoch = theta, val_sse, epoch
            fails = 0
        else:
            fails += 1
            if fails >= cfg.patience:
                stop = "validation"
                break

    report.stop_reason = stop
    report.best_epoch = best_epoch
    report.best_validation_sse = best_val
    return m.with_params(best_theta), report


def predict_series(m: MlpModel, v_o: Signal, cfg: WindowConfig = WindowConfig()) -> Signal:
    """Model output for every full window of ``v_o``, stamped at each window's last sample."""
    x = window_matrix(v_o.samples, cfg)
    y = forward(m, x)
    t0 = v_o.t0 + (cfg.tau - 1) / v_o.sample_rate
    return Signal(y, v_o.sample_rate / cfg.stride, "prediction", t0)
