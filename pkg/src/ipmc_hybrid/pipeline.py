"""End-to-end Hybrid-vs-Normal experiment and its report files.

For every stimulus the same displacement target is predicted twice with an
identical network, budget, window and split: once from windows of the
simulated tip voltage (Hybrid) and once from windows of the raw stimulus
(Normal). Scores are computed on the test rows.
"""

from __future__ import annotations

import io
import json
import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .circuit import DEFAULT_OVERSAMPLE, PhysicalParams, build_cascade, simulate_cascade
from .errors import ConfigError, DataError, HybridError
from .estimation import DEFAULT_BOUNDS, EstimationProblem, estimate_params
from .metrics import EvalReport, evaluate
from .neural_net import LmConfig, MlpModel, forward, init_model, default_layer_sizes, train_lm
from .plant import PlantSpec, ingest_recording, plant_response
from .signal_lab import (
    SPLIT_NAMES,
    TEST,
    StimulusSpec,
    WindowConfig,
    WindowedDataset,
    default_stimuli,
    frame_windows,
    generate_stimulus,
    split_assignment,
)
from .signals import Signal, format_float

log = logging.getLogger(__name__)

PATHS = ("hybrid", "normal")
SEED_NAMES = ("stimulus", "plant_noise", "split", "init", "estimate")


def sub_seed(global_seed: int, name: str, index: int = 0) -> int:
    """Stable 32-bit seed for a named random stream."""
    ss = np.random.SeedSequence([int(global_seed), zlib.crc32(name.encode()), int(index)])
    return int(ss.generate_state(1)[0])


@dataclass(frozen=True)
class CircuitConfig:
    params: PhysicalParams = field(default_factory=PhysicalParams)
    N: int = 45
    estimate: bool = False
    restarts: int = 8
    oversample: int = DEFAULT_OVERSAMPLE

    def to_dict(self) -> dict:
        return {**asdict(self), "params": self.params.to_dict()}


@dataclass(frozen=True)
class NetConfig:
    """``layer_sizes`` of None means tau inputs, 11 hidden layers of 10, one output."""

    layer_sizes: tuple | None = None
    activation: str = "tanh"
    lm: LmConfig = field(default_factory=LmConfig)

    def sizes(self, tau: int) -> list[int]:
        if self.layer_sizes is None:
            return default_layer_sizes(tau)
        sizes = list(self.layer_sizes)
        if sizes[0] != tau:
            raise ConfigError(f"net input size {sizes[0]} does not match window tau={tau}")
        return sizes

    def to_dict(self) -> dict:
        return {
            "layer_sizes": None if self.layer_sizes is None else list(self.layer_sizes),
            "activation": self.activation,
            "lm": self.lm.to_dict(),
        }


@dataclass(frozen=True)
class ExperimentConfig:
    stimuli: tuple = field(default_factory=lambda: tuple(default_stimuli()))
    plant: PlantSpec | None = field(default_factory=PlantSpec)
    recordings: dict | None = None
    circuit: CircuitConfig = field(default_factory=CircuitConfig)
    window: WindowConfig = field(default_factory=WindowConfig)
    net: NetConfig = field(default_factory=NetConfig)
    split_ratios: tuple = (0.3, 0.5, 0.2)
    out_dir: str = "results"
    seed: int = 0
    pooled: bool = False

    def __post_init__(self):
        object.__setattr__(self, "stimuli", tuple(self.stimuli))
        if not self.stimuli:
            raise ConfigError("at least one stimulus is required")
        names = [s.label for s in self.stimuli]
        if len(set(names)) != len(names):
            raise ConfigError(f"stimulus names must be unique, got {names}")
        if (self.plant is None) == (self.recordings is None):
            raise ConfigError("exactly one data source is required: plant or recordings")
        if self.recordings is not None:
            missing = [n for n in names if n not in self.recordings]
            if missing:
                raise ConfigError(f"no recording path for stimuli {missing}")

    def to_dict(self) -> dict:
        return {
            "stimuli": [s.to_dict() for s in self.stimuli],
            "plant": None if self.plant is None else self.plant.to_dict(),
            "recordings": self.recordings,
            "circuit": self.circuit.to_dict(),
            "window": asdict(self.window),
            "net": self.net.to_dict(),
            "split_ratios": list(self.split_ratios),
            "out_dir": self.out_dir,
            "seed": self.seed,
            "pooled": self.pooled,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        allowed = {f.name for f in fields(cls)}
        extra = set(d) - allowed
        if extra:
            raise ConfigError(f"unknown experiment config keys: {sorted(extra)}")
        try:
            if "stimuli" in d:
                d["stimuli"] = tuple(StimulusSpec.from_dict(s) for s in d["stimuli"])
            if "plant" in d and d["plant"] is not None:
                d["plant"] = PlantSpec.from_dict(d["plant"])
            if d.get("recordings") is not None:
                d.setdefault("plant", None)
            if "circuit" in d:
                c = dict(d["circuit"])
                if "params" in c:
                    c["params"] = PhysicalParams.from_dict(c["params"])
                d["circuit"] = CircuitConfig(**c)
            if "window" in d:
                d["window"] = WindowConfig(**d["window"])
            if "net" in d:
                n = dict(d["net"])
                if "lm" in n:
                    n["lm"] = LmConfig(**n["lm"])
                if n.get("layer_sizes") is not None:
                    n["layer_sizes"] = tuple(n["layer_sizes"])
                d["net"] = NetConfig(**n)
            if "split_ratios" in d:
                d["split_ratios"] = tuple(d["split_ratios"])
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


@dataclass
class PathResult:
    metrics: EvalReport
    prediction: np.ndarray
    model: dict
    training: dict


@dataclass
class StimulusResult:
    name: str
    kind: str
    sample_rate: float
    tau: int
    time: np.ndarray = None
    v_in: np.ndarray = None
    v_o: np.ndarray = None
    target: np.ndarray = None
    split: np.ndarray = None
    paths: dict = field(default_factory=dict)
    circuit: dict = None
    estimation: dict = None
    audit: dict = None
    error: str | None = None
    error_kind: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "kind": self.kind,
            "sample_rate": self.sample_rate,
            "tau": self.tau,
            "error": self.error,
            "error_kind": self.error_kind,
        }
        if not self.ok:
            return out
        out.update(
            {
                "series": {
                    "time_s": self.time.tolist(),
                    "v_in": self.v_in.tolist(),
                    "v_o": self.v_o.tolist(),
                    "target": self.target.tolist(),
                    "split": self.split.tolist(),
                },
                "circuit": self.circuit,
                "estimation": self.estimation,
                "audit": self.audit,
                "paths": {
                    name: {
                        "metrics": p.metrics.to_dict(),
                        # NaN where no full window ends
                        "prediction": [None if math.isnan(v) else v for v in p.prediction.tolist()],
                        "model": p.model,
                        "training": p.training,
                    }
                    for name, p in self.paths.items()
                },
            }
        )
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "StimulusResult":
        r = cls(d["name"], d["kind"], d["sample_rate"], d["tau"], error=d.get("error"), error_kind=d.get("error_kind"))
        if r.ok:
            s = d["series"]
            r.time = np.array(s["time_s"], dtype=float)
            r.v_in = np.array(s["v_in"], dtype=float)
            r.v_o = np.array(s["v_o"], dtype=float)
            r.target = np.array(s["target"], dtype=float)
            r.split = np.array(s["split"], dtype=np.int8)
            r.circuit = d.get("circuit")
            r.estimation = d.get("estimation")
            r.audit = d.get("audit")
            for name, p in d["paths"].items():
                r.paths[name] = PathResult(
                    metrics=EvalReport(**p["metrics"]),
                    prediction=np.array([math.nan if v is None else v for v in p["prediction"]], dtype=float),
                    model=p["model"],
                    training=p["training"],
                )
        return r


@dataclass
class ExperimentReport:
    config: dict
    seeds: dict
    results: list

    def ok_results(self) -> list:
        return [r for r in self.results if r.ok]

    def average(self, path: str, metric: str) -> float:
        vals = [getattr(r.paths[path].metrics, metric) for r in self.ok_results()]
        return float(np.mean(vals)) if vals else math.nan

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seeds": self.seeds,
            "results": [r.to_dict() for r in self.results],
            "average": {
                path: {
                    "nmse": self.average(path, "nmse"),
                    "fitting_percent": self.average(path, "fitting_percent"),
                }
                for path in PATHS
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        return cls(d["config"], d["seeds"], [StimulusResult.from_dict(r) for r in d["results"]])


def audit_non_autoregressive(d: WindowedDataset, source: Signal, target: Signal, cfg: WindowConfig) -> dict:
    """Check that every input window is a slice of ``source`` and holds no target data.

    Raises DataError on violation; returns a summary on success.
    """
    if source is target or source.label == target.label or np.array_equal(source.samples, target.samples):
        raise DataError(f"window source {source.label!r} is the target signal")
    expected = frame_windows(source, target, cfg)
    if not np.array_equal(expected.inputs, d.inputs):
        raise DataError(f"input windows are not slices of {source.label!r}")
    # value scan: no window may contain the target's own samples at the window's time indices
    tau = cfg.tau
    starts = d.end_index - tau + 1
    idx = starts[:, None] + np.arange(tau)
    hits = np.sum(np.all(d.inputs[:, -min(3, tau) :] == target.samples[idx][:, -min(3, tau) :], axis=1))
    if hits:
        raise DataError(f"{hits} input windows end with the target's own samples")
    return {"source": source.label, "target": target.label, "rows": int(d.n_rows), "passed": True}


def _stimulus_seed(spec: StimulusSpec, global_seed: int, index: int) -> StimulusSpec:
    if spec.kind != "prbs" or spec.seed is not None:
        return spec
    mask = (1 << spec.lfsr_order) - 1
    return replace(spec, seed=(sub_seed(global_seed, "stimulus", index) % mask) + 1)


def _load_data(cfg: ExperimentConfig, spec: StimulusSpec, index: int) -> tuple[Signal, Signal]:
    if cfg.plant is not None:
        v_i = generate_stimulus(_stimulus_seed(spec, cfg.seed, index))
        w = plant_response(cfg.plant, v_i, noise_seed=sub_seed(cfg.seed, "plant_noise", index))
        return v_i.with_samples(v_i.samples, "v_in"), w
    v_i, w = ingest_recording(cfg.recordings[spec.label])
    return v_i, w


def _circuit_for(cfg: ExperimentConfig, v_i: Signal, w: Signal, index: int):
    if not cfg.circuit.estimate:
        return cfg.circuit.params, None
    problem = EstimationProblem(v_i, w, N=cfg.circuit.N, fixed=cfg.circuit.params, bounds=dict(DEFAULT_BOUNDS), oversample=cfg.circuit.oversample)
    result = estimate_params(problem, restarts=cfg.circuit.restarts, seed=sub_seed(cfg.seed, "estimate", index))
    return result.params, result.to_dict()


def _prepare(cfg: ExperimentConfig, index: int):
    """Signals, datasets and shared split for one stimulus."""
    spec = cfg.stimuli[index]
    v_i, w = _load_data(cfg, spec, index)
    params, est = _circuit_for(cfg, v_i, w, index)
    v_o = simulate_cascade(build_cascade(params, cfg.circuit.N), v_i, cfg.circuit.oversample)
    datasets = {"hybrid": frame_windows(v_o, w, cfg.window), "normal": frame_windows(v_i, w, cfg.window)}
    split = split_assignment(datasets["hybrid"].n_rows, cfg.split_ratios, sub_seed(cfg.seed, "split", index))
    datasets = {k: d.with_split(split) for k, d in datasets.items()}
    audit = {
        "hybrid": audit_non_autoregressive(datasets["hybrid"], v_o, w, cfg.window),
        "normal": audit_non_autoregressive(datasets["normal"], v_i, w, cfg.window),
    }
    result = StimulusResult(spec.label, spec.kind, v_i.sample_rate, cfg.window.tau)
    result.time, result.v_in, result.v_o, result.target = v_i.times, v_i.samples, v_o.samples, w.samples
    result.split = np.full(len(v_i), -1, dtype=np.int8)
    result.split[datasets["hybrid"].end_index] = split
    result.circuit = {"params": params.to_dict(), "N": cfg.circuit.N, "oversample": cfg.circuit.oversample}
    result.estimation = est
    result.audit = audit
    return result, datasets


def _finish_path(result: StimulusResult, d: WindowedDataset, model: MlpModel, training) -> PathResult:
    pred_rows = forward(model, d.inputs)
    prediction = np.full(result.target.shape, math.nan)
    prediction[d.end_index] = pred_rows
    test = d.rows(TEST)
    metrics = evaluate(d.targets[test], pred_rows[test])
    return PathResult(metrics, prediction, model.to_dict(), training.to_dict())


def _init_seed(cfg: ExperimentConfig, index: int) -> int:
    return sub_seed(cfg.seed, "init", index) ^ int(cfg.net.lm.seed)


def run_stimulus(cfg: ExperimentConfig, index: int) -> StimulusResult:
    spec = cfg.stimuli[index]
    try:
        result, datasets = _prepare(cfg, index)
        sizes = cfg.net.sizes(cfg.window.tau)
        for path in PATHS:
            model0 = init_model(sizes, cfg.net.activation, _init_seed(cfg, index))
            model, training = train_lm(model0, datasets[path], cfg.net.lm)
            result.paths[path] = _finish_path(result, datasets[path], model, training)
            log.info("%s/%s: NMSE %.4e, Fitting %.2f%%", spec.label, path, result.paths[path].metrics.nmse, result.paths[path].metrics.fitting_percent)
        return result
    except HybridError as exc:
        log.error("stimulus %s failed: %s", spec.label, exc)
        return StimulusResult(spec.label, spec.kind, spec.sample_rate, cfg.window.tau, error=str(exc), error_kind=type(exc).__name__)


def _run_pooled(cfg: ExperimentConfig) -> list:
    """One model per path trained on every stimulus' training rows."""
    prepared = []
    results = []
    for i, spec in enumerate(cfg.stimuli):
        try:
            prepared.append((i,) + _prepare(cfg, i))
        except HybridError as exc:
            results.append((i, StimulusResult(spec.label, spec.kind, spec.sample_rate, cfg.window.tau, error=str(exc), error_kind=type(exc).__name__)))
    if prepared:
        sizes = cfg.net.sizes(cfg.window.tau)
        for path in PATHS:
            parts = [p[2][path] for p in prepared]
            pooled = WindowedDataset(
                np.vstack([d.inputs for d in parts]),
                np.concatenate([d.targets for d in parts]),
                np.concatenate([d.end_index for d in parts]),
                parts[0].sample_rate,
                np.concatenate([d.split for d in parts]),
            )
            model0 = init_model(sizes, cfg.net.activation, _init_seed(cfg, 0))
            model, training = train_lm(model0, pooled, cfg.net.lm)
            for _, result, datasets in prepared:
                result.paths[path] = _finish_path(result, datasets[path], model, training)
        results.extend((i, r) for i, r, _ in prepared)
    return [r for _, r in sorted(results, key=lambda t: t[0])]


def _run_one(args):
    cfg, index = args
    return run_stimulus(cfg, index)


def seeds_used(cfg: ExperimentConfig) -> dict:
    return {
        "global": cfg.seed,
        "derivation": "SeedSequence([global, crc32(name), stimulus_index]).generate_state(1)[0]",
        "streams": {
            spec.label: {name: sub_seed(cfg.seed, name, i) for name in SEED_NAMES}
            for i, spec in enumerate(cfg.stimuli)
        },
    }


def run_experiment(cfg: ExperimentConfig, parallel: int = 1) -> ExperimentReport:
    if cfg.pooled:
        results = _run_pooled(cfg)
    elif parallel > 1 and len(cfg.stimuli) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_run_one, [(cfg, i) for i in range(len(cfg.stimuli))]))
    else:
        results = [run_stimulus(cfg, i) for i in range(len(cfg.stimuli))]
    return ExperimentReport(cfg.to_dict(), seeds_used(cfg), results)


# --- rendering -------------------------------------------------------------

SUMMARY_COLUMNS = ("stimulus", "nmse_hybrid", "nmse_normal", "fitting_hybrid", "fitting_normal")


def format_nmse(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.4e}"


def format_fitting(x: float) -> str:
    return "nan" if math.isnan(x) else f"%{x:.2f}"


def summary_rows(report: ExperimentReport) -> list[tuple]:
    rows = []
    for r in report.ok_results():
        h, n = r.paths["hybrid"].metrics, r.paths["normal"].metrics
        rows.append((r.name, h.nmse, n.nmse, h.fitting_percent, n.fitting_percent))
    if rows:
        rows.append(
            (
                "Average",
                report.average("hybrid", "nmse"),
                report.average("normal", "nmse"),
                report.average("hybrid", "fitting_percent"),
                report.average("normal", "fitting_percent"),
            )
        )
    return rows


def summary_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    buf.write(",".join(SUMMARY_COLUMNS) + "\n")
    for row in summary_rows(report):
        buf.write(row[0] + "," + ",".join(format_float(v) for v in row[1:]) + "\n")
    return buf.getvalue()


def summary_text(report: ExperimentReport) -> str:
    header = ("", "NMSE H", "NMSE N", "Fitting H", "Fitting N")
    body = [
        (name, format_nmse(nh), format_nmse(nn), format_fitting(fh), format_fitting(fn))
        for name, nh, nn, fh, fn in summary_rows(report)
    ]
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) if i == 0 else cell.rjust(widths[i]) for i, cell in enumerate(row)) for row in [header] + body]
    failed = [r for r in report.results if not r.ok]
    for r in failed:
        lines.append(f"FAILED {r.name}: {r.error}")
    return "\n".join(lines) + "\n"


def series_csv(r: StimulusResult) -> str:
    """time, target, hybrid, normal for samples that end a full window."""
    buf = io.StringIO()
    buf.write("time_s,target,hybrid,normal\n")
    h, n = r.paths["hybrid"].prediction, r.paths["normal"].prediction
    for i in np.flatnonzero(~np.isnan(h)):
        buf.write(f"{format_float(r.time[i])},{format_float(r.target[i])},{format_float(h[i])},{format_float(n[i])}\n")
    return buf.getvalue()


def full_series_csv(r: StimulusResult) -> str:
    buf = io.StringIO()
    buf.write("time_s,v_in,v_o,target,hybrid,normal,split\n")
    h, n = r.paths["hybrid"].prediction, r.paths["normal"].prediction
    for i in range(r.time.shape[0]):
        tag = SPLIT_NAMES[r.split[i]] if r.split[i] >= 0 else ""
        cells = [r.time[i], r.v_in[i], r.v_o[i], r.target[i]]
        pred = ["" if math.isnan(v) else format_float(v) for v in (h[i], n[i])]
        buf.write(",".join(format_float(c) for c in cells) + "," + ",".join(pred) + f",{tag}\n")
    return buf.getvalue()


def report_render(report: ExperimentReport, out_dir=None) -> str:
    """Table text; when ``out_dir`` is given also writes the CSV/JSON artefacts."""
    text = summary_text(report)
    if out_dir is None:
        return text
    out = Path(out_dir)
    (out / "models").mkdir(parents=True, exist_ok=True)
    (out / "training").mkdir(exist_ok=True)
    (out / "summary.txt").write_text(text)
    (out / "summary.csv").write_text(summary_csv(report))
    for r in report.ok_results():
        (out / f"{r.name}_target_hybrid_normal.csv").write_text(series_csv(r))
        (out / f"{r.name}_series.csv").write_text(full_series_csv(r))
        for path, p in r.paths.items():
            (out / "models" / f"{r.name}_{path}.json").write_text(json.dumps(p.model))
            (out / "training" / f"{r.name}_{path}.json").write_text(json.dumps(p.training, indent=1))
            (out / f"{r.name}_{path}_eval.json").write_text(json.dumps(p.metrics.to_dict(), indent=1))
    (out / "report.json").write_text(json.dumps(report.to_dict()))
    return text
