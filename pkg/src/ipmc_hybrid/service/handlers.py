"""One function per endpoint: schema in, schema out.

The FastAPI routes and the CLI's local mode both call these, so the HTTP
API and the command line share a single code path.
"""

from __future__ import annotations

from dataclasses import asdict

import numpy as np

from .. import pipeline
from ..circuit import PhysicalParams, build_cascade, dc_gain, simulate_cascade
from ..errors import ConfigError, DataError
from ..estimation import DEFAULT_BOUNDS, EstimationProblem, estimate_params
from ..metrics import evaluate
from ..neural_net import LmConfig, MlpModel, forward, init_model, predict_series, train_lm
from ..plant import PlantSpec, plant_response
from ..signal_lab import TEST, StimulusSpec, WindowConfig, frame_windows, generate_stimulus, split_dataset
from ..signals import Signal
from . import schemas as S


def to_signal(body: S.SignalBody) -> Signal:
    return Signal(np.array(body.samples, dtype=float), body.sample_rate, body.label, body.t0)


def from_signal(sig: Signal) -> S.SignalBody:
    return S.SignalBody(samples=sig.samples.tolist(), sample_rate=sig.sample_rate, label=sig.label, t0=sig.t0)


def to_params(body: S.PhysicalParamsBody) -> PhysicalParams:
    return PhysicalParams(**body.model_dump())


def to_plant(body: S.PlantBody) -> PlantSpec:
    data = body.model_dump()
    data["params"] = PhysicalParams(**data["params"])
    return PlantSpec(**data)


def generate(req: S.GenerateRequest) -> S.GenerateResponse:
    v_i = generate_stimulus(StimulusSpec(**req.stimulus.model_dump()))
    w = plant_response(to_plant(req.plant), v_i) if req.plant is not None else None
    return S.GenerateResponse(v_in=from_signal(v_i), displacement=None if w is None else from_signal(w))


def simulate(req: S.SimulateRequest) -> S.SimulateResponse:
    cascade = build_cascade(to_params(req.params), req.N)
    v_o = simulate_cascade(cascade, to_signal(req.v_in), req.oversample)
    return S.SimulateResponse(
        v_o=from_signal(v_o),
        dc_gain=dc_gain(cascade),
        stages=[asdict(s) for s in cascade.stages],
    )


def _align(target: Signal, prediction: Signal) -> tuple[np.ndarray, np.ndarray]:
    """Restrict the target to the prediction's time span (predictions start at a window end)."""
    if target.sample_rate != prediction.sample_rate:
        raise DataError("target and prediction sample rates differ")
    offset = int(round((prediction.t0 - target.t0) * target.sample_rate))
    if offset < 0 or offset + len(prediction) > len(target):
        raise DataError("prediction does not lie within the target's time span")
    return target.samples[offset : offset + len(prediction)], prediction.samples


def evaluate_signals(req: S.EvaluateRequest) -> S.EvaluateResponse:
    w, w_hat = _align(to_signal(req.target), to_signal(req.prediction))
    return S.EvaluateResponse(**evaluate(w, w_hat).to_dict())


def estimate(req: S.EstimateRequest) -> S.EstimateResponse:
    problem = EstimationProblem(
        to_signal(req.v_in),
        to_signal(req.displacement),
        N=req.N,
        fixed=to_params(req.fixed),
        bounds=dict(DEFAULT_BOUNDS) if req.bounds is None else {k: tuple(v) for k, v in req.bounds.items()},
        oversample=req.oversample,
    )
    result = estimate_params(problem, restarts=req.restarts, seed=req.seed)
    return S.EstimateResponse(**result.to_dict(), trace_csv=result.trace_csv())


def train(req: S.TrainRequest) -> S.TrainResponse:
    window = WindowConfig(**req.window.model_dump())
    d = frame_windows(to_signal(req.input), to_signal(req.target), window)
    d = split_dataset(d, req.split_ratios, pipeline.sub_seed(req.seed, "split"))
    net = pipeline.NetConfig(
        layer_sizes=None if req.net.layer_sizes is None else tuple(req.net.layer_sizes),
        activation=req.net.activation,
        lm=LmConfig(**req.net.lm.model_dump()),
    )
    model0 = init_model(net.sizes(window.tau), net.activation, pipeline.sub_seed(req.seed, "init") ^ net.lm.seed)
    model, report = train_lm(model0, d, net.lm)
    test = d.rows(TEST)
    if test.size:
        scores = evaluate(d.targets[test], forward(model, d.inputs[test])).to_dict()
    else:
        scores = {"nmse": float("nan"), "fitting_percent": float("nan"), "n_samples": 0, "normalizer": float("nan")}
    return S.TrainResponse(model=model.to_dict(), training=report.to_dict(), test=S.EvaluateResponse(**scores))


def predict(req: S.PredictRequest) -> S.PredictResponse:
    model = MlpModel.from_dict(req.model)
    out = predict_series(model, to_signal(req.input), WindowConfig(**req.window.model_dump()))
    return S.PredictResponse(prediction=from_signal(out))


def experiment_config(config: dict, seed=None, stimulus=None) -> pipeline.ExperimentConfig:
    cfg = pipeline.ExperimentConfig.from_dict(config)
    if seed is not None:
        cfg = pipeline.replace(cfg, seed=int(seed))
    if stimulus:
        wanted = set(stimulus)
        chosen = tuple(s for s in cfg.stimuli if s.label in wanted or s.kind in wanted)
        if not chosen:
            raise ConfigError(f"no stimulus matches {sorted(wanted)}")
        cfg = pipeline.replace(cfg, stimuli=chosen)
    return cfg


def run(req: S.RunRequest) -> S.RunResponse:
    cfg = experiment_config(req.config, req.seed, req.stimulus)
    report = pipeline.run_experiment(cfg, parallel=req.parallel)
    return S.RunResponse(report=report.to_dict(), summary=pipeline.summary_text(report))
