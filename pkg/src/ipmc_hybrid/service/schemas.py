"""Request/response bodies of the HTTP API."""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, Field

from ..circuit import PhysicalParams
from ..neural_net import LmConfig
from ..plant import PlantSpec
from ..signal_lab import StimulusSpec, WindowConfig


class SignalBody(BaseModel):
    samples: list[float]
    sample_rate: float = Field(gt=0)
    label: str = ""
    t0: float = 0.0


class PhysicalParamsBody(BaseModel):
    L: float = PhysicalParams.L
    W: float = PhysicalParams.W
    h_E: float = PhysicalParams.h_E
    rho_E: float = PhysicalParams.rho_E
    h_M: float = PhysicalParams.h_M
    sigma_M: float = PhysicalParams.sigma_M
    xi_rho: float = PhysicalParams.xi_rho
    xi_h: float = PhysicalParams.xi_h
    C_clamp: float = PhysicalParams.C_clamp
    alpha_E: float = PhysicalParams.alpha_E
    alpha_I: float = PhysicalParams.alpha_I
    alpha_C: float = PhysicalParams.alpha_C


class StimulusBody(BaseModel):
    kind: Literal["prbs", "sine", "chirp", "pulse"]
    amplitude: float = StimulusSpec.amplitude
    duration: float = StimulusSpec.duration
    sample_rate: float = StimulusSpec.sample_rate
    frequency: float = StimulusSpec.frequency
    f0: float = StimulusSpec.f0
    f1: float = StimulusSpec.f1
    period: float = StimulusSpec.period
    duty: float = StimulusSpec.duty
    bit_duration: float = StimulusSpec.bit_duration
    lfsr_order: int = StimulusSpec.lfsr_order
    seed: Optional[int] = StimulusSpec.seed
    name: str = StimulusSpec.name


class PlantBody(BaseModel):
    params: PhysicalParamsBody = Field(default_factory=PhysicalParamsBody)
    N: int = PlantSpec.N
    a1: float = PlantSpec.a1
    a3: float = PlantSpec.a3
    post_filter_pole: Optional[float] = PlantSpec.post_filter_pole
    noise_std: float = PlantSpec.noise_std
    seed: int = PlantSpec.seed
    oversample: int = PlantSpec.oversample


class WindowBody(BaseModel):
    tau: int = WindowConfig.tau
    stride: int = WindowConfig.stride


class LmBody(BaseModel):
    mu0: float = LmConfig.mu0
    mu_increase: float = LmConfig.mu_increase
    mu_decrease: float = LmConfig.mu_decrease
    mu_max: float = LmConfig.mu_max
    max_epochs: int = LmConfig.max_epochs
    min_gradient: float = LmConfig.min_gradient
    patience: int = LmConfig.patience
    seed: int = LmConfig.seed
    normalize: bool = LmConfig.normalize


class NetBody(BaseModel):
    layer_sizes: Optional[list[int]] = None
    activation: str = "tanh"
    lm: LmBody = Field(default_factory=LmBody)


class GenerateRequest(BaseModel):
    stimulus: StimulusBody
    plant: Optional[PlantBody] = None


class GenerateResponse(BaseModel):
    v_in: SignalBody
    displacement: Optional[SignalBody] = None


class SimulateRequest(BaseModel):
    params: PhysicalParamsBody = Field(default_factory=PhysicalParamsBody)
    N: int = 45
    oversample: int = 16
    v_in: SignalBody


class SimulateResponse(BaseModel):
    v_o: SignalBody
    dc_gain: float
    stages: list[dict[str, float]]


class EvaluateRequest(BaseModel):
    target: SignalBody
    prediction: SignalBody


class EvaluateResponse(BaseModel):
    nmse: float
    fitting_percent: float
    n_samples: int
    normalizer: float


class EstimateRequest(BaseModel):
    v_in: SignalBody
    displacement: SignalBody
    N: int = 45
    fixed: PhysicalParamsBody = Field(default_factory=PhysicalParamsBody)
    bounds: Optional[dict[str, tuple[float, float]]] = None
    restarts: int = 8
    seed: int = 0
    oversample: int = 16


class EstimateResponse(BaseModel):
    params: PhysicalParamsBody
    objective: float
    best_restart: int
    xi_rho_over_xi_h: float
    note: str
    restarts: list[dict[str, Any]]
    trace_csv: str


class TrainRequest(BaseModel):
    input: SignalBody
    target: SignalBody
    window: WindowBody = Field(default_factory=WindowBody)
    net: NetBody = Field(default_factory=NetBody)
    split_ratios: tuple[float, float, float] = (0.3, 0.5, 0.2)
    seed: int = 0


class TrainResponse(BaseModel):
    model: dict[str, Any]
    training: dict[str, Any]
    test: EvaluateResponse


class PredictRequest(BaseModel):
    model: dict[str, Any]
    input: SignalBody
    window: WindowBody = Field(default_factory=WindowBody)


class PredictResponse(BaseModel):
    prediction: SignalBody


class RunRequest(BaseModel):
    config: dict[str, Any] = Field(default_factory=dict)
    parallel: int = 1
    stimulus: Optional[list[str]] = None
    seed: Optional[int] = None


class RunResponse(BaseModel):
    report: dict[str, Any]
    summary: str


class ErrorBody(BaseModel):
    kind: str
    message: str
