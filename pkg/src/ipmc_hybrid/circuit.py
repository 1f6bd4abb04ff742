"""Distributed RC network of an IPMC strip and its time-domain response.

The strip is cut into ``N`` compartments from clamp (k=1) to tip (k=N).
Each compartment has a series electrode resistance ``RE_k``, a shunt
membrane resistance ``RM`` and a shunt interface branch ``RI_k`` + ``C_k``.
Its voltage transfer function is ``G (s + Z) / (s + P)``; the network is the
product of the N stages.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np
from scipy import signal as sps

from .errors import DataError, ParameterDomainError
from .signals import Signal

DEFAULT_OVERSAMPLE = 16


@dataclass(frozen=True)
class PhysicalParams:
    """Geometry and material constants, SI units throughout.

    Defaults are the platinum/Nafion 117 strip (22 mm x 5.5 mm). The six
    unknowns (``xi_rho``, ``xi_h``, ``C_clamp`` and the three attenuation
    coefficients) carry placeholder values meant to be replaced by
    :func:`ipmc_hybrid.estimation.estimate_params`. With these placeholders
    the 45-stage network has a step-response rise time of a few seconds,
    longer than a 60-sample window at 30 Hz.

    ``sigma_M`` is a conductivity; membrane resistivity is ``1 / sigma_M``.
    """

    L: float = 22e-3
    W: float = 5.5e-3
    h_E: float = 1e-6
    rho_E: float = 1.06e-7
    h_M: float = 183e-6
    sigma_M: float = 10.26
    xi_rho: float = 100.0
    xi_h: float = 10.0
    C_clamp: float = 5e-2
    alpha_E: float = 0.5
    alpha_I: float = 0.5
    alpha_C: float = 0.5

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ParameterDomainError(f.name, value, "a finite number")
            if value <= 0:
                raise ParameterDomainError(f.name, value, "> 0")
        for name in ("alpha_E", "alpha_I", "alpha_C"):
            if getattr(self, name) > 1:
                raise ParameterDomainError(name, getattr(self, name), "in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PhysicalParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterDomainError(sorted(unknown)[0], data[sorted(unknown)[0]], "a known parameter name")
        return cls(**{k: float(v) for k, v in data.items()})

    def replace(self, **changes) -> "PhysicalParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class ClampValues:
    RE_clamp: float
    RI_clamp: float
    RM: float
    C_clamp: float


@dataclass(frozen=True)
class StageTF:
    """One compartment, ``H(s) = G (s + Z) / (s + P)``."""

    G: float
    Z: float
    P: float

    @property
    def dc_gain(self) -> float:
        return self.G * self.Z / self.P


@dataclass(frozen=True)
class CascadeModel:
    stages: tuple[StageTF, ...]

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if not self.stages:
            raise ParameterDomainError("N", 0, ">= 1")

    @property
    def N(self) -> int:
        return len(self.stages)

    def to_dict(self) -> dict:
        return {"N": self.N, "stages": [asdict(s) for s in self.stages]}

    @classmethod
    def from_dict(cls, data: dict) -> "CascadeModel":
        stages = tuple(StageTF(float(s["G"]), float(s["Z"]), float(s["P"])) for s in data["stages"])
        if "N" in data and int(data["N"]) != len(stages):
            raise DataError(f"cascade declares N={data['N']} but lists {len(stages)} stages")
        return cls(stages)


def derive_clamp_values(p: PhysicalParams) -> ClampValues:
    """Clamp-region resistances and capacitance from geometry and materials."""
    re_clamp = p.rho_E * p.L / (p.W * p.h_E)
    rm = (1.0 / p.sigma_M) * p.L / (p.W * p.h_M)
    ri_clamp = (p.xi_rho * p.rho_E) * p.L / (p.W * p.xi_h * p.h_E)
    return ClampValues(RE_clamp=re_clamp, RI_clamp=ri_clamp, RM=rm, C_clamp=p.C_clamp)


def _check_alpha(name, a):
    if not (0 < a <= 1):
        raise ParameterDomainError(name, a, "in (0, 1]")


def compartment_params(c: ClampValues, alpha_E, alpha_I, alpha_C, k: int, N: int):
    """(RE_k, RI_k, C_k, RM) for compartment ``k`` of ``N``.

    Tip values are the clamp values divided by the attenuation coefficient,
    and each element grows linearly from clamp to tip; ``k = N`` is the tip.
    """
    if N < 1:
        raise ParameterDomainError("N", N, ">= 1")
    if not (1 <= k <= N):
        raise IndexError(f"compartment index k={k} outside 1..{N}")
    _check_alpha("alpha_E", alpha_E)
    _check_alpha("alpha_I", alpha_I)
    _check_alpha("alpha_C", alpha_C)
    frac = k / N

    def interp(clamp, alpha):
        tip = clamp / alpha
        return (tip - clamp) * frac + clamp

    return (
        interp(c.RE_clamp, alpha_E),
        interp(c.RI_clamp, alpha_I),
        interp(c.C_clamp, alpha_C),
        c.RM,
    )


def stage_tf(RE, RI, C, RM) -> StageTF:
    if RE < 0:
        raise ParameterDomainError("RE", RE, ">= 0")
    for name, value in (("RI", RI), ("C", C), ("RM", RM)):
        if not value > 0:
            raise ParameterDomainError(name, value, "> 0")
    G = 1.0 / (1.0 + RE / RM + RE / RI)
    Z = 1.0 / (RI * C)
    if RE == 0:
        P = Z
    else:
        P = 1.0 / (C * (RI + RE * RM / (RE + RM)))
    return StageTF(G, Z, P)


def build_cascade(p: PhysicalParams, N: int) -> CascadeModel:
    if not isinstance(N, (int, np.integer)) or N < 1:
        raise ParameterDomainError("N", N, "a positive integer")
    c = derive_clamp_values(p)
    stages = [
        stage_tf(*compartment_params(c, p.alpha_E, p.alpha_I, p.alpha_C, k, N))
        for k in range(1, N + 1)
    ]
    return CascadeModel(tuple(stages))


def stage_impulse_response(s: StageTF):
    """Partial-fraction impulse response ``G delta(t) + G (Z - P) exp(-P t)``.

    Returns ``(direct_gain, (coefficient, rate))``.
    """
    return s.G, (s.G * (s.Z - s.P), s.P)


def dc_gain(m: CascadeModel) -> float:
    return math.prod(s.G * s.Z / s.P for s in m.stages)


def stage_sos(s: StageTF, dt: float) -> np.ndarray:
    """Second-order-section row for one stage stepped at ``dt`` seconds.

    Realisation ``y = G u + G (Z - P) x`` with ``x' = -P x + u``; the state is
    integrated by the trapezoidal rule with ``u`` held constant over each
    step, which is exact for the zero-order-hold input and keeps the DC gain
    ``G Z / P`` exactly.
    """
    half = 0.5 * s.P * dt
    den = 1.0 + half
    a1 = -(1.0 - half) / den
    b1 = s.G * (a1 + (s.Z - s.P) * dt / den)
    return np.array([s.G, b1, 0.0, 1.0, a1, 0.0])


def cascade_sos(m: CascadeModel, dt: float) -> np.ndarray:
    return np.vstack([stage_sos(s, dt) for s in m.stages])


def simulate_cascade(m: CascadeModel, v_in: Signal, oversample: int = DEFAULT_OVERSAMPLE) -> Signal:
    """Tip voltage for input ``v_in``, starting from rest.

    The input is held (zero-order hold) over ``oversample`` sub-steps per
    sample, run through every stage in clamp-to-tip order, and read back at
    the original sample instants.
    """
    if not isinstance(oversample, (int, np.integer)) or oversample < 1:
        raise ParameterDomainError("oversample", oversample, "a positive integer")
    x = v_in.samples
    if x.size == 0:
        return v_in.with_samples(x, label="v_o")
    if np.any(np.isnan(x)):
        raise DataError("NaN in input signal")
    dt = 1.0 / (v_in.sample_rate * oversample)
    u = np.repeat(x, oversample)
    y = sps.sosfilt(cascade_sos(m, dt), u)
    return v_in.with_samples(y[::oversample], label="v_o")
