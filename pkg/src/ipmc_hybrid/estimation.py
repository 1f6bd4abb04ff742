"""Fit the unmeasured circuit parameters to a stimulus/displacement recording.

The tip voltage cannot be measured, so the only supervision is the
displacement. Candidates are scored by how well an affine map of the
simulated tip voltage reproduces the displacement (NMSE after the best
least-squares gain and offset).
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .circuit import DEFAULT_OVERSAMPLE, PhysicalParams, build_cascade, simulate_cascade
from .errors import DataError, EstimationError, HybridError, ParameterDomainError
from .metrics import nmse
from .signals import Signal

log = logging.getLogger(__name__)

FREE_PARAMS = ("xi_rho", "xi_h", "C_clamp", "alpha_E", "alpha_I", "alpha_C")

DEFAULT_BOUNDS = {
    "xi_rho": (1.0, 1e4),
    "xi_h": (1.0, 1e3),
    "C_clamp": (1e-5, 1.0),
    "alpha_E": (0.05, 1.0),
    "alpha_I": (0.05, 1.0),
    "alpha_C": (0.05, 1.0),
}

MAX_ITER = 500
SIMPLEX_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class EstimationProblem:
    v_i: Signal
    w: Signal
    N: int = 45
    fixed: PhysicalParams = field(default_factory=PhysicalParams)
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    objective: str = "affine_nmse"
    oversample: int = DEFAULT_OVERSAMPLE

    def __post_init__(self):
        if len(self.v_i) != len(self.w) or self.v_i.sample_rate != self.w.sample_rate:
            raise DataError("v_i and w must share length and sample rate")
        if self.objective != "affine_nmse":
            raise ParameterDomainError("objective", self.objective, "'affine_nmse'")
        for name in self.free:
            lo, hi = self.bounds[name]
            if not (0 < lo < hi and math.isfinite(hi)):
                raise ParameterDomainError(f"bounds.{name}", (lo, hi), "finite with 0 < lower < upper")
            if name.startswith("alpha") and hi > 1:
                raise ParameterDomainError(f"bounds.{name}", (lo, hi), "within (0, 1]")
        unknown = set(self.bounds) - set(FREE_PARAMS)
        if unknown:
            raise ParameterDomainError("bounds", sorted(unknown), f"keys among {FREE_PARAMS}")

    @property
    def free(self) -> tuple[str, ...]:
        return tuple(name for name in FREE_PARAMS if name in self.bounds)

    @property
    def log_bounds(self) -> np.ndarray:
        return np.log(np.array([self.bounds[name] for name in self.free], dtype=float))

    def params_from_log(self, z) -> PhysicalParams:
        lb = self.log_bounds
        z = np.clip(np.asarray(z, dtype=float), lb[:, 0], lb[:, 1])
        values = {name: float(math.exp(v)) for name, v in zip(self.free, z)}
        # exp(log(1.0)) can round above 1
        for name in values:
            if name.startswith("alpha"):
                values[name] = min(values[name], self.bounds[name][1])
            values[name] = min(max(values[name], self.bounds[name][0]), self.bounds[name][1])
        return self.fixed.replace(**values)

    def log_of(self, p: PhysicalParams) -> np.ndarray:
        return np.log([getattr(p, name) for name in self.free])


def affine_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares (a, b) minimising ||a x + b - y||."""
    xc = x - x.mean()
    denom = float(xc @ xc)
    a = float(xc @ (y - y.mean()) / denom) if denom > 0 else 0.0
    return a, float(y.mean() - a * x.mean())


def objective_affine_nmse(params: PhysicalParams, problem: EstimationProblem) -> float:
    v_o = simulate_cascade(build_cascade(params, problem.N), problem.v_i, problem.oversample).samples
    a, b = affine_fit(v_o, problem.w.samples)
    return nmse(problem.w.samples, a * v_o + b)


@dataclass
class RestartTrace:
    start: list
    start_objective: float
    objective: list = field(default_factory=list)
    best: list = None
    best_objective: float = math.inf
    iterations: int = 0
    converged: bool = False
    error: str = ""


@dataclass
class EstimationResult:
    params: PhysicalParams
    objective: float
    traces: list
    restart: int

    @property
    def resistivity_thickness_ratio(self) -> float:
        """xi_rho / xi_h, the only combination the electrical response constrains."""
        return self.params.xi_rho / self.params.xi_h

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "objective": self.objective,
            "best_restart": self.restart,
            "xi_rho_over_xi_h": self.resistivity_thickness_ratio,
            "note": "xi_rho and xi_h enter only through their ratio and are not separately identifiable",
            "restarts": [
                {
                    "start": t.start,
                    "start_objective": t.start_objective,
                    "best": t.best,
                    "best_objective": t.best_objective,
                    "iterations": t.iterations,
                    "converged": t.converged,
                    "error": t.error,
                }
                for t in self.traces
            ],
        }

    def trace_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["restart", "iteration", "objective"])
        for i, t in enumerate(self.traces):
            for k, f in enumerate(t.objective):
                writer.writerow([i, k, repr(float(f))])
        return buf.getvalue()


def _safe_objective(problem, z):
    try:
        f = objective_affine_nmse(problem.params_from_log(z), problem)
    except HybridError:
        return math.inf
    return f if math.isfinite(f) else math.inf


def start_points(problem: EstimationProblem, restarts: int, seed) -> np.ndarray:
    lb = problem.log_bounds
    unit = qmc.LatinHypercube(d=len(problem.free), seed=np.random.default_rng(seed)).random(restarts)
    return qmc.scale(unit, lb[:, 0], lb[:, 1])


def estimate_params(problem: EstimationProblem, restarts: int = 8, seed=0, starts=None) -> EstimationResult:
    """Multi-start bounded Nelder-Mead in log-parameter space.

    ``starts`` optionally overrides the Latin-hypercube start points (each a
    PhysicalParams). The best restart wins; ties go to the lowest index.
    """
    if starts is not None:
        z0s = np.array([problem.log_of(p) for p in starts])
    else:
        if restarts < 1:
            raise ParameterDomainError("restarts", restarts, ">= 1")
        z0s = start_points(problem, restarts, seed)
    lb = problem.log_bounds
    traces = []
    for i, z0 in enumerate(z0s):
        f0 = _safe_objective(problem, z0)
        trace = RestartTrace(start=problem.params_from_log(z0).to_dict(), start_objective=f0)
        history = []

        def callback(intermediate_result):
            history.append(float(intermediate_result.fun))

        try:
            # an all-inf simplex makes scipy's fatol test compute inf - inf
            with np.errstate(invalid="ignore"):
                res = optimize.minimize(
                    partial(_safe_objective, problem),
                    z0,
                    method="Nelder-Mead",
                    bounds=list(map(tuple, lb)),
                    callback=callback,
                    options={"maxiter": MAX_ITER, "xatol": SIMPLEX_TOL, "fatol": math.inf, "adaptive": False},
                )
        except Exception as exc:  # noqa: BLE001 - one bad restart must not sink the others
            trace.error = f"{type(exc).__name__}: {exc}"
            traces.append(trace)
            log.warning("restart %d failed: %s", i, trace.error)
            continue
        z_best, f_best = res.x, float(res.fun)
        if not f_best <= f0:
            z_best, f_best = z0, f0
        trace.objective = history
        trace.best = problem.params_from_log(z_best).to_dict()
        trace.best_objective = f_best
        trace.iterations = int(res.nit)
        trace.converged = res.status == 0
        traces.append(trace)
        log.info("restart %d: objective %.4g -> %.4g in %d iterations", i, f0, f_best, res.nit)

    finite = [i for i, t in enumerate(traces) if math.isfinite(t.best_objective)]
    if not finite:
        raise EstimationError("every restart failed to evaluate the objective")
    best = min(finite, key=lambda i: (traces[i].best_objective, i))
    params = PhysicalParams.from_dict(traces[best].best)
    log.info("xi_rho and xi_h are identifiable only through their ratio (%.4g)", params.xi_rho / params.xi_h)
    return EstimationResult(params, traces[best].best_objective, traces, best)
