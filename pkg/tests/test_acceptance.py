"""Acceptance criteria A1-A8, one test each.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary prints a
PASS/FAIL line per criterion with the measured values.
"""

import json
import math
import time

import numpy as np
import pytest

from ipmc_hybrid import cli
from ipmc_hybrid.circuit import CascadeModel, PhysicalParams, StageTF, build_cascade, dc_gain, simulate_cascade, stage_tf
from ipmc_hybrid.estimation import EstimationProblem, estimate_params, objective_affine_nmse
from ipmc_hybrid.metrics import fitting, nmse
from ipmc_hybrid.neural_net import LmConfig, forward, init_model, jacobian, train_lm
from ipmc_hybrid.pipeline import ExperimentReport
from ipmc_hybrid.signal_lab import TRAIN, VALIDATION, StimulusSpec, WindowConfig, WindowedDataset, frame_windows, generate_stimulus
from ipmc_hybrid.signals import Signal

FS = 30.0


def settle_samples(s: StageTF, oversample: int, tol=1e-6) -> int:
    """Outer samples needed for a unit step to settle within ``tol``.

    Covers both the continuous transient exp(-P t) and the decay of the
    discrete pole, which approaches +1 when P dt >> 1.
    """
    coef = abs(s.G * (s.Z - s.P) / s.P)
    if coef == 0:
        return 2
    t_cont = max(math.log(coef / tol), 0.0) / s.P
    half = 0.5 * s.P / (FS * oversample)
    pole = abs((1 - half) / (1 + half))
    n_disc = math.log(tol / coef) / math.log(pole) / oversample if 0 < pole < 1 else 0.0
    return int(math.ceil(max(t_cont * FS, n_disc))) + 2


def test_A1_circuit_dc_gain(note):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst_identity = worst_final = 0.0
    for _ in range(1000):
        RE = rng.uniform(0, 10)
        RI, RM = 10 ** rng.uniform(-1, 4, size=2)
        C = 10 ** rng.uniform(-6, -1)
        s = stage_tf(RE, RI, C, RM)
        worst_identity = max(worst_identity, abs(s.G * s.Z / s.P - RM / (RE + RM)) / (RM / (RE + RM)))
        m = CascadeModel((s,))
        y = simulate_cascade(m, Signal(np.ones(settle_samples(s, 16)), FS), 16)
        worst_final = max(worst_final, abs(y.samples[-1] - dc_gain(m)))
    elapsed = time.perf_counter() - start
    note(f"identity rel err {worst_identity:.1e}, final-value err {worst_final:.1e}, {elapsed:.2f} s")
    assert worst_identity < 1e-12
    assert worst_final < 1e-3
    assert elapsed < 10


def test_A2_discrete_vs_analytic(note):
    x = Signal(np.ones(300), FS)
    t = x.times
    exact = 0.5 * (2 - np.exp(-t))
    m = CascadeModel((StageTF(0.5, 2.0, 1.0),))
    errors = {os_: np.max(np.abs(simulate_cascade(m, x, os_).samples - exact)) for os_ in (8, 16, 32, 64)}
    ratios = [errors[a] / errors[2 * a] for a in (8, 16, 32)]
    note(f"err@16 {errors[16]:.2e}, doubling ratios " + ", ".join(f"{r:.2f}" for r in ratios))
    assert errors[16] < 1e-3
    assert all(r >= 3 for r in ratios)


def test_A3_jacobian(note):
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    m = init_model([5, 4, 3, 1], "tanh", seed=11)
    x = rng.normal(size=(5, 5))
    J = jacobian(m, x)
    theta, h = m.params, 1e-6
    J_fd = np.empty_like(J)
    for p in range(theta.size):
        e = np.zeros_like(theta)
        e[p] = h
        J_fd[:, p] = -(forward(m.with_params(theta + e), x) - forward(m.with_params(theta - e), x)) / (2 * h)
    rel = np.max(np.abs(J - J_fd) / np.maximum(np.abs(J_fd), 1e-8))
    elapsed = time.perf_counter() - start
    note(f"max elementwise rel err {rel:.1e}, {elapsed * 1e3:.0f} ms")
    assert rel < 1e-4
    assert elapsed < 1


def test_A4_lm_linear(note):
    steps, errs = [], []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x = rng.uniform(-3, 3, size=60)
        split = np.r_[np.full(50, TRAIN), np.full(10, VALIDATION)].astype(np.int8)
        d = WindowedDataset(x[:, None], 2 * x, np.arange(60), FS, split)
        m0 = init_model([1, 1], "linear", seed=seed)
        model, report = train_lm(m0, d, LmConfig(normalize=False, min_gradient=1e-12))
        sse = report.accepted_train_sse
        assert all(b < a for a, b in zip(sse, sse[1:])), f"seed {seed}: {sse}"
        w = model.weights[0][0, 0]
        errs.append(abs(w - 2))
        # steps until the weight is within tolerance
        k = next(i for i in range(len(sse)) if _weight_after(m0, d, i) < 1e-8)
        steps.append(k)
    note(f"max |w-2| {max(errs):.1e}, accepted steps needed <= {max(steps)}")
    assert max(errs) < 1e-8
    assert max(steps) <= 5


def _weight_after(m0, d, k):
    cfg = LmConfig(normalize=False, min_gradient=1e-12, max_epochs=k)
    model, _ = train_lm(m0, d, cfg)
    return abs(model.weights[0][0, 0] - 2)


def test_A6_metrics(note):
    assert abs(nmse([0, 2], [0, 1]) - 0.125) < 1e-12
    assert abs(fitting([0, 2], [2, 0]) - (-100.0)) < 1e-12
    assert abs(fitting([0, 2], [1, 1])) < 1e-12
    rng = np.random.default_rng(6)
    for _ in range(100):
        w = rng.normal(size=rng.integers(2, 500)) * 10 ** rng.uniform(-3, 3)
        assert nmse(w, w) == 0.0 and fitting(w, w) == 100.0
    note("hand examples exact; 100 random identities hold")


def test_A7_estimation(note):
    truth = PhysicalParams(xi_rho=300.0, xi_h=20.0, C_clamp=0.02, alpha_E=0.6, alpha_I=0.4, alpha_C=0.7)
    v_i = generate_stimulus(StimulusSpec("prbs", duration=60, seed=7))
    v_o = simulate_cascade(build_cascade(truth, 45), v_i).samples
    w = 1.7 * v_o + 0.3
    w = w + np.random.default_rng(1).normal(0.0, 0.01 * np.ptp(w), w.size)
    problem = EstimationProblem(v_i, v_i.with_samples(w), N=45)
    start = time.perf_counter()
    result = estimate_params(problem, restarts=8, seed=0)
    elapsed = time.perf_counter() - start
    at_truth = objective_affine_nmse(truth, problem)
    note(f"objective {result.objective:.3e} vs {at_truth:.3e} at truth (ratio {result.objective / at_truth:.3f}), {elapsed:.0f} s")
    assert result.objective <= 2 * at_truth
    assert elapsed < 120


@pytest.fixture(scope="module")
def default_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("default_run")
    start = time.perf_counter()
    assert cli.main(["run", "--out-dir", str(out / "first"), "--seed", "0"]) == 0
    elapsed = time.perf_counter() - start
    return out, elapsed


def test_A5_hybrid_beats_normal(default_run, note):
    out, elapsed = default_run
    report = ExperimentReport.from_dict(json.loads((out / "first" / "report.json").read_text()))
    assert len(report.results) == 4 and all(r.ok for r in report.results)
    nh, nn = report.average("hybrid", "nmse"), report.average("normal", "nmse")
    fh, fn = report.average("hybrid", "fitting_percent"), report.average("normal", "fitting_percent")
    note(f"NMSE H {nh:.3e} vs N {nn:.3e} (ratio {nh / nn:.4f}); Fitting H {fh:.2f} vs N {fn:.2f} (gap {fh - fn:.1f}); {elapsed:.0f} s")
    assert nh <= 0.1 * nn
    assert fh - fn >= 20
    assert elapsed < 600


def test_A8_determinism_and_audit(default_run, note):
    out, _ = default_run
    assert cli.main(["run", "--out-dir", str(out / "second"), "--seed", "0"]) == 0
    first = (out / "first" / "summary.csv").read_bytes()
    assert first == (out / "second" / "summary.csv").read_bytes()
    report = ExperimentReport.from_dict(json.loads((out / "first" / "report.json").read_text()))
    checked = 0
    for r in report.results:
        assert r.audit["hybrid"]["passed"] and r.audit["normal"]["passed"]
        target = Signal(r.target, r.sample_rate, "w")
        for source in (r.v_o, r.v_in):
            d = frame_windows(Signal(source, r.sample_rate), target, WindowConfig(r.tau))
            # independent scan: no window carries the target's samples over the same time span
            span = d.end_index[:, None] - r.tau + 1 + np.arange(r.tau)
            assert not np.any(np.all(np.isclose(d.inputs, r.target[span], rtol=0, atol=1e-12), axis=1))
            checked += d.n_rows
    note(f"summary.csv identical ({len(first)} bytes); {checked} windows scanned")
