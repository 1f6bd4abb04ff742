import json
import math

import numpy as np
import pytest

from ipmc_hybrid import pipeline
from ipmc_hybrid.circuit import PhysicalParams
from ipmc_hybrid.errors import ConfigError, DataError
from ipmc_hybrid.pipeline import (
    ExperimentConfig,
    ExperimentReport,
    audit_non_autoregressive,
    report_render,
    run_experiment,
    summary_csv,
    summary_text,
)
from ipmc_hybrid.plant import PlantSpec, write_recording
from ipmc_hybrid.signal_lab import WindowConfig, frame_windows, generate_stimulus, StimulusSpec
from ipmc_hybrid.signals import Signal

SMALL = {
    "stimuli": [{"kind": k, "duration": 30} for k in ("prbs", "sine", "chirp", "pulse")],
    "plant": {"N": 10},
    "circuit": {"N": 10},
    "window": {"tau": 20},
    "net": {"layer_sizes": [20, 6, 1], "lm": {"max_epochs": 30}},
}


def small(**overrides):
    return ExperimentConfig.from_dict({**SMALL, **overrides})


@pytest.fixture(scope="module")
def report():
    return run_experiment(small())


def test_structure(report, tmp_path):
    assert [r.name for r in report.results] == ["prbs", "sine", "chirp", "pulse"]
    assert all(r.ok for r in report.results)
    text = report_render(report, tmp_path)
    assert text.splitlines()[-1].startswith("Average")
    assert len(summary_csv(report).splitlines()) == 6
    assert len(list((tmp_path / "models").glob("*.json"))) == 8
    header = (tmp_path / "sine_target_hybrid_normal.csv").read_text().splitlines()[0]
    assert header == "time_s,target,hybrid,normal"
    rows = (tmp_path / "sine_target_hybrid_normal.csv").read_text().splitlines()[1:]
    assert len(rows) == 900 - 19 and all(len(r.split(",")) == 4 for r in rows)


def test_averages_are_means(report):
    for path in ("hybrid", "normal"):
        for metric in ("nmse", "fitting_percent"):
            vals = [getattr(r.paths[path].metrics, metric) for r in report.results]
            assert report.average(path, metric) == pytest.approx(sum(vals) / len(vals), rel=0, abs=1e-12)


def test_paths_are_paired(report):
    cfg = small()
    for i in range(len(cfg.stimuli)):
        result, datasets = pipeline._prepare(cfg, i)
        h, n = datasets["hybrid"], datasets["normal"]
        np.testing.assert_array_equal(h.split, n.split)
        np.testing.assert_array_equal(h.targets, n.targets)
        np.testing.assert_array_equal(h.end_index, n.end_index)
    for r in report.results:
        th, tn = r.paths["hybrid"].training, r.paths["normal"].training
        assert th["n_params"] == tn["n_params"] and th["n_train"] == tn["n_train"]
        assert r.audit["hybrid"]["passed"] and r.audit["normal"]["passed"]


def test_rerun_is_byte_identical(report):
    again = run_experiment(small())
    assert summary_csv(again) == summary_csv(report)
    assert json.dumps(again.to_dict()) == json.dumps(report.to_dict())


def test_parallel_matches_serial(report):
    assert summary_csv(run_experiment(small(), parallel=2)) == summary_csv(report)


def test_report_json_round_trip(report, tmp_path):
    report_render(report, tmp_path / "a")
    back = ExperimentReport.from_dict(json.loads((tmp_path / "a" / "report.json").read_text()))
    report_render(back, tmp_path / "b")
    for f in sorted((tmp_path / "a").rglob("*")):
        if f.is_file():
            assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes(), f.name


def test_formatting():
    assert pipeline.format_nmse(1.12249e-4) == "1.1225e-04"
    assert pipeline.format_fitting(97.7149) == "%97.71"


def test_empty_report_renders_headers(tmp_path):
    empty = ExperimentReport({}, {}, [])
    assert summary_csv(empty) == "stimulus,nmse_hybrid,nmse_normal,fitting_hybrid,fitting_normal\n"
    assert len(summary_text(empty).splitlines()) == 1
    report_render(empty, tmp_path)
    assert (tmp_path / "summary.csv").exists()


def test_wrong_cascade_hurts_hybrid(report):
    # a near-instant cascade turns the mediatory signal into a scaled copy of the input
    wrong = run_experiment(small(circuit={"N": 10, "params": {"C_clamp": 1e-5}}))
    assert wrong.average("hybrid", "nmse") > 5 * report.average("hybrid", "nmse")


def test_failed_stimulus_is_recorded(tmp_path):
    cfg = small(stimuli=[{"kind": "sine", "duration": 30}, {"kind": "pulse", "duration": 0.5}])
    rep = run_experiment(cfg)
    assert rep.results[0].ok and not rep.results[1].ok
    assert rep.results[1].error_kind == "EmptyDatasetError"
    assert "FAILED pulse" in summary_text(rep)
    assert len(summary_csv(rep).splitlines()) == 3


def test_recordings_source(tmp_path):
    spec = StimulusSpec("sine", duration=30)
    v = generate_stimulus(spec)
    from ipmc_hybrid.plant import plant_response

    w = plant_response(PlantSpec(N=10), v)
    write_recording(tmp_path / "sine.csv", v, w)
    cfg = small(stimuli=[spec.to_dict()], plant=None, recordings={"sine": str(tmp_path / "sine.csv")})
    rep = run_experiment(cfg)
    assert rep.results[0].ok
    np.testing.assert_array_equal(rep.results[0].target, w.samples)


def test_pooled_mode_shares_one_model():
    rep = run_experiment(small(pooled=True, stimuli=SMALL["stimuli"][:2]))
    a, b = rep.results
    assert a.paths["hybrid"].model == b.paths["hybrid"].model
    assert a.paths["normal"].model != a.paths["hybrid"].model


def test_estimation_inside_pipeline():
    cfg = small(stimuli=SMALL["stimuli"][:1], circuit={"N": 10, "estimate": True, "restarts": 1})
    rep = run_experiment(cfg)
    r = rep.results[0]
    assert r.ok and r.estimation is not None
    assert r.circuit["params"] == r.estimation["params"]


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        small(stimuli=[{"kind": "sine"}, {"kind": "sine"}])
    with pytest.raises(ConfigError):
        small(plant=None)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"net": {"layer_sizes": [5, 1]}}).net.sizes(60)
    assert ExperimentConfig.from_dict(small().to_dict()) == small()


def test_seeds_are_named_streams():
    seeds = pipeline.seeds_used(small())
    streams = seeds["streams"]["prbs"]
    assert set(streams) == set(pipeline.SEED_NAMES)
    assert len(set(streams.values())) == len(streams)
    assert pipeline.sub_seed(0, "split", 1) == pipeline.sub_seed(0, "split", 1) != pipeline.sub_seed(1, "split", 1)


def test_audit_rejects_target_leak():
    x = Signal(np.arange(50.0), 30.0, "v_in")
    w = Signal(np.sin(np.arange(50.0)), 30.0, "w")
    cfg = WindowConfig(5)
    assert audit_non_autoregressive(frame_windows(x, w, cfg), x, w, cfg)["passed"]
    with pytest.raises(DataError):
        audit_non_autoregressive(frame_windows(w, w, cfg), w, w, cfg)
    leaked = frame_windows(x, w, cfg)
    leaked.inputs[:, -1] = w.samples[leaked.end_index]
    with pytest.raises(DataError):
        audit_non_autoregressive(leaked, x, w, cfg)
