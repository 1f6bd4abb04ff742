import numpy as np
import pytest
from fastapi.testclient import TestClient

from ipmc_hybrid.service.app import app

client = TestClient(app)


def signal(values, rate=30.0, t0=0.0):
    return {"samples": list(map(float, values)), "sample_rate": rate, "t0": t0}


def test_health():
    assert client.get("/health").json()["status"] == "ok"


def test_generate_with_and_without_plant():
    r = client.post("/generate", json={"stimulus": {"kind": "sine", "duration": 2}})
    assert r.status_code == 200
    body = r.json()
    assert len(body["v_in"]["samples"]) == 60 and body["displacement"] is None
    r = client.post("/generate", json={"stimulus": {"kind": "pulse", "duration": 2}, "plant": {"N": 4}})
    assert len(r.json()["displacement"]["samples"]) == 60


def test_simulate_reports_dc_gain():
    r = client.post("/simulate", json={"N": 3, "v_in": signal(np.ones(30))})
    body = r.json()
    assert len(body["stages"]) == 3
    assert 0 < body["dc_gain"] <= 1


def test_evaluate_aligns_on_prediction_start():
    target = signal([0.0, 0.0, 0.0, 2.0])
    pred = signal([0.0, 1.0], t0=2 / 30)
    body = client.post("/evaluate", json={"target": target, "prediction": pred}).json()
    assert body["nmse"] == pytest.approx(0.125)
    r = client.post("/evaluate", json={"target": target, "prediction": signal([0.0] * 5)})
    assert r.status_code == 400 and r.json()["kind"] == "data"


def test_train_then_predict():
    x = np.sin(np.arange(300) / 10)
    req = {
        "input": signal(x),
        "target": signal(np.roll(x, 2) ** 2),
        "window": {"tau": 5},
        "net": {"layer_sizes": [5, 4, 1], "lm": {"max_epochs": 5}},
    }
    body = client.post("/train", json=req).json()
    assert body["training"]["n_params"] == 29
    pred = client.post("/predict", json={"model": body["model"], "input": signal(x), "window": {"tau": 5}}).json()
    assert len(pred["prediction"]["samples"]) == 296


def test_domain_errors_map_to_422():
    r = client.post("/simulate", json={"N": 3, "params": {"C_clamp": -1}, "v_in": signal([1, 2])})
    assert r.status_code == 422 and r.json()["kind"] == "config"
    assert "C_clamp" in r.json()["message"]


def test_run_small_experiment():
    cfg = {
        "stimuli": [{"kind": "sine", "duration": 20}],
        "plant": {"N": 4},
        "circuit": {"N": 4},
        "window": {"tau": 10},
        "net": {"layer_sizes": [10, 3, 1], "lm": {"max_epochs": 5}},
    }
    body = client.post("/run", json={"config": cfg, "seed": 2}).json()
    assert body["report"]["config"]["seed"] == 2
    assert body["summary"].splitlines()[-1].startswith("Average")
    r = client.post("/run", json={"config": cfg, "stimulus": ["chirp"]})
    assert r.status_code == 422
