from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import ConfigError, DataError, HybridError, NumericError
from . import handlers
from . import schemas as S

app = FastAPI(title="ipmc-hybrid", version=__version__)

STATUS = {ConfigError: 422, DataError: 400, NumericError: 500}


def error_kind(exc: HybridError) -> str:
    for cls, kind in ((ConfigError, "config"), (DataError, "data"), (NumericError, "numeric")):
        if isinstance(exc, cls):
            return kind
    return "error"


@app.exception_handler(HybridError)
async def hybrid_error(request: Request, exc: HybridError):
    status = next((code for cls, code in STATUS.items() if isinstance(exc, cls)), 500)
    body = S.ErrorBody(kind=error_kind(exc), message=str(exc))
    return JSONResponse(status_code=status, content=body.model_dump())


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/generate", response_model=S.GenerateResponse)
def generate(req: S.GenerateRequest):
    return handlers.generate(req)


@app.post("/simulate", response_model=S.SimulateResponse)
def simulate(req: S.SimulateRequest):
    return handlers.simulate(req)


@app.post("/evaluate", response_model=S.EvaluateResponse)
def evaluate(req: S.EvaluateRequest):
    return handlers.evaluate_signals(req)


@app.post("/estimate", response_model=S.EstimateResponse)
def estimate(req: S.EstimateRequest):
    return handlers.estimate(req)


@app.post("/train", response_model=S.TrainResponse)
def train(req: S.TrainRequest):
    return handlers.train(req)


@app.post("/predict", response_model=S.PredictResponse)
def predict(req: S.PredictRequest):
    return handlers.predict(req)


@app.post("/run", response_model=S.RunResponse)
def run(req: S.RunRequest):
    return handlers.run(req)
