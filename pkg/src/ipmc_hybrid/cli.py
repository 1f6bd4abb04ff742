"""Command-line client.

Every verb builds an API request. Without ``--server`` the request is
handled in-process; with ``--server URL`` it is posted to a running
``ipmc-hybrid serve`` instance. Files are always read and written locally.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, DataError, HybridError, NumericError
from .pipeline import ExperimentReport, report_render
from .plant import write_recording, ingest_recording
from .service import handlers
from .service import schemas as S
from .signals import read_signal_csv, write_signal_csv

log = logging.getLogger("ipmc_hybrid")

ERROR_KINDS = {"config": ConfigError, "data": DataError, "numeric": NumericError}


class Client:
    def __init__(self, server: str | None = None, timeout: float = 3600.0):
        self.server = server.rstrip("/") if server else None
        self.timeout = timeout

    def call(self, endpoint: str, request, response_type):
        if self.server is None:
            return getattr(handlers, _LOCAL[endpoint])(request)
        import httpx

        try:
            resp = httpx.post(f"{self.server}/{endpoint}", json=request.model_dump(mode="json"), timeout=self.timeout)
        except httpx.HTTPError as exc:
            raise DataError(f"cannot reach {self.server}: {exc}") from None
        if resp.status_code != 200:
            try:
                err = S.ErrorBody(**resp.json())
            except Exception:  # noqa: BLE001 - non-API error body (e.g. 422 validation detail)
                raise ConfigError(f"server returned {resp.status_code}: {resp.text[:500]}") from None
            raise ERROR_KINDS.get(err.kind, HybridError)(err.message)
        return response_type(**resp.json())


_LOCAL = {
    "generate": "generate",
    "simulate": "simulate",
    "evaluate": "evaluate_signals",
    "estimate": "estimate",
    "train": "train",
    "predict": "predict",
    "run": "run",
}


def load_json(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None


def _body(model_cls, data, what):
    from pydantic import ValidationError

    try:
        return model_cls(**data)
    except ValidationError as exc:
        raise ConfigError(f"invalid {what}: {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"invalid {what}: {exc}") from None


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=1) + "\n")


def cmd_generate(args, client: Client) -> None:
    cfg = load_json(args.config)
    specs = cfg.get("stimuli", [cfg] if cfg else [{"kind": k} for k in ("prbs", "sine", "chirp", "pulse")])
    plant = cfg.get("plant")
    if args.plant:
        plant = load_json(args.plant)
    out = _out_dir(args)
    for spec in specs:
        if args.seed is not None and spec.get("kind") == "prbs":
            spec = {**spec, "seed": args.seed}
        if args.stimulus and spec.get("name", spec.get("kind")) not in args.stimulus and spec.get("kind") not in args.stimulus:
            continue
        req = _body(S.GenerateRequest, {"stimulus": spec, "plant": plant}, "stimulus config")
        resp = client.call("generate", req, S.GenerateResponse)
        name = req.stimulus.name or req.stimulus.kind
        v_i = handlers.to_signal(resp.v_in)
        write_signal_csv(v_i, out / f"{name}.csv")
        if resp.displacement is not None:
            write_recording(out / f"{name}_recording.csv", v_i, handlers.to_signal(resp.displacement))
        print(f"wrote {out / (name + '.csv')}")


def cmd_simulate(args, client: Client) -> None:
    cfg = load_json(args.config)
    v_in = read_signal_csv(args.input)
    req = _body(S.SimulateRequest, {**cfg, "v_in": handlers.from_signal(v_in)}, "circuit config")
    resp = client.call("simulate", req, S.SimulateResponse)
    out = _out_dir(args)
    write_signal_csv(handlers.to_signal(resp.v_o), out / "v_o.csv")
    _dump(out / "cascade.json", {"N": len(resp.stages), "dc_gain": resp.dc_gain, "stages": resp.stages})
    print(f"wrote {out / 'v_o.csv'} (DC gain {resp.dc_gain:.6g})")


def cmd_estimate(args, client: Client) -> None:
    cfg = load_json(args.config)
    recording = args.recording or cfg.pop("recording", None)
    if recording is None:
        raise ConfigError("estimate needs --recording or a 'recording' entry in the config")
    cfg.pop("recording", None)
    v_i, w = ingest_recording(recording)
    if args.seed is not None:
        cfg["seed"] = args.seed
    req = _body(
        S.EstimateRequest,
        {**cfg, "v_in": handlers.from_signal(v_i), "displacement": handlers.from_signal(w)},
        "estimation config",
    )
    resp = client.call("estimate", req, S.EstimateResponse)
    out = _out_dir(args)
    _dump(out / "params.json", resp.params.model_dump())
    _dump(out / "estimation.json", resp.model_dump(exclude={"trace_csv"}))
    (out / "estimation_trace.csv").write_text(resp.trace_csv)
    print(f"objective {resp.objective:.4e}; xi_rho/xi_h = {resp.xi_rho_over_xi_h:.4g} ({resp.note})")


def cmd_train(args, client: Client) -> None:
    cfg = load_json(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    x = read_signal_csv(args.input)
    y = read_signal_csv(args.target)
    req = _body(S.TrainRequest, {**cfg, "input": handlers.from_signal(x), "target": handlers.from_signal(y)}, "training config")
    resp = client.call("train", req, S.TrainResponse)
    out = _out_dir(args)
    (out / "model.json").write_text(json.dumps(resp.model))
    _dump(out / "training.json", resp.training)
    _dump(out / "test_eval.json", resp.test.model_dump())
    print(f"stop: {resp.training['stop_reason']}; test NMSE {resp.test.nmse:.4e}, Fitting {resp.test.fitting_percent:.2f}%")


def cmd_predict(args, client: Client) -> None:
    model = load_json(args.model)
    cfg = load_json(args.config)
    x = read_signal_csv(args.input)
    req = _body(S.PredictRequest, {**cfg, "model": model, "input": handlers.from_signal(x)}, "prediction request")
    resp = client.call("predict", req, S.PredictResponse)
    out = _out_dir(args)
    write_signal_csv(handlers.to_signal(resp.prediction), out / "prediction.csv")
    print(f"wrote {out / 'prediction.csv'}")


def cmd_evaluate(args, client: Client) -> None:
    req = S.EvaluateRequest(
        target=handlers.from_signal(read_signal_csv(args.target)),
        prediction=handlers.from_signal(read_signal_csv(args.prediction)),
    )
    resp = client.call("evaluate", req, S.EvaluateResponse)
    text = json.dumps(resp.model_dump(), indent=1)
    if args.out_dir:
        (_out_dir(args) / "eval.json").write_text(text + "\n")
    print(text)


def cmd_run(args, client: Client) -> None:
    cfg = load_json(args.config)
    out = Path(args.out_dir or cfg.get("out_dir", "results"))
    cfg["out_dir"] = str(out)
    req = _body(S.RunRequest, {"config": cfg, "parallel": args.parallel, "stimulus": args.stimulus, "seed": args.seed}, "run request")
    resp = client.call("run", req, S.RunResponse)
    report = ExperimentReport.from_dict(resp.report)
    print(report_render(report, out), end="")
    failed = [r for r in report.results if not r.ok]
    if failed and len(failed) == len(report.results):
        raise ERROR_KINDS.get(_kind_of(failed[0].error_kind), HybridError)(failed[0].error)


def _kind_of(class_name: str | None) -> str:
    if class_name in ("ConfigError", "ParameterDomainError"):
        return "config"
    if class_name in ("NumericError", "EstimationError"):
        return "numeric"
    return "data"


def cmd_render(args, client: Client) -> None:
    report = ExperimentReport.from_dict(load_json(args.report))
    print(report_render(report, args.out_dir), end="")


def cmd_serve(args, client: Client) -> None:
    import uvicorn

    uvicorn.run("ipmc_hybrid.service.app:app", host=args.host, port=args.port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipmc-hybrid", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--server", help="base URL of a running service; default is in-process")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, config=True, out=True, seed=False):
        if config:
            p.add_argument("--config", help="JSON config file")
        if out:
            p.add_argument("--out-dir", default=".", help="output directory")
        if seed:
            p.add_argument("--seed", type=int, default=None)
        return p

    p = common(sub.add_parser("generate", help="write stimulus CSVs (and plant recordings with --plant)"), seed=True)
    p.add_argument("--plant", help="PlantSpec JSON; also writes <name>_recording.csv")
    p.add_argument("--stimulus", action="append", help="only this stimulus name/kind (repeatable)")
    p.set_defaults(func=cmd_generate)

    p = common(sub.add_parser("simulate", help="tip voltage of the RC cascade for an input CSV"))
    p.add_argument("--input", required=True, help="time_s,value CSV")
    p.set_defaults(func=cmd_simulate)

    p = common(sub.add_parser("estimate", help="fit unknown circuit parameters to a recording"), seed=True)
    p.add_argument("--recording", help="time_s,v_in,displacement CSV")
    p.set_defaults(func=cmd_estimate)

    p = common(sub.add_parser("train", help="train one windowed MLP"), seed=True)
    p.add_argument("--input", required=True, help="window source signal CSV")
    p.add_argument("--target", required=True, help="target signal CSV")
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("predict", help="run a trained model over a signal"))
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="NMSE and Fitting of a prediction CSV")
    p.add_argument("--target", required=True)
    p.add_argument("--prediction", required=True)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = common(sub.add_parser("run", help="full Hybrid-vs-Normal experiment"), seed=True)
    p.set_defaults(out_dir=None)
    p.add_argument("--parallel", type=int, default=1, help="worker processes, one stimulus each")
    p.add_argument("--stimulus", action="append", help="only this stimulus name/kind (repeatable)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("render", help="re-render tables and CSVs from report.json")
    p.add_argument("--report", required=True)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args, Client(args.server))
    except HybridError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
