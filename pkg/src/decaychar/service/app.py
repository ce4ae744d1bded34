"""FastAPI service wrapping the toolkit pipelines.

The CLI talks to this app (in-process by default, over the network with
--server); the endpoints validate requests with the pydantic models and
delegate to the experiment runners.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__, analyze, experiments, system
from ..errors import ConfigError, DecayCharError
from . import schemas


def _resolve(req_system: str | None, inline: schemas.SystemModel | None):
    if inline is not None:
        return system.system_from_dict(inline.as_dict())
    if req_system is None:
        raise HTTPException(status_code=422, detail="need 'system' or 'system_inline'")
    try:
        return system.resolve_system(req_system)
    except FileNotFoundError as exc:
        raise HTTPException(status_code=404, detail=str(exc)) from exc


def create_app() -> FastAPI:
    app = FastAPI(title="decaychar", version=__version__,
                  description="Spectral decay-characterization toolkit for "
                              "partially dissipative hyperbolic systems")

    @app.exception_handler(DecayCharError)
    async def _domain_error(request, exc):  # pragma: no cover - exercised via TestClient
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=422,
                            content={"detail": f"{type(exc).__name__}: {exc}"})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.get("/systems")
    def list_systems() -> dict:
        return {"builtin": sorted(system.BUILTIN_SYSTEMS)}

    @app.get("/systems/{name}")
    def get_system(name: str) -> dict:
        try:
            sys = system.resolve_system(name)
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return system.system_to_dict(sys)

    @app.post("/systems/validate")
    def validate_system(req: schemas.SystemModel) -> dict:
        sys = system.system_from_dict(req.as_dict())
        out = system.system_to_dict(sys)
        out["kappa"] = sys.kappa
        return out

    @app.post("/check", response_model=schemas.CheckResponse)
    def check(req: schemas.CheckRequest):
        sys = _resolve(req.system, req.system_inline)
        rep = system.check_sk(sys, n_omega=req.n_omega)
        return schemas.CheckResponse(
            system=sys.name, report=schemas.SKReportModel(**rep.as_dict()),
            ellipticity_agrees=bool((rep.ellipticity_min > 0) == rep.passes))

    @app.post("/symbol", response_model=schemas.SymbolResponse)
    def symbol(req: schemas.SymbolRequest):
        sys = _resolve(req.system, req.system_inline)
        E = system.symbol(sys, np.asarray(req.xi))
        eigs = np.linalg.eigvals(E)
        return schemas.SymbolResponse(
            xi=req.xi, real=E.real.tolist(), imag=E.imag.tolist(),
            eigenvalues_real=eigs.real.tolist(), eigenvalues_imag=eigs.imag.tolist())

    @app.post("/predictions", response_model=schemas.PredictionsResponse)
    def predictions(req: schemas.PredictionsRequest):
        table = analyze.predictions(req.sigma1, req.d, req.p,
                                    sigma=req.sigma, sigma_prime=req.sigma_prime)
        return schemas.PredictionsResponse(**table.as_dict())

    @app.post("/experiments", response_model=schemas.ReportResponse)
    def run_experiment(req: schemas.ExperimentRequest):
        try:
            cfg = experiments.ExperimentConfig.from_dict(req.model_dump(exclude_none=True))
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        try:
            doc = experiments.run_config(cfg)
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return schemas.ReportResponse(passed=bool(doc.get("passed", False)), report=doc)

    @app.get("/reproduce")
    def list_reproductions() -> dict:
        return {"experiments": sorted(experiments.EXPERIMENTS),
                "criteria": experiments.CRITERION_OF}

    @app.post("/reproduce/{name}", response_model=schemas.ReportResponse)
    def reproduce(name: str, req: schemas.ReproduceRequest):
        try:
            doc = experiments.run_reproduction(name, req.out_dir, seed=req.seed)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return schemas.ReportResponse(passed=bool(doc.get("passed", False)), report=doc)

    return app


app = create_app()
