"""HTTP service exposing runs, studies and the steady check.

Each endpoint accepts the raw flat-text configuration, executes in-process
and returns the produced CSV payloads plus a summary, so clients stay thin.
Configuration problems map to 422 with ``kind = "config_error"``; solver
failures map to 500 with ``kind = "solver_error"``.
"""

from __future__ import annotations

from typing import Dict, List, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from kinwb import __version__
from kinwb.config import ConfigError, parse_config
from kinwb.runner import (
    SolverError,
    convergence_study_dx,
    convergence_study_eps,
    run_simulation,
    steady_check,
)

app = FastAPI(
    title="kinwb",
    version=__version__,
    description="Well-balanced asymptotic-preserving kinetic transport runs",
)


class ConfigRequest(BaseModel):
    config: str = Field(description="flat 'key = value' configuration text")


class RunResponse(BaseModel):
    files: Dict[str, str]
    summary: dict


class StudyRow(BaseModel):
    control: float
    error: float
    order: Optional[float] = None


class StudyResponse(BaseModel):
    files: Dict[str, str]
    rows: List[StudyRow]
    summary: dict


class SteadyCheckResponse(BaseModel):
    files: Dict[str, str]
    passed: bool
    metrics: Dict[str, float]
    checks: dict


class HealthResponse(BaseModel):
    status: str
    version: str


def _parse(request: ConfigRequest):
    try:
        return parse_config(request.config)
    except ConfigError as exc:
        raise HTTPException(
            status_code=422,
            detail={"kind": "config_error", "message": str(exc),
                    "line": exc.line},
        ) from exc


def _solver_error(exc: SolverError) -> HTTPException:
    return HTTPException(
        status_code=500,
        detail={"kind": "solver_error", "message": str(exc)},
    )


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/run", response_model=RunResponse)
def run(request: ConfigRequest) -> RunResponse:
    cfg = _parse(request)
    try:
        result = run_simulation(cfg, write=False)
    except SolverError as exc:
        raise _solver_error(exc) from exc
    return RunResponse(files=result.files, summary=result.summary)


@app.post("/study/dx", response_model=StudyResponse)
def study_dx(request: ConfigRequest) -> StudyResponse:
    cfg = _parse(request)
    try:
        report = convergence_study_dx(cfg, write=False)
    except SolverError as exc:
        raise _solver_error(exc) from exc
    rows = [StudyRow(control=dx, error=err, order=order)
            for _, eps_rows in report.rows
            for dx, err, order in eps_rows]
    summary = dict(report.summary)
    summary["orders"] = {f"{k:g}": v for k, v in summary["orders"].items()}
    return StudyResponse(files=report.files, rows=rows, summary=summary)


@app.post("/study/eps", response_model=StudyResponse)
def study_eps(request: ConfigRequest) -> StudyResponse:
    cfg = _parse(request)
    try:
        report = convergence_study_eps(cfg, write=False)
    except SolverError as exc:
        raise _solver_error(exc) from exc
    rows = [StudyRow(control=eps, error=err, order=order)
            for eps, err, order in report.rows]
    return StudyResponse(files=report.files, rows=rows,
                         summary=report.summary)


@app.post("/steady-check", response_model=SteadyCheckResponse)
def steady(request: ConfigRequest) -> SteadyCheckResponse:
    cfg = _parse(request)
    try:
        passed, metrics, checks, files = steady_check(cfg, write=False)
    except SolverError as exc:
        raise _solver_error(exc) from exc
    return SteadyCheckResponse(files=files, passed=passed, metrics=metrics,
                               checks=checks)
