"""FastAPI application exposing shipped configs and pipeline runs."""

from __future__ import annotations

import logging
import math
from typing import Any, Dict, List, Optional

from fastapi import Depends, FastAPI, HTTPException, Request, status
from pydantic import BaseModel, Field

from .config import (
    ConfigError,
    build_settings,
    configure_logging,
    describe_config,
    load_environment,
    load_run_config,
    shipped_config_names,
)
from .decomposer import InfeasibleProblemError
from .pipeline import PipelineService, RunResult

LOGGER = logging.getLogger("alm_ssd.app")


class RunRequest(BaseModel):
    config: str = "base_small"
    seed: Optional[int] = None
    phi: Optional[float] = Field(None, ge=0.0)
    branching: Optional[List[int]] = None


class RunResponse(BaseModel):
    success: bool
    timestamp: str
    duration: float = Field(..., description="Wall time of the run in seconds")
    output_dir: str
    summary: Dict[str, Any]
    artifacts: Dict[str, str]


def _finite_or_none(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _run_to_response(result: RunResult) -> RunResponse:
    return RunResponse(
        success=result.success,
        timestamp=result.timestamp.isoformat(),
        duration=result.duration,
        output_dir=str(result.output_dir),
        summary={key: _finite_or_none(value) for key, value in result.summary.items()},
        artifacts=result.artifacts,
    )


async def _lifespan(app: FastAPI):
    load_environment()
    settings = build_settings()
    configure_logging(settings.log_level)
    app.state.service = PipelineService(settings)
    LOGGER.info("ALM service started, output in %s", settings.output_dir)
    yield
    LOGGER.info("ALM service stopped")


def create_app() -> FastAPI:
    app = FastAPI(title="ALM Dominance Planner", version="1.0.0", lifespan=_lifespan)

    @app.get("/", response_model=Dict[str, str])
    async def root() -> Dict[str, str]:
        return {"service": "alm-ssd", "status": "ok"}

    def get_service(request: Request) -> PipelineService:
        service = getattr(request.app.state, "service", None)
        if service is None:
            raise HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail="Service not ready")
        return service

    @app.get("/configs", response_model=List[str])
    async def configs() -> List[str]:
        return shipped_config_names()

    @app.get("/configs/{name}", response_model=Dict[str, Any])
    async def config_detail(name: str) -> Dict[str, Any]:
        if name not in shipped_config_names():
            raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=f"Unknown config {name!r}")
        return describe_config(load_run_config(name))

    @app.post("/runs", response_model=RunResponse)
    def create_run(request: RunRequest, service: PipelineService = Depends(get_service)) -> RunResponse:
        if request.config not in shipped_config_names():
            raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=f"Unknown config {request.config!r}")
        try:
            result = service.run(request.config, seed=request.seed, phi=request.phi, branching=request.branching)
        except ConfigError as exc:
            raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=exc.problems) from exc
        except InfeasibleProblemError as exc:
            raise HTTPException(status_code=status.HTTP_409_CONFLICT, detail=str(exc)) from exc
        return _run_to_response(result)

    @app.get("/runs/latest", response_model=RunResponse)
    async def latest_run(service: PipelineService = Depends(get_service)) -> RunResponse:
        result = service.last_result
        if result is None:
            raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail="No run available yet")
        return _run_to_response(result)

    return app


__all__ = ["create_app"]
