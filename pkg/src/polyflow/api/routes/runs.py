import logging

from fastapi import APIRouter, Request

from polyflow.core.config import settings
from polyflow.core.errors import ConfigError
from polyflow.core.rate_limit import limiter
from polyflow.schemas.runs import MAX_HTTP_STEPS, RunRequest, RunResponse
from polyflow.services.scenarios.defaults import scenario_config
from polyflow.services.scenarios.registry import run_scenario

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/runs", tags=["runs"])


@router.post("", response_model=RunResponse)
@limiter.limit(settings.run_rate_limit)
def create_run(request: Request, body: RunRequest) -> RunResponse:
    """Run a scenario synchronously and return its time series and summary."""
    overrides = body.overrides()
    cfg = scenario_config(body.scenario, **overrides)
    if cfg.n_steps > MAX_HTTP_STEPS:
        raise ConfigError(
            "run is too long for a synchronous request; use the CLI",
            details={"steps": cfg.n_steps, "max_steps": MAX_HTTP_STEPS},
        )
    logger.info("http run: %s (%d steps)", cfg.scenario.value, cfg.n_steps)
    result = run_scenario(body.scenario, **overrides)
    return RunResponse(
        scenario=cfg.scenario,
        config_hash=cfg.config_hash(),
        config=cfg.model_dump(mode="json"),
        summary=result.summary,
        series=result.series,
    )
