from fastapi import APIRouter

from polyflow.schemas.runs import ScenarioListResponse
from polyflow.services.scenarios.registry import scenario_defaults

router = APIRouter(prefix="/scenarios", tags=["scenarios"])


@router.get("", response_model=ScenarioListResponse)
def list_scenarios() -> ScenarioListResponse:
    """Default parameter set of every scenario."""
    return ScenarioListResponse(scenarios=scenario_defaults())
