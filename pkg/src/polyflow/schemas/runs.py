from typing import Any

from pydantic import BaseModel, Field

from polyflow.schemas.config import ExtensionMode, ProjectionKind, ScenarioKind
from polyflow.schemas.series import TimeSeries

# synchronous HTTP runs are capped; longer runs go through the CLI
MAX_HTTP_STEPS = 20_000
MAX_HTTP_PARTICLES = 1_000


class RunRequest(BaseModel):
    scenario: ScenarioKind
    seed: int | None = Field(None, ge=0, lt=2**64)
    N: int | None = Field(None, ge=1, le=MAX_HTTP_PARTICLES)
    dt: float | None = Field(None, gt=0.0)
    t_end: float | None = Field(None, gt=0.0)
    output_every: int | None = Field(None, ge=1)
    rate: float | None = Field(None, gt=0.0)
    mode: ExtensionMode | None = None
    Ly: float | None = Field(None, gt=0.0)
    Wi: float | None = Field(None, gt=0.0)
    M: int | None = Field(None, ge=1)
    nx: int | None = Field(None, ge=1)
    ny: int | None = Field(None, ge=1)
    projection: ProjectionKind | None = None

    def overrides(self) -> dict[str, Any]:
        return self.model_dump(exclude={"scenario"}, exclude_none=True)


class RunResponse(BaseModel):
    scenario: ScenarioKind
    config_hash: str
    config: dict[str, Any]
    summary: dict[str, Any]
    series: TimeSeries


class OldroydBRequest(BaseModel):
    Re: float = Field(0.11, gt=0.0)
    Wi: float = Field(0.1, gt=0.0)
    eta_s: float = Field(0.11, ge=0.0)
    eps_p: float = Field(0.89, ge=0.0)
    M_fine: int = Field(400, ge=2, le=4000)
    dt_fine: float = Field(1e-4, gt=0.0)
    t_end: float = Field(1.0, gt=0.0, le=10.0)
    record_dt: float = Field(1e-2, gt=0.0)


class ScenarioListResponse(BaseModel):
    scenarios: dict[str, dict[str, Any]]
