from fastapi import APIRouter, Request

from polyflow.core.config import settings
from polyflow.core.rate_limit import limiter
from polyflow.schemas.runs import OldroydBRequest
from polyflow.schemas.series import TimeSeries
from polyflow.services.scenarios.oldroyd_b import oldroyd_b_reference

router = APIRouter(prefix="/reference", tags=["reference"])


@router.post("/oldroyd-b", response_model=TimeSeries)
@limiter.limit(settings.run_rate_limit)
def oldroyd_b(request: Request, body: OldroydBRequest) -> TimeSeries:
    """Probe velocities and shear stresses of the Oldroyd-B start-up Couette oracle."""
    return oldroyd_b_reference(**body.model_dump())
