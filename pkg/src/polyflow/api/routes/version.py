import numpy as np
import scipy
from fastapi import APIRouter
from pydantic import BaseModel

from polyflow.core.config import settings

router = APIRouter(tags=["version"])


class VersionResponse(BaseModel):
    app_name: str
    version: str
    environment: str
    numpy: str
    scipy: str


@router.get("/version", response_model=VersionResponse)
def get_version() -> VersionResponse:
    """App name, version, environment and the numerical stack versions."""
    return VersionResponse(
        app_name=settings.app_name,
        version=settings.app_version,
        environment=settings.app_env,
        numpy=np.__version__,
        scipy=scipy.__version__,
    )
