import logging
import os
from contextlib import asynccontextmanager

import sentry_sdk
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from slowapi.errors import RateLimitExceeded

from polyflow.api.routes import health, reference, runs, scenarios, version
from polyflow.core.config import settings
from polyflow.core.errors import AppError, app_error_handler, validation_error_handler
from polyflow.core.rate_limit import limiter

if settings.sentry_dsn and "PYTEST_CURRENT_TEST" not in os.environ:
    sentry_sdk.init(
        dsn=settings.sentry_dsn,
        traces_sample_rate=0.1,
    )

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    logger.info(
        "polyflow API starting: env=%s workers=%d node_chunk=%d rate limit %s (%s)",
        settings.app_env,
        settings.workers,
        settings.node_chunk,
        settings.run_rate_limit,
        "on" if settings.rate_limit_enabled else "off",
    )
    yield


app = FastAPI(
    title="polyflow API",
    description="Deterministic particle and finite element simulations of dilute polymer flows",
    version=settings.app_version,
    lifespan=lifespan,
)


@app.get("/")
def root():
    return {
        "name": "polyflow API",
        "docs": "/docs",
        "health": "/health",
        "version": "/version",
        "scenarios": "/v1/scenarios",
        "runs": "/v1/runs",
        "reference": "/v1/reference/oldroyd-b",
    }


app.state.limiter = limiter


def _rate_limit_handler(request: Request, exc: RateLimitExceeded):
    return JSONResponse(
        status_code=429,
        content={"code": "RATE_LIMITED", "message": "Too many runs. Please try again later."},
    )


app.add_exception_handler(RateLimitExceeded, _rate_limit_handler)
app.add_exception_handler(AppError, app_error_handler)
app.add_exception_handler(RequestValidationError, validation_error_handler)

app.include_router(health.router)
app.include_router(version.router)
app.include_router(scenarios.router, prefix="/v1")
app.include_router(runs.router, prefix="/v1")
app.include_router(reference.router, prefix="/v1")
