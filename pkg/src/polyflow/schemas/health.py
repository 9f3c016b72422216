from pydantic import BaseModel


class HealthResponse(BaseModel):
    status: str
    checks_available: int
