import os
from dotenv import load_dotenv

load_dotenv()


class Settings:
    app_name: str = os.getenv("APP_NAME", "polyflow")
    app_version: str = "0.1.0"
    app_env: str = os.getenv("APP_ENV", "development")
    log_level: str = os.getenv("LOG_LEVEL", "INFO")
    sentry_dsn: str = os.getenv("SENTRY_DSN", "")
    output_dir: str = os.getenv("POLYFLOW_OUTPUT_DIR", "runs")
    workers: int = int(os.getenv("POLYFLOW_WORKERS", "1"))
    node_chunk: int = int(os.getenv("POLYFLOW_NODE_CHUNK", "32"))
    run_rate_limit: str = os.getenv("POLYFLOW_RUN_RATE_LIMIT", "5/minute")
    rate_limit_enabled: bool = os.getenv("POLYFLOW_RATE_LIMIT_ENABLED", "true").lower() != "false"


settings = Settings()
