from functools import lru_cache
from pathlib import Path

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()

ENV_PREFIX = "FEEDBACK_QUALITY_"
DEFAULT_HOME = Path.home() / ".feedback-quality"
DEFAULT_DATABASE_URL = f"sqlite:///{DEFAULT_HOME / 'runs.db'}"


class Settings(BaseSettings):
    """Process-level settings. Explicit arguments always win over these."""

    model_config = SettingsConfigDict(env_prefix=ENV_PREFIX, env_file=".env", extra="ignore")

    log_level: str = "INFO"
    database_url: str = DEFAULT_DATABASE_URL
    #: process-pool size used for chains and experiment replicates
    workers: int = Field(default=1, ge=1)


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()


def resolve_workers(explicit) -> int:
    """Explicit argument > FEEDBACK_QUALITY_WORKERS > 1."""
    if explicit is not None:
        if int(explicit) < 1:
            raise ValueError(f"workers must be >= 1, got {explicit}")
        return int(explicit)
    return get_settings().workers
