from pathlib import Path
from typing import Literal, Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process settings read from ``GEOMV_*`` environment variables or ``.env``."""

    model_config = SettingsConfigDict(
        env_file=".env", env_file_encoding="utf-8", env_prefix="GEOMV_", extra="ignore"
    )

    APP_NAME: str = "geomv"
    APP_ENV: str = "development"

    # Wins over the manifest's output_root when set
    OUT: Optional[Path] = None

    # Lattice execution
    DEFAULT_PARALLELISM: int = Field(default=1, ge=1)
    TASK_CHUNKSIZE: int = Field(default=16, ge=1)
    JOURNAL_ECHO: bool = False

    # Logging
    LOG_DIR: Path = Path("logs")
    LOG_LEVEL: str = "INFO"
    LOG_JSON: bool = False
    LOG_ROTATION_TYPE: Literal["size", "time"] = "size"
    LOG_MAX_BYTES: int = 10 * 1024 * 1024
    LOG_BACKUP_COUNT: int = 10
    LOG_ROTATION_WHEN: str = "midnight"
    LOG_COMPRESS: bool = True


settings = Settings()
