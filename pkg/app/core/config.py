from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field
from typing import Optional
from functools import lru_cache


class Settings(BaseSettings):
    """Process settings loaded from environment variables."""
    
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore"
    )
    
    # Filesystem
    runs_dir: str = Field(default="./runs", alias="WORKBENCH_RUNS_DIR")
    data_dir: Optional[str] = Field(default=None, alias="WORKBENCH_DATA_DIR")
    
    # Execution
    workers: int = Field(default=1, ge=1, alias="WORKBENCH_WORKERS")
    
    # Application
    environment: str = Field(default="development", alias="ENVIRONMENT")
    log_level: str = Field(default="INFO", alias="LOG_LEVEL")


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()
