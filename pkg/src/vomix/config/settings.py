"""Application configuration settings."""

from functools import lru_cache
from pathlib import Path
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Engine settings with environment variable support.

    All settings can be overridden via environment variables prefixed with VOMIX_.
    For example, VOMIX_THREADS=4.
    """

    model_config = SettingsConfigDict(
        env_prefix="VOMIX_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Execution
    threads: int = Field(
        default=1,
        ge=1,
        description="Worker threads used for batch items (benchmarks, self-test)",
    )
    default_seed: int = Field(
        default=0,
        ge=0,
        description="Seed used when a command is run without --seed",
    )

    # Model
    default_preset: str = Field(
        default="vit-b16-224",
        description="Model preset used when neither --preset nor --config is given",
    )

    # Benchmarks
    bench_repeats: int = Field(
        default=5,
        ge=5,
        description="Timed repetitions per benchmark (median is reported)",
    )

    # Paths
    output_dir: Path = Field(
        default_factory=lambda: Path.cwd() / "vomix-out",
        description="Directory for generated CSV, PPM and weight files",
    )

    # Logging
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = Field(
        default="WARNING",
        description="Logging level",
    )

    def ensure_output_dir(self) -> Path:
        """Create the output directory if it doesn't exist."""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return self.output_dir


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()
