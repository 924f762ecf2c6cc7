"""
Configuration management for the branching McKean-Vlasov toolkit.
Loads settings from environment variables with sensible defaults.
"""

from typing import Optional
from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field


class Settings(BaseSettings):
    """Application configuration settings."""

    model_config = SettingsConfigDict(
        env_prefix="BMKV_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Logging Configuration
    log_level: str = Field(
        default="INFO",
        description="Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)"
    )
    log_file: Optional[str] = Field(
        default=None,
        description="Optional log file path"
    )

    # Run Configuration
    default_seed: int = Field(
        default=7,
        ge=0,
        lt=2**64,
        description="Master seed used when a run does not supply one"
    )
    threads: int = Field(
        default=1,
        ge=1,
        description="Worker threads for independent optimizer restarts and suite checks"
    )
    out_dir: str = Field(
        default="results",
        description="Directory for JSON reports, CSV tables and manifests"
    )
    output_format: str = Field(
        default="json",
        pattern="^(json|csv)$",
        description="Primary output format"
    )

    # Numerical defaults
    quadrature_radius: float = Field(
        default=50.0,
        gt=0,
        description="Truncation radius R of the Fourier-Wasserstein frequency integral"
    )
    quadrature_nodes: int = Field(
        default=20001,
        ge=3,
        description="Grid nodes per axis for the truncated frequency quadrature"
    )
    action_grid_points: int = Field(
        default=33,
        ge=2,
        description="Grid points per action axis for the Hamiltonian infimum"
    )
    bootstrap_resamples: int = Field(
        default=200,
        ge=10,
        description="Replica bootstrap resamples for standard errors"
    )
    offspring_cap: int = Field(
        default=64,
        ge=1,
        description="Largest admissible offspring count in a progeny pmf"
    )


# Global settings instance
settings = Settings()
