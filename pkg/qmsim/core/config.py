from pydantic_settings import BaseSettings, SettingsConfigDict
import os

class Settings(BaseSettings):
    environment: str = "development"
    log_level: str = "INFO"

    # Caps the worker processes used for independent trajectories (scans)
    threads: int = os.cpu_count() or 1

    norm_tol: float = 1e-6
    default_format: str = "csv"
    output_directory: str = "./runs"
    artifact_version: str = "1.0.0"

    model_config = SettingsConfigDict(
        env_prefix="QMS_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

settings = Settings()
