from dotenv import load_dotenv
from pydantic import BaseModel, Field
import os
import logging

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)

DEFAULT_WORKERS = min(os.cpu_count() or 1, 8)


class Settings(BaseModel):
    log_level: str = Field(default="INFO", description="Root logging level")
    workers: int = Field(default=DEFAULT_WORKERS, ge=1, description="Thread pool size for parallel evaluation")
    output_dir: str = Field(default="./results", description="Default directory for experiment output")
    default_seed: int = Field(default=0, ge=0, description="Seed used when a command is given none")


def _int_from_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None:
        return default
    try:
        value = int(raw)
        if value < 0:
            raise ValueError(raw)
        return value
    except ValueError:
        logger.warning(f"Ignoring invalid {name}={raw!r}, using {default}")
        return default


def load_settings() -> Settings:
    """Read settings from the environment (and .env)"""
    log_level = os.getenv("EES_LOG_LEVEL", "INFO").upper()
    if not isinstance(logging.getLevelName(log_level), int):
        logger.warning(f"Unknown EES_LOG_LEVEL {log_level!r}, using INFO")
        log_level = "INFO"

    workers = _int_from_env("EES_WORKERS", DEFAULT_WORKERS)
    if workers < 1:
        logger.warning("EES_WORKERS must be at least 1, using 1")
        workers = 1

    output_dir = os.getenv("EES_OUTPUT_DIR")
    if not output_dir:
        output_dir = "./results"

    return Settings(
        log_level=log_level,
        workers=workers,
        output_dir=output_dir,
        default_seed=_int_from_env("EES_DEFAULT_SEED", 0),
    )


settings = load_settings()
