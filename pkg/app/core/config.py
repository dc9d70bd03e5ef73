from typing import List, Optional
import os
from dotenv import load_dotenv
from pydantic_settings import BaseSettings
from pathlib import Path

# Load .env before the Settings instance is created
load_dotenv()


class Settings(BaseSettings):
    """Process-level settings for the splinecl engine and its HTTP surface"""
    PROJECT_NAME: str = "splinecl"
    PROJECT_DESCRIPTION: str = "Per-knot continual learning engine for spline (KAN) networks"
    VERSION: str = "0.1.0"
    DEBUG: bool = os.getenv("DEBUG", "False").lower() == "true"

    # API
    API_V1_STR: str = "/api/v1"
    HOST: str = os.getenv("HOST", "0.0.0.0")
    PORT: int = int(os.getenv("PORT", "8000"))
    CORS_ORIGINS: List[str] = ["*"]

    # Logging
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
    LOG_FILE: Optional[str] = os.getenv("LOG_FILE")
    LOG_FORMAT: str = "[%(asctime)s] %(levelname)s [%(name)s:%(lineno)d] - %(message)s"

    # Paths
    BASE_DIR: Path = Path(__file__).parent.parent
    CONFIG_DIR: Path = BASE_DIR / "config"
    EXPERIMENTS_DIR: Path = CONFIG_DIR / "experiments"
    LOG_DIR: Path = Path(os.getenv("SPLINECL_LOG_DIR", str(BASE_DIR / "logs")))

    # Dataset cache root: data/<name>/...
    DATA_ROOT: Path = Path(os.getenv("SPLINECL_DATA_ROOT", str(BASE_DIR.parent / "data")))
    OUTPUT_ROOT: Path = Path(os.getenv("SPLINECL_OUTPUT_ROOT", str(BASE_DIR.parent / "runs")))
    FETCH_SCRIPT: str = "scripts/fetch_data.py"

    # Checkpoint archive header
    CHECKPOINT_HEADER: str = "SPLINECL-CKPT-1"

    class Config:
        env_file = ".env"
        case_sensitive = True
        extra = "ignore"


# Global settings instance
settings = Settings()
