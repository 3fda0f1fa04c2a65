"""
Runtime Settings
Reads process-wide defaults from the environment (and an optional .env file)
"""

import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, Optional

from dotenv import load_dotenv

ENV_FILE = '.env'

_settings: Optional["Settings"] = None


@dataclass
class Settings:
    """Process-wide defaults that are not part of a training run"""
    jobs: int = 1
    log_level: str = "INFO"
    log_file: Optional[str] = None
    debug: bool = False

    @classmethod
    def from_env(cls) -> "Settings":
        """Build settings from DDCO_* environment variables"""
        logger = logging.getLogger(__name__)

        if os.path.exists(ENV_FILE):
            load_dotenv(ENV_FILE)

        raw_jobs = os.getenv('DDCO_JOBS', '1')
        try:
            jobs = max(1, int(raw_jobs))
        except ValueError:
            logger.warning(f"Ignoring non-integer DDCO_JOBS={raw_jobs!r}, using 1")
            jobs = 1

        return cls(
            jobs=jobs,
            log_level=os.getenv('DDCO_LOG_LEVEL', 'INFO').upper(),
            log_file=os.getenv('DDCO_LOG_FILE') or None,
            debug=os.getenv('DDCO_DEBUG', 'false').lower() == 'true',
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "jobs": self.jobs,
            "log_level": self.log_level,
            "log_file": self.log_file,
            "debug": self.debug,
        }


def get_settings() -> Settings:
    """Get cached settings or read them from the environment"""
    global _settings
    if _settings is None:
        _settings = Settings.from_env()
    return _settings


def reset_settings() -> None:
    """Forget cached settings (the next access re-reads the environment)"""
    global _settings
    _settings = None


def setup_logging(verbose: bool = False, log_file: Optional[str] = None) -> None:
    """Setup logging configuration; diagnostics go to standard error"""
    settings = get_settings()
    level = logging.DEBUG if (verbose or settings.debug) else getattr(logging, settings.log_level, logging.INFO)

    handlers: list = [logging.StreamHandler()]
    target = log_file or settings.log_file
    if target:
        handlers.append(logging.FileHandler(target))

    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )
