"""
Runtime settings for the DCG toolkit, read from the environment.

Sweep physics lives in the sweep configuration document; this module only
covers how the tool runs (logging, worker threads, progress display).
"""

import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

_TRUE = {'1', 'true', 'yes', 'on'}


class Config:
    """Environment-backed runtime settings."""

    def __init__(self, env_file: Optional[str] = None):
        """
        Initialize configuration.

        Args:
            env_file: Path to .env file (optional)
        """
        if env_file:
            if not Path(env_file).exists():
                raise ValueError(f"Environment file not found: {env_file}")
            load_dotenv(env_file)
        else:
            for env_path in ['.env', Path.home() / '.dcg.env']:
                if Path(env_path).exists():
                    load_dotenv(env_path)
                    break

    @property
    def log_level(self) -> str:
        return os.getenv('DCG_LOG_LEVEL', 'INFO').upper()

    @property
    def log_file(self) -> Optional[str]:
        return os.getenv('DCG_LOG_FILE')

    @property
    def max_workers(self) -> int:
        """Default worker threads for sweeps."""
        return int(os.getenv('DCG_MAX_WORKERS', '1'))

    @property
    def show_progress(self) -> bool:
        return os.getenv('DCG_SHOW_PROGRESS', 'true').strip().lower() in _TRUE

    def validate(self) -> None:
        if self.log_level not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            raise ValueError(f"DCG_LOG_LEVEL must be a logging level name, got {self.log_level}")
        if self.max_workers <= 0:
            raise ValueError("DCG_MAX_WORKERS must be greater than 0")

    def __str__(self) -> str:
        return (
            f"Config("
            f"log_level={self.log_level}, "
            f"log_file={self.log_file}, "
            f"max_workers={self.max_workers}, "
            f"show_progress={self.show_progress}"
            f")"
        )
