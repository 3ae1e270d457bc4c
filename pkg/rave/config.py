"""Environment configuration loader.

Resolves optional process-wide defaults. CLI flags always win over these.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import Optional

from .exceptions import ConfigurationError

# expected environment variables (all optional)
SEED_ENV = "RAVE_SEED"
THREADS_ENV = "RAVE_THREADS"
LOG_LEVEL_ENV = "RAVE_LOG_LEVEL"

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def _read_int(name: str, default: int, minimum: int) -> int:
    raw: Optional[str] = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"{name} must be an integer, got '{raw}'") from None
    if value < minimum:
        raise ConfigurationError(f"{name} must be >= {minimum}, got {value}")
    return value


@dataclass
class RaveSettings:
    seed: int = 0
    threads: int = 1
    log_level: str = "WARNING"

    @classmethod
    def load(cls) -> "RaveSettings":
        level = (os.getenv(LOG_LEVEL_ENV) or "").strip().upper() or "WARNING"
        if level not in LOG_LEVELS:
            raise ConfigurationError(
                f"{LOG_LEVEL_ENV} must be one of {', '.join(LOG_LEVELS)}, "
                f"got '{level}'"
            )
        return cls(
            seed=_read_int(SEED_ENV, 0, minimum=0),
            threads=_read_int(THREADS_ENV, 1, minimum=1),
            log_level=level,
        )

    @property
    def logging_level(self) -> int:
        return getattr(logging, self.log_level)
