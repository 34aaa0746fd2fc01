"""Environment configuration for heritable-growth."""

import os

from dotenv import load_dotenv

from heritable_growth.errors import ValidationError
from heritable_growth.logger import logger

# Load environment variables from .env file
load_dotenv()


def _int_env(name: str, default: int, strict: bool = False) -> int:
    """Integer setting from the environment.

    Malformed values fall back to ``default`` with a warning, or raise
    :class:`ValidationError` when ``strict`` is set.
    """
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        if strict:
            raise ValidationError(f"{name} must be an integer, got {raw!r}") from None
        logger.warning(f"Ignoring {name}={raw!r}: not an integer, using {default}")
        return default


# Default seed for `sim` and `sweep` when --seed is not given
DEFAULT_SEED = _int_env("HG_SEED", 0)

# Run cache (Redis) settings
CACHE_ENABLED = os.getenv("HG_CACHE", "0").strip().lower() in ("1", "true", "yes")
CACHE_TTL_DAYS = _int_env("HG_CACHE_TTL_DAYS", 14)
CACHE_PREFIX = os.getenv("HG_CACHE_PREFIX", "hgrowth:")


def default_seed() -> int:
    """Seed from HG_SEED, re-read so that tests and shells can change it late.

    Raises:
        ValidationError: If HG_SEED is set but is not an integer
    """
    return _int_env("HG_SEED", DEFAULT_SEED, strict=True)
