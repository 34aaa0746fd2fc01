"""Run cache backends for heritable-growth."""

import hashlib
import json
import os
from typing import Any, Dict, Optional

from heritable_growth.config import CACHE_PREFIX, CACHE_TTL_DAYS
from heritable_growth.storage.base import StorageBackend, StorageError
from heritable_growth.storage.redis import RedisStorageBackend

__all__ = [
    "StorageBackend",
    "StorageError",
    "RedisStorageBackend",
    "get_storage_backend",
    "run_key",
    "cleanup",
]

# Process-wide backend, created on first use
_run_cache: Optional[StorageBackend] = None


def get_storage_backend(**kwargs) -> RedisStorageBackend:
    """Build a Redis run cache from environment settings.

    REDIS_HOST, REDIS_PORT and REDIS_PASSWORD override the keyword defaults;
    inside Docker (IN_DOCKER=true) the container port 6379 is used.
    """
    host = os.environ.get("REDIS_HOST", kwargs.get("host", "localhost"))

    in_docker = os.environ.get("IN_DOCKER", "").lower() == "true"
    env_port = os.environ.get("REDIS_PORT")
    if env_port:
        port = int(env_port)
    elif in_docker and "port" not in kwargs:
        port = 6379
    else:
        port = kwargs.get("port", 16379)

    password = os.environ.get("REDIS_PASSWORD", kwargs.get("password"))

    kwargs["host"] = host
    kwargs["port"] = port
    if password:
        kwargs["password"] = password
    kwargs.setdefault("prefix", CACHE_PREFIX)
    kwargs.setdefault("ttl_days", CACHE_TTL_DAYS)
    return RedisStorageBackend(**kwargs)


def get_run_cache() -> StorageBackend:
    """Get or initialize the run cache singleton."""
    global _run_cache
    if _run_cache is None:
        _run_cache = get_storage_backend()
    return _run_cache


def run_key(config: Dict[str, Any], rng_algorithm: str) -> str:
    """Content hash identifying a run: resolved config (seed included) and RNG."""
    canonical = json.dumps(
        {"config": config, "rng_algorithm": rng_algorithm},
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def cleanup(days: int = 14) -> int:
    """Remove cached runs older than ``days`` (0 removes everything)."""
    return get_run_cache().cleanup(max_age_days=days)
