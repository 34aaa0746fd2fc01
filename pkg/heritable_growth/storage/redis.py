"""Redis run cache for heritable-growth simulations."""

import json
import time
from datetime import datetime
from typing import Any, Dict, List, Optional

import redis

from heritable_growth.logger import logger
from heritable_growth.storage.base import StorageBackend, StorageError


class InMemoryRedisClient:
    """Process-local stand-in for the few Redis commands the cache uses.

    Used when no Redis server is reachable, so caching degrades to the
    lifetime of the current process instead of failing.
    """

    def __init__(self):
        self.data: Dict[str, str] = {}
        self.expiry: Dict[str, float] = {}
        self.sorted_sets: Dict[str, Dict[str, float]] = {}

    def ping(self):
        return True

    def set(self, key, value, ex=None):
        self.data[key] = value
        if ex:
            self.expire(key, ex)
        return True

    def get(self, key):
        if key in self.data:
            if key in self.expiry and time.time() > self.expiry[key]:
                del self.data[key]
                del self.expiry[key]
                return None
            return self.data[key]
        return None

    def delete(self, key):
        if key in self.data:
            del self.data[key]
            self.expiry.pop(key, None)
            return 1
        return 0

    def expire(self, key, seconds):
        if key in self.data:
            self.expiry[key] = time.time() + seconds
            return True
        return False

    def zadd(self, key, mapping):
        self.sorted_sets.setdefault(key, {}).update(mapping)
        return len(mapping)

    def zrangebyscore(self, key, min_score, max_score):
        members = self.sorted_sets.get(key, {})
        return [
            member for member, score in sorted(members.items(), key=lambda item: item[1])
            if min_score <= score <= max_score
        ]

    def zrem(self, key, *members):
        removed = 0
        for member in members:
            if self.sorted_sets.get(key, {}).pop(member, None) is not None:
                removed += 1
        return removed


class RedisStorageBackend(StorageBackend):
    """Redis-based cache of finished simulation runs."""

    def __init__(
        self,
        host: str = "localhost",
        port: int = 16379,
        db: int = 0,
        password: Optional[str] = None,
        prefix: str = "hgrowth:",
        ttl_days: int = 14,
        ssl: bool = False,
    ):
        """Connect to Redis, falling back to an in-memory client when unreachable.

        Args:
            host: Redis server hostname
            port: Redis server port
            db: Redis database number
            password: Redis password if authentication is required
            prefix: Key prefix for Redis keys
            ttl_days: TTL for cached runs in days (0 disables expiry)
            ssl: Whether to use SSL for Redis connection
        """
        try:
            self.redis_client = redis.Redis(
                host=host,
                port=port,
                db=db,
                password=password,
                ssl=ssl,
                decode_responses=True,
            )
            self.redis_client.ping()
            is_mock = False
            logger.info(f"Initialized Redis run cache at {host}:{port} with prefix: {prefix}")
        except redis.exceptions.RedisError as e:
            logger.warning(f"Failed to connect to Redis at {host}:{port}: {e}")
            logger.warning("Falling back to in-memory run cache")
            self.redis_client = InMemoryRedisClient()
            is_mock = True

        self.prefix = prefix
        self.ttl_days = ttl_days
        self.is_mock = is_mock

    def _make_key(self, key_type: str, identifier: str) -> str:
        return f"{self.prefix}{key_type}:{identifier}"

    @property
    def _ttl_seconds(self) -> int:
        return self.ttl_days * 24 * 60 * 60

    def save_run(self, run_key: str, payload: Dict[str, Any]) -> str:
        record = {
            "key": run_key,
            "saved_at": datetime.now().isoformat(),
            "payload": payload,
        }
        try:
            result_key = self._make_key("run", run_key)
            self.redis_client.set(result_key, json.dumps(record))
            if self.ttl_days > 0:
                self.redis_client.expire(result_key, self._ttl_seconds)
            self.redis_client.zadd(self._make_key("index", "all"), {run_key: time.time()})
        except redis.exceptions.RedisError as e:
            logger.error(f"Redis operation error: {e}")
            raise StorageError(f"Failed to cache run: {e}")
        logger.info(f"Cached run {run_key[:12]}")
        return run_key

    def get_run(self, run_key: str) -> Optional[Dict[str, Any]]:
        try:
            result_key = self._make_key("run", run_key)
            raw = self.redis_client.get(result_key)
            if not raw:
                logger.info(f"Cache MISS for run {run_key[:12]}")
                return None
            # A hit refreshes the TTL
            if self.ttl_days > 0:
                self.redis_client.expire(result_key, self._ttl_seconds)
            logger.info(f"Cache HIT for run {run_key[:12]}")
            return json.loads(raw)["payload"]
        except (redis.exceptions.RedisError, json.JSONDecodeError, KeyError) as e:
            logger.error(f"Error retrieving cached run: {e}")
            raise StorageError(f"Failed to retrieve run: {e}")

    def list_runs(self, limit: int = 10, offset: int = 0) -> List[Dict[str, Any]]:
        try:
            keys = self.redis_client.zrangebyscore(self._make_key("index", "all"), 0, float("inf"))
            listed = []
            for run_key in keys[offset:offset + limit]:
                raw = self.redis_client.get(self._make_key("run", run_key))
                if raw:
                    record = json.loads(raw)
                    listed.append({"key": run_key, "saved_at": record["saved_at"]})
            return listed
        except redis.exceptions.RedisError as e:
            logger.error(f"Error listing cached runs: {e}")
            raise StorageError(f"Failed to list runs: {e}")

    def delete_run(self, run_key: str) -> bool:
        try:
            self.redis_client.zrem(self._make_key("index", "all"), run_key)
            return self.redis_client.delete(self._make_key("run", run_key)) > 0
        except redis.exceptions.RedisError as e:
            logger.error(f"Error deleting cached run: {e}")
            raise StorageError(f"Failed to delete run: {e}")

    def cleanup(self, max_age_days: int = 14) -> int:
        try:
            cutoff = time.time() - (max_age_days * 24 * 60 * 60)
            old_keys = self.redis_client.zrangebyscore(self._make_key("index", "all"), 0, cutoff)
            count = sum(1 for run_key in old_keys if self.delete_run(run_key))
            logger.info(f"Cleaned up {count} cached run(s)")
            return count
        except redis.exceptions.RedisError as e:
            logger.error(f"Redis cleanup error: {e}")
            raise StorageError(f"Failed to clean up runs: {e}")
