"""Shared fixtures for the heritable-growth test suite."""

from unittest import mock

import click.testing
import fakeredis
import numpy as np
import pytest

from heritable_growth.lottery import Lottery
from heritable_growth.popsim import SimConfig
from heritable_growth.storage.redis import RedisStorageBackend


@pytest.fixture
def baseline_lottery():
    """The two-point heritable lottery of the dynasty experiments."""
    return Lottery((0.0, 0.02), (0.5, 0.5))


@pytest.fixture
def skewed_lottery():
    """Rare high rate: 10% chance of 0.05, otherwise 0."""
    return Lottery((0.0, 0.05), (0.9, 0.1))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def small_config():
    """A population small and short enough to simulate in milliseconds."""
    return SimConfig(n_agents=300, n_dynasties=30, max_years=200, seed=3)


@pytest.fixture
def cli_runner():
    """Create a Click CLI test runner."""
    return click.testing.CliRunner()


@pytest.fixture
def fake_redis_setup():
    """Set up a fake Redis server and install it as the run cache."""
    redis_server = fakeredis.FakeServer()
    fake_redis = fakeredis.FakeStrictRedis(server=redis_server, decode_responses=True)

    redis_patcher = mock.patch('redis.Redis', return_value=fake_redis)
    redis_patcher.start()

    redis_backend = RedisStorageBackend(
        host="localhost",
        port=16379,
        prefix="test-hgrowth:",
        ttl_days=1,
    )

    backend_patcher = mock.patch('heritable_growth.storage._run_cache', redis_backend)
    backend_patcher.start()

    yield fake_redis, redis_backend

    redis_patcher.stop()
    backend_patcher.stop()
