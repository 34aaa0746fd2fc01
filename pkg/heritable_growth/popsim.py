"""Finite-population dynasty simulator.

Agents live in a fixed number of dynasties and are stored as per-dynasty
counts. Every year, in this order:

1. each dynasty redraws its heritable rate with probability ``lambda_r``;
2. each agent migrates with probability ``lambda_m`` to a uniformly drawn
   dynasty and adopts its rate;
3. each agent gives birth with probability equal to its dynasty's rate, the
   newborn joining the same dynasty;
4. each agent alive at the start of the birth step dies with probability
   ``delta``.

Newborns neither migrate nor die in the year they are born. All agents of a
dynasty are exchangeable, so migrations, births and deaths are binomial
draws per dynasty.
"""

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from heritable_growth.errors import ValidationError
from heritable_growth.logger import logger
from heritable_growth.storage.base import StorageBackend, StorageError
from heritable_growth.storage import run_key

RNG_ALGORITHM = "numpy.random.PCG64"

# Default migration-to-redraw ratio sweep, and the subset used for representative runs
FIGURE3_RATIOS = (0.01, 0.02, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 10.0)
FIGURE2_RATIOS = (0.01, 0.05, 0.25, 1.0)

TRACE_COLUMNS = ["year", "population", "high_share", "max_dynasty_share", "cum_growth"]
SWEEP_COLUMNS = [
    "ratio", "lambda_m", "lambda_r", "mean_growth", "stdev_growth", "extinctions", "n_runs",
]


class InvalidSimConfig(ValidationError):
    """Simulation parameters violate their constraints."""
    pass


_INT_FIELDS = ("n_agents", "n_dynasties", "max_years", "seed")
_FLOAT_FIELDS = (
    "x_low", "x_high", "q_high", "lambda_m", "lambda_r", "delta",
    "growth_cap", "extinction_floor_factor",
)


class TerminalStatus(str, Enum):
    MAX_YEARS = "MaxYears"
    GROWTH_CAP = "GrowthCap"
    EXTINCTION = "Extinction"


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one simulation run; defaults reproduce the baseline experiment."""

    n_agents: int = 3000
    n_dynasties: int = 300
    x_low: float = 0.0
    x_high: float = 0.02
    q_high: float = 0.5
    lambda_m: float = 0.01
    lambda_r: float = 0.01
    delta: float = 0.014
    max_years: int = 20_000
    # Stop once population >= growth_cap * n_agents (1,000,000 for 3,000 agents)
    growth_cap: float = 1_000_000 / 3000
    # Stop once population <= n_agents / extinction_floor_factor (10 for 3,000 agents)
    extinction_floor_factor: float = 300.0
    seed: int = 0

    def __post_init__(self):
        # Canonical types, so equal configs serialize (and hash) identically.
        for name in _INT_FIELDS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise InvalidSimConfig(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        for name in _FLOAT_FIELDS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
                raise InvalidSimConfig(f"{name} must be a number, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.n_agents < 1 or self.n_dynasties < 1 or self.max_years < 1:
            raise InvalidSimConfig("n_agents, n_dynasties and max_years must be >= 1")
        if self.seed < 0:
            raise InvalidSimConfig(f"seed must be unsigned, got {self.seed!r}")
        for name in ("x_low", "x_high", "q_high", "lambda_m", "lambda_r", "delta"):
            value = getattr(self, name)
            if not (math.isfinite(value) and 0.0 <= value <= 1.0):
                raise InvalidSimConfig(f"{name} must be a probability in [0, 1], got {value!r}")
        if self.x_low > self.x_high:
            raise InvalidSimConfig(f"x_low {self.x_low!r} exceeds x_high {self.x_high!r}")
        if not (math.isfinite(self.growth_cap) and self.growth_cap > 1.0):
            raise InvalidSimConfig(f"growth_cap must exceed 1, got {self.growth_cap!r}")
        if not (math.isfinite(self.extinction_floor_factor) and self.extinction_floor_factor >= 1.0):
            raise InvalidSimConfig(
                f"extinction_floor_factor must be >= 1, got {self.extinction_floor_factor!r}"
            )

    @property
    def population_cap(self) -> float:
        return self.growth_cap * self.n_agents

    @property
    def extinction_floor(self) -> float:
        return self.n_agents / self.extinction_floor_factor

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def with_overrides(self, **overrides: Any) -> "SimConfig":
        unknown = set(overrides) - {f.name for f in fields(self)}
        if unknown:
            raise InvalidSimConfig(f"unknown config fields: {sorted(unknown)}")
        return replace(self, **overrides)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SimConfig":
        return cls().with_overrides(**data)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "SimConfig":
        """Load a flat JSON object whose keys are SimConfig field names."""
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidSimConfig(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise InvalidSimConfig(f"config {path} must hold a JSON object")
        return cls.from_dict(data)


@dataclass
class PopulationState:
    """Per-dynasty living counts and high-rate flags."""

    counts: np.ndarray
    is_high: np.ndarray

    @property
    def population(self) -> int:
        return int(self.counts.sum())

    def rates(self, config: SimConfig) -> np.ndarray:
        return np.where(self.is_high, config.x_high, config.x_low)

    def occupied(self) -> int:
        return int(np.count_nonzero(self.counts))

    @classmethod
    def initial(cls, config: SimConfig, rng: np.random.Generator) -> "PopulationState":
        """Agents allocated uniformly at random; dynasty rates i.i.d. with P(high) = q_high."""
        uniform = np.full(config.n_dynasties, 1.0 / config.n_dynasties)
        counts = rng.multinomial(config.n_agents, uniform).astype(np.int64)
        is_high = rng.random(config.n_dynasties) < config.q_high
        return cls(counts=counts, is_high=is_high)


def step_year(state: PopulationState, config: SimConfig, rng: np.random.Generator) -> Tuple[int, int]:
    """Advance the population by one year in place; returns (births, deaths)."""
    n = config.n_dynasties

    # Both uniform arrays are drawn every year so the stream layout never depends on outcomes.
    redraw = rng.random(n) < config.lambda_r
    fresh_high = rng.random(n) < config.q_high
    state.is_high = np.where(redraw, fresh_high, state.is_high)

    movers = rng.binomial(state.counts, config.lambda_m)
    n_movers = int(movers.sum())
    if n_movers:
        arrivals = rng.multinomial(n_movers, np.full(n, 1.0 / n))
    else:
        arrivals = np.zeros(n, dtype=np.int64)
    state.counts = state.counts - movers + arrivals

    births = rng.binomial(state.counts, state.rates(config))
    deaths = rng.binomial(state.counts, config.delta)
    state.counts = state.counts + births - deaths
    return int(births.sum()), int(deaths.sum())


@dataclass(frozen=True)
class SimTrace:
    """Yearly records of one run plus how it ended."""

    config: SimConfig
    status: TerminalStatus
    year: np.ndarray
    population: np.ndarray
    high_share: np.ndarray
    max_dynasty_share: np.ndarray
    cum_growth: np.ndarray
    births: np.ndarray
    deaths: np.ndarray
    rng_algorithm: str = RNG_ALGORITHM

    @property
    def n_years(self) -> int:
        return int(self.year.size)

    @property
    def final_population(self) -> int:
        return int(self.population[-1])

    @property
    def final_cum_growth(self) -> float:
        return float(self.cum_growth[-1])

    def time_averaged_high_share(self, start: int = 0, end: Optional[int] = None) -> float:
        """Mean high-rate share over years in [start, end]."""
        mask = self.year >= start
        if end is not None:
            mask &= self.year <= end
        if not mask.any():
            return math.nan
        return float(self.high_share[mask].mean())

    def to_frame(self, every: int = 1) -> pd.DataFrame:
        """Trace rows, keeping every ``every``-th year and always the last one."""
        keep = (self.year % every == 0)
        keep[-1] = True
        return pd.DataFrame(
            {
                "year": self.year[keep],
                "population": self.population[keep],
                "high_share": self.high_share[keep],
                "max_dynasty_share": self.max_dynasty_share[keep],
                "cum_growth": self.cum_growth[keep],
            },
            columns=TRACE_COLUMNS,
        )

    def to_payload(self) -> Dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "status": self.status.value,
            "rng_algorithm": self.rng_algorithm,
            "year": self.year.tolist(),
            "population": self.population.tolist(),
            "high_share": self.high_share.tolist(),
            "max_dynasty_share": self.max_dynasty_share.tolist(),
            "cum_growth": self.cum_growth.tolist(),
            "births": self.births.tolist(),
            "deaths": self.deaths.tolist(),
        }

    @classmethod
    def from_payload(cls, payload: Dict[str, Any]) -> "SimTrace":
        return cls(
            config=SimConfig.from_dict(payload["config"]),
            status=TerminalStatus(payload["status"]),
            rng_algorithm=payload["rng_algorithm"],
            year=np.asarray(payload["year"], dtype=np.int64),
            population=np.asarray(payload["population"], dtype=np.int64),
            high_share=np.asarray(payload["high_share"], dtype=float),
            max_dynasty_share=np.asarray(payload["max_dynasty_share"], dtype=float),
            cum_growth=np.asarray(payload["cum_growth"], dtype=float),
            births=np.asarray(payload["births"], dtype=np.int64),
            deaths=np.asarray(payload["deaths"], dtype=np.int64),
        )


def run(config: SimConfig) -> SimTrace:
    """Simulate one run until max_years, the growth cap, or extinction.

    Identical configs (seed included) give identical traces.
    """
    rng = np.random.Generator(np.random.PCG64(config.seed))
    state = PopulationState.initial(config, rng)
    initial = config.n_agents
    log_initial = math.log(initial)

    years = config.max_years
    population = np.zeros(years, dtype=np.int64)
    high_share = np.zeros(years)
    max_share = np.zeros(years)
    cum_growth = np.zeros(years)
    births = np.zeros(years, dtype=np.int64)
    deaths = np.zeros(years, dtype=np.int64)

    logger.info(
        f"Simulating seed={config.seed} lambda_m={config.lambda_m!r} lambda_r={config.lambda_r!r}"
    )
    status = TerminalStatus.MAX_YEARS
    last = years
    last_alive = initial
    for t in range(1, years + 1):
        born, died = step_year(state, config, rng)
        size = state.population
        i = t - 1
        population[i] = size
        births[i] = born
        deaths[i] = died
        if size > 0:
            high_share[i] = state.counts[state.is_high].sum() / size
            max_share[i] = state.counts.max() / size
            cum_growth[i] = (math.log(size) - log_initial) / t
            last_alive = size
        else:
            # An empty population is measured by its last living count
            cum_growth[i] = (math.log(last_alive) - log_initial) / t

        if size <= config.extinction_floor:
            status, last = TerminalStatus.EXTINCTION, t
            break
        if size >= config.population_cap:
            status, last = TerminalStatus.GROWTH_CAP, t
            break

    logger.info(
        f"Seed {config.seed} ended with {status.value} after {last} years "
        f"(population {int(population[last - 1])})"
    )
    return SimTrace(
        config=config,
        status=status,
        year=np.arange(1, last + 1, dtype=np.int64),
        population=population[:last],
        high_share=high_share[:last],
        max_dynasty_share=max_share[:last],
        cum_growth=cum_growth[:last],
        births=births[:last],
        deaths=deaths[:last],
    )


@dataclass(frozen=True)
class BatchSummary:
    n_runs: int
    mean_growth: float
    stdev_growth: float
    extinctions: int
    seeds: Tuple[int, ...] = field(default=())

    def to_dict(self) -> Dict[str, Any]:
        payload = asdict(self)
        payload["seeds"] = list(self.seeds)
        return payload


def summarize(traces: Sequence[SimTrace]) -> BatchSummary:
    """Mean and sample standard deviation of final cumulative growth, plus extinctions."""
    growth = np.array([trace.final_cum_growth for trace in traces], dtype=float)
    return BatchSummary(
        n_runs=len(traces),
        mean_growth=float(np.mean(growth)),
        stdev_growth=float(np.std(growth, ddof=1)) if len(traces) > 1 else 0.0,
        extinctions=sum(trace.status is TerminalStatus.EXTINCTION for trace in traces),
        seeds=tuple(trace.config.seed for trace in traces),
    )


def _cached_run(config: SimConfig, cache: Optional[StorageBackend]) -> Optional[SimTrace]:
    if cache is None:
        return None
    try:
        payload = cache.get_run(run_key(config.to_dict(), RNG_ALGORITHM))
    except StorageError as e:
        logger.warning(f"Run cache unavailable, simulating instead: {e}")
        return None
    return SimTrace.from_payload(payload) if payload else None


def _store_run(trace: SimTrace, cache: Optional[StorageBackend]) -> None:
    if cache is None:
        return
    try:
        cache.save_run(run_key(trace.config.to_dict(), RNG_ALGORITHM), trace.to_payload())
    except StorageError as e:
        logger.warning(f"Failed to cache run for seed {trace.config.seed}: {e}")


def run_batch(
    config: SimConfig,
    n_runs: int,
    seed_base: int,
    jobs: int = 1,
    cache: Optional[StorageBackend] = None,
) -> Tuple[List[SimTrace], BatchSummary]:
    """Run ``n_runs`` independent simulations with seeds ``seed_base + i``.

    Runs may execute in ``jobs`` worker processes; traces come back in seed
    order, so the summary does not depend on completion order.
    """
    if n_runs < 1:
        raise InvalidSimConfig(f"n_runs must be >= 1, got {n_runs!r}")
    configs = [config.with_overrides(seed=seed_base + i) for i in range(n_runs)]

    traces: List[Optional[SimTrace]] = [_cached_run(c, cache) for c in configs]
    missing = [i for i, trace in enumerate(traces) if trace is None]
    if missing:
        pending = [configs[i] for i in missing]
        if jobs > 1 and len(pending) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                fresh = list(pool.map(run, pending))
        else:
            fresh = [run(c) for c in pending]
        for i, trace in zip(missing, fresh):
            traces[i] = trace
            _store_run(trace, cache)
    logger.info(f"Batch of {n_runs} runs: {n_runs - len(missing)} served from cache")

    completed = [trace for trace in traces if trace is not None]
    return completed, summarize(completed)


def split_rates(ratio: float, total: float) -> Tuple[float, float]:
    """Split a total switching rate into (lambda_m, lambda_r) with lambda_m / lambda_r = ratio."""
    if not (math.isfinite(ratio) and ratio > 0.0):
        raise InvalidSimConfig(f"ratio must be positive, got {ratio!r}")
    return ratio / (1.0 + ratio) * total, total / (1.0 + ratio)


def ratio_sweep(
    base: SimConfig,
    ratios: Sequence[float],
    total_switch_rate: float,
    n_runs: int,
    seed_base: int = 0,
    jobs: int = 1,
    cache: Optional[StorageBackend] = None,
) -> pd.DataFrame:
    """Batch runs across migration-to-redraw ratios at a fixed total switching rate."""
    if not 0.0 < total_switch_rate < 1.0:
        raise InvalidSimConfig(f"total switch rate must lie in (0, 1), got {total_switch_rate!r}")
    rows = []
    for ratio in ratios:
        lambda_m, lambda_r = split_rates(float(ratio), total_switch_rate)
        config = base.with_overrides(lambda_m=lambda_m, lambda_r=lambda_r)
        _, summary = run_batch(config, n_runs, seed_base, jobs=jobs, cache=cache)
        rows.append(
            {
                "ratio": float(ratio),
                "lambda_m": lambda_m,
                "lambda_r": lambda_r,
                "mean_growth": summary.mean_growth,
                "stdev_growth": summary.stdev_growth,
                "extinctions": summary.extinctions,
                "n_runs": summary.n_runs,
            }
        )
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)
