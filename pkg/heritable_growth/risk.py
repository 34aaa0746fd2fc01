"""Growth-rate preferences over consumption lotteries.

Consumption maps into a fully heritable birth rate through ``psi``. A type
"prefers" a lottery when the growth rate it induces exceeds the growth rate
of consuming the lottery's mean for sure.
"""

import math
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, Optional, Union

from heritable_growth.errors import ValidationError
from heritable_growth.logger import logger
from heritable_growth.lottery import Lottery, mean, merge_duplicates
from heritable_growth.solver import solve_x_star

# Below this exponent c**beta no longer resolves the small-beta asymptotics
BETA_FLOOR = 1e-6
BETA_TOLERANCE = 1e-10
MAX_BETA_STEPS = 200


class InvalidUtility(ValidationError):
    """The power exponent must lie in (0, 1]."""
    pass


class NonPositiveConsumption(ValidationError):
    """Consumption lotteries need strictly positive outcomes."""
    pass


@dataclass(frozen=True)
class PowerUtility:
    """Fertility map ``psi(c) = c ** beta``."""

    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.beta) and 0.0 < self.beta <= 1.0):
            raise InvalidUtility(f"beta must lie in (0, 1], got {self.beta!r}")

    def __call__(self, c: float) -> float:
        return c ** self.beta


FertilityMap = Union[PowerUtility, Callable[[float], float]]


@dataclass(frozen=True)
class ConsumptionLottery:
    lottery: Lottery

    def __post_init__(self):
        if self.lottery.support[0] <= 0.0:
            raise NonPositiveConsumption(
                f"consumption outcomes must be positive, got {self.lottery.support[0]!r}"
            )

    @property
    def mean(self) -> float:
        return mean(self.lottery)

    @property
    def maximum(self) -> float:
        return self.lottery.highest


def fertility_lottery(consumption: ConsumptionLottery, psi: FertilityMap) -> Lottery:
    """Push consumption through ``psi``; outcomes that coincide are merged."""
    lottery = consumption.lottery
    return merge_duplicates([psi(c) for c in lottery.support], lottery.probs)


def growth_under_utility(consumption: ConsumptionLottery, psi: FertilityMap, lambda_x: float) -> float:
    """Heritable growth rate induced by consuming the lottery."""
    return solve_x_star(fertility_lottery(consumption, psi), lambda_x).x_star


def prefers_lottery(consumption: ConsumptionLottery, psi: FertilityMap, lambda_x: float) -> bool:
    """True iff the lottery grows strictly faster than its mean consumed for sure."""
    return growth_under_utility(consumption, psi, lambda_x) > psi(consumption.mean)


def _preference_gap(consumption: ConsumptionLottery, beta: float, lambda_x: float) -> float:
    psi = PowerUtility(beta)
    return growth_under_utility(consumption, psi, lambda_x) - psi(consumption.mean)


def beta_threshold(
    consumption: ConsumptionLottery,
    lambda_x: float,
    beta_low: float = BETA_FLOOR,
    beta_high: float = 1.0,
) -> Optional[float]:
    """Locate an exponent where the preference for the lottery flips.

    Bisects on beta between ``beta_low`` (where the mean should win) and
    ``beta_high`` (where the lottery should win).

    Returns:
        A beta with ``|gap| <= 1e-10``, or None when the preference does not
        change sign on the bracket (always None for degenerate lotteries)
    """
    if consumption.lottery.is_degenerate:
        return None
    gap_low = _preference_gap(consumption, beta_low, lambda_x)
    gap_high = _preference_gap(consumption, beta_high, lambda_x)
    if not (gap_low <= 0.0 < gap_high):
        logger.info(
            f"No preference flip on [{beta_low!r}, {beta_high!r}] (gaps {gap_low!r}, {gap_high!r})"
        )
        return None

    low, high = beta_low, beta_high
    beta = 0.5 * (low + high)
    for _ in range(MAX_BETA_STEPS):
        gap = _preference_gap(consumption, beta, lambda_x)
        if abs(gap) <= BETA_TOLERANCE:
            break
        if gap > 0.0:
            high = beta
        else:
            low = beta
        midpoint = 0.5 * (low + high)
        if midpoint == beta:
            break
        beta = midpoint
    return beta


def skewness_sufficient_condition(
    consumption: ConsumptionLottery, psi: FertilityMap, lambda_x: float
) -> bool:
    """``psi(m) - lambda_x > psi(c_bar)``, which guarantees the lottery is preferred."""
    return psi(consumption.maximum) - lambda_x > psi(consumption.mean)


@dataclass(frozen=True)
class RiskReport:
    beta: float
    lambda_x: float
    lottery_growth: float
    mean_growth: float
    prefers_lottery: bool
    skewness_sufficient: bool
    beta_threshold: Optional[float]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def assess(consumption: ConsumptionLottery, beta: float, lambda_x: float) -> RiskReport:
    """Evaluate every comparison for one lottery, exponent and redraw rate."""
    psi = PowerUtility(beta)
    lottery_growth = growth_under_utility(consumption, psi, lambda_x)
    mean_growth = psi(consumption.mean)
    return RiskReport(
        beta=beta,
        lambda_x=lambda_x,
        lottery_growth=lottery_growth,
        mean_growth=mean_growth,
        prefers_lottery=lottery_growth > mean_growth,
        skewness_sufficient=skewness_sufficient_condition(consumption, psi, lambda_x),
        beta_threshold=beta_threshold(consumption, lambda_x),
    )
