"""Heritable fixed point, steady-state shares and the equivalent growth rate.

The heritable component of long-run growth is the unique root x* above
``x_n - lambda_x`` of

    x = lambda_x * sum_k q_k x_k / (lambda_x + x - x_k)

and the steady-state share of ``x_k`` agents is
``lambda_x q_k / (lambda_x + x* - x_k)``.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from heritable_growth.errors import ComputationError, ValidationError
from heritable_growth.logger import logger
from heritable_growth.lottery import GrowthProcess, Lottery, mean

MAX_BISECTION_STEPS = 200
MAX_NEWTON_STEPS = 8


class NonPositiveLambda(ValidationError):
    """A redraw rate must be strictly positive and finite."""
    pass


class InvalidOrdering(ValidationError):
    """Binary rates must satisfy 0 <= x_low < x_high."""
    pass


class InvalidProbability(ValidationError):
    """A probability that must lie strictly inside (0, 1) does not."""
    pass


class NoBracket(ComputationError):
    """The fixed-point equation did not change sign on its bracket."""
    pass


@dataclass(frozen=True)
class SteadyState:
    """Solved heritable growth component and the limiting type shares."""

    x_star: float
    p_star: Tuple[float, ...]
    residual: float
    support: Tuple[float, ...] = ()

    def to_dict(self, g: Optional[float] = None) -> Dict[str, Any]:
        payload: Dict[str, Any] = {
            "x_star": self.x_star,
            "p_star": list(self.p_star),
            "residual": self.residual,
        }
        if g is not None:
            payload["g"] = g
        return payload


def solver_tolerance(x_n: float) -> float:
    """Absolute residual accepted by :func:`solve_x_star`."""
    return 1e-12 * max(1.0, x_n)


def _check_lambda(lambda_x: float) -> None:
    if not (math.isfinite(lambda_x) and lambda_x > 0.0):
        raise NonPositiveLambda(f"redraw rate must be positive and finite, got {lambda_x!r}")


def _residual(x: float, support: Sequence[float], probs: Sequence[float], lambda_x: float) -> float:
    """LHS minus RHS of the fixed-point equation; -inf left of the singularity."""
    total = 0.0
    for x_k, q_k in zip(support, probs):
        gap = lambda_x + x - x_k
        if gap <= 0.0:
            return -math.inf
        total += q_k * x_k / gap
    return x - lambda_x * total


def _slope(x: float, support: Sequence[float], probs: Sequence[float], lambda_x: float) -> float:
    total = 0.0
    for x_k, q_k in zip(support, probs):
        gap = lambda_x + x - x_k
        total += q_k * x_k / (gap * gap)
    return 1.0 + lambda_x * total


def _shares(x_star: float, support: Sequence[float], probs: Sequence[float], lambda_x: float) -> Tuple[float, ...]:
    raw = np.array(
        [lambda_x * q_k / (lambda_x + x_star - x_k) for x_k, q_k in zip(support, probs)]
    )
    # Analytically the shares sum to one at the root; the rescale only
    # removes the residual-sized drift.
    return tuple(float(v) for v in raw / raw.sum())


def solve_x_star(heritable: Lottery, lambda_x: float) -> SteadyState:
    """Solve the heritable fixed point by bracketed bisection.

    The bracket is ``(max(mu_x, x_n - lambda_x), x_n)``; the residual is
    increasing there, so the root is unique. Bisection runs until the
    residual falls below :func:`solver_tolerance`, then a safeguarded Newton
    polish drives the estimate to floating-point resolution.

    Args:
        heritable: Distribution of the heritable birth component
        lambda_x: Per-year redraw rate

    Returns:
        SteadyState with x*, p* and the absolute residual

    Raises:
        NonPositiveLambda: If lambda_x is not a positive finite number
        NoBracket: If the residual does not change sign (never for valid input)
    """
    _check_lambda(lambda_x)
    support, probs = heritable.support, heritable.probs
    if heritable.is_degenerate:
        return SteadyState(x_star=support[0], p_star=(1.0,), residual=0.0, support=support)

    x_n = support[-1]
    tol = solver_tolerance(x_n)
    low = max(mean(heritable), x_n - lambda_x)
    high = x_n

    f_high = _residual(high, support, probs, lambda_x)
    if not f_high > 0.0:
        raise NoBracket(f"residual at x_n is {f_high!r}, expected positive")
    f_low = _residual(low, support, probs, lambda_x)
    if f_low >= 0.0:
        # Only reachable through rounding when lambda_x dwarfs the spread:
        # the root then sits on the lower bound to machine precision.
        if f_low > tol:
            raise NoBracket(f"residual at lower bound {low!r} is {f_low!r}")
        logger.debug(f"Root on lower bound {low!r} (residual {f_low!r})")
        return SteadyState(
            x_star=low,
            p_star=_shares(low, support, probs, lambda_x),
            residual=abs(f_low),
            support=support,
        )

    x = 0.5 * (low + high)
    f_x = _residual(x, support, probs, lambda_x)
    steps = 0
    while steps < MAX_BISECTION_STEPS and abs(f_x) > tol:
        if f_x < 0.0:
            low = x
        else:
            high = x
        mid = 0.5 * (low + high)
        if mid == low or mid == high:
            break
        x = mid
        f_x = _residual(x, support, probs, lambda_x)
        steps += 1

    # Newton polish inside the bracket.
    for _ in range(MAX_NEWTON_STEPS):
        if f_x == 0.0:
            break
        candidate = x - f_x / _slope(x, support, probs, lambda_x)
        if not low < candidate < high:
            break
        f_candidate = _residual(candidate, support, probs, lambda_x)
        if abs(f_candidate) >= abs(f_x):
            break
        if f_candidate < 0.0:
            low = candidate
        else:
            high = candidate
        x, f_x = candidate, f_candidate

    residual = abs(f_x)
    logger.debug(
        f"solve_x_star: {steps} bisection steps, x*={x!r}, residual={residual!r}"
    )
    if residual > tol:
        logger.warning(
            f"Fixed point residual {residual!r} above tolerance {tol!r} at floating-point resolution"
        )
    return SteadyState(
        x_star=x,
        p_star=_shares(x, support, probs, lambda_x),
        residual=residual,
        support=support,
    )


def equivalent_growth_rate(process: GrowthProcess) -> float:
    """Long-run growth rate ``x* + mu_y + mu_z - delta`` of a growth process."""
    x_star = solve_x_star(process.heritable, process.lambda_x).x_star
    return x_star + process.mu_y + process.mu_z - process.delta


def naive_aggregate_rate(heritable: Lottery, delta: float) -> float:
    """Growth rate if the heritable lottery were aggregate (or idiosyncratic) risk."""
    return mean(heritable) - delta


def idiosyncratic_growth_rate(lottery: Lottery) -> float:
    """Growth rate of a birth lottery drawn afresh for every agent: its mean."""
    return mean(lottery)


def heritable_premium(heritable: Lottery, lambda_x: float) -> float:
    """Excess of x* over the mean rate; positive for nondegenerate lotteries."""
    return solve_x_star(heritable, lambda_x).x_star - mean(heritable)


def binary_closed_form(x_low: float, x_high: float, q_high: float, lambda_x: float) -> SteadyState:
    """Explicit steady state for a two-point heritable lottery.

    With ``d = x_high - x_low`` and
    ``s = sqrt((d - lambda_x)**2 + 4 q d lambda_x)`` the high-rate share is
    ``(d - lambda_x + s) / (2 d)`` and ``x* = x_low + d * p_high``, which
    equals ``mu + (d (1 - 2q) - lambda_x + s) / 2``. When ``lambda_x > d``
    the numerator is rationalised to ``4 q d lambda_x / (s - d + lambda_x)``
    to avoid cancellation.

    Raises:
        InvalidOrdering: Unless 0 <= x_low < x_high
        InvalidProbability: Unless 0 < q_high < 1
        NonPositiveLambda: Unless lambda_x > 0
    """
    if not (0.0 <= x_low < x_high and math.isfinite(x_high)):
        raise InvalidOrdering(f"need 0 <= x_low < x_high, got {x_low!r}, {x_high!r}")
    if not 0.0 < q_high < 1.0:
        raise InvalidProbability(f"q_high must lie in (0, 1), got {q_high!r}")
    _check_lambda(lambda_x)

    spread = x_high - x_low
    root = math.sqrt((spread - lambda_x) ** 2 + 4.0 * q_high * spread * lambda_x)
    if lambda_x > spread:
        p_high = 2.0 * q_high * lambda_x / (root - spread + lambda_x)
    else:
        p_high = (spread - lambda_x + root) / (2.0 * spread)
    x_star = x_low + spread * p_high

    support = (x_low, x_high)
    residual = abs(_residual(x_star, support, (1.0 - q_high, q_high), lambda_x))
    return SteadyState(
        x_star=x_star,
        p_star=(1.0 - p_high, p_high),
        residual=residual,
        support=support,
    )


def synchronous_growth_rate(r_low: float, r_high: float, q_low: float, lam: float) -> float:
    """Growth rate when every agent redraws together every ``1 / lam`` years.

    ``lam * ln(q_low e^{r_low/lam} + q_high e^{r_high/lam})``, evaluated with
    ``logaddexp`` so that small rates do not overflow.
    """
    _check_lambda(lam)
    if not 0.0 < q_low < 1.0:
        raise InvalidProbability(f"q_low must lie in (0, 1), got {q_low!r}")
    tau = 1.0 / lam
    log_sum = np.logaddexp(
        math.log(q_low) + r_low * tau,
        math.log1p(-q_low) + r_high * tau,
    )
    return float(log_sum) / tau


def growth_curve(
    r_low: float,
    r_high: float,
    q_high: float,
    lambdas: Iterable[float],
) -> pd.DataFrame:
    """Heritable growth rate of a binary lottery across redraw rates.

    Returns a frame with columns ``lambda, x_star, mu, r_h_minus_lambda,
    g_sync`` (the last is the synchronous-redraw benchmark).
    """
    lottery = Lottery((r_low, r_high), (1.0 - q_high, q_high))
    mu = mean(lottery)
    rows = []
    for lam in lambdas:
        lam = float(lam)
        rows.append(
            {
                "lambda": lam,
                "x_star": solve_x_star(lottery, lam).x_star,
                "mu": mu,
                "r_h_minus_lambda": r_high - lam,
                "g_sync": synchronous_growth_rate(r_low, r_high, 1.0 - q_high, lam),
            }
        )
    return pd.DataFrame(rows, columns=["lambda", "x_star", "mu", "r_h_minus_lambda", "g_sync"])


def lambda_grid(start: float, stop: float, count: int) -> np.ndarray:
    """Log-spaced redraw rates for curve sweeps."""
    if not (start > 0.0 and stop > 0.0 and count >= 1):
        raise ValidationError(f"invalid sweep {start!r}:{stop!r}:{count!r}")
    return np.geomspace(start, stop, count)
