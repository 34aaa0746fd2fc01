"""Continuum share and mass dynamics under heritable risk.

Shares follow ``dp_k/dt = (x_k - x_bar - lambda_x) p_k + lambda_x q_k`` and
masses follow the linear system
``dw_k/dt = (b_k - lambda_x - delta) w_k + lambda_x q_k w``. Both are
integrated with the classical fixed-step fourth-order Runge-Kutta scheme.
"""

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple

import numpy as np
import pandas as pd

from heritable_growth.errors import ComputationError, ValidationError
from heritable_growth.logger import logger
from heritable_growth.lottery import GrowthProcess, Lottery

DEFAULT_DT = 0.1
MAX_STEP_HALVINGS = 6
MAX_SAMPLES = 10_000
# Masses are rescaled (and the log of the factor carried separately) when the total
# leaves [1/RESCALE_THRESHOLD, RESCALE_THRESHOLD]
RESCALE_THRESHOLD = 1e100
SIMPLEX_TOLERANCE = 1e-9


class StepTooLarge(ComputationError):
    """An intermediate Runge-Kutta stage left the positive orthant."""
    pass


class InvalidInitialState(ValidationError):
    """Initial shares or masses violate their constraints."""
    pass


class BothRatesZero(ValidationError):
    """Migration and dynasty redraw rates cannot both be zero."""
    pass


Vector = np.ndarray
Rhs = Callable[[Vector], Vector]


def rk4_step(rhs: Rhs, y: Vector, h: float) -> Vector:
    """One classical Runge-Kutta step of an autonomous system; stages must stay positive."""
    k1 = rhs(y)
    y2 = y + 0.5 * h * k1
    _require_positive(y2)
    k2 = rhs(y2)
    y3 = y + 0.5 * h * k2
    _require_positive(y3)
    k3 = rhs(y3)
    y4 = y + h * k3
    _require_positive(y4)
    k4 = rhs(y4)
    y_next = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    _require_positive(y_next)
    return y_next


def _require_positive(y: Vector) -> None:
    if not np.all(y > 0.0):
        raise StepTooLarge("a Runge-Kutta stage produced a non-positive component")


def _sample_plan(t_end: float, dt: float, max_samples: int) -> Tuple[int, float, int]:
    if not (math.isfinite(t_end) and t_end > 0.0):
        raise ValidationError(f"t_end must be positive, got {t_end!r}")
    if not (math.isfinite(dt) and dt > 0.0):
        raise ValidationError(f"dt must be positive, got {dt!r}")
    n_steps = max(1, math.ceil(t_end / dt - 1e-9))
    h = t_end / n_steps
    stride = max(1, math.ceil(n_steps / max(1, max_samples - 1)))
    return n_steps, h, stride


def _with_step_halving(run: Callable[[float], "Trajectory"], dt: float, max_halvings: int):
    attempt_dt = dt
    for attempt in range(max_halvings + 1):
        try:
            return run(attempt_dt)
        except StepTooLarge:
            if attempt == max_halvings:
                raise
            logger.warning(f"Step dt={attempt_dt!r} too large, retrying with dt={attempt_dt / 2!r}")
            attempt_dt /= 2.0


@dataclass(frozen=True)
class ShareTrajectory:
    """Population shares over the heritable support through time."""

    times: np.ndarray
    shares: np.ndarray
    mean_rates: np.ndarray
    support: Tuple[float, ...]
    dt: float

    @property
    def terminal(self) -> np.ndarray:
        return self.shares[-1]

    def to_frame(self) -> pd.DataFrame:
        columns = {"t": self.times}
        for k in range(self.shares.shape[1]):
            columns[f"p_{k + 1}"] = self.shares[:, k]
        columns["x_bar"] = self.mean_rates
        return pd.DataFrame(columns)


@dataclass(frozen=True)
class MassTrajectory:
    """Masses per heritable rate, stored as a rescaled vector plus a log scale."""

    times: np.ndarray
    scaled_masses: np.ndarray
    log_scale: np.ndarray
    initial_total: float
    support: Tuple[float, ...]
    dt: float

    @property
    def masses(self) -> np.ndarray:
        return self.scaled_masses * np.exp(self.log_scale)[:, None]

    @property
    def log_w(self) -> np.ndarray:
        return np.log(self.scaled_masses.sum(axis=1)) + self.log_scale

    @property
    def shares(self) -> np.ndarray:
        return self.scaled_masses / self.scaled_masses.sum(axis=1, keepdims=True)

    @property
    def g_cum(self) -> np.ndarray:
        """Cumulative growth ``ln(w(t) / w(0)) / t``; undefined at t = 0."""
        with np.errstate(divide="ignore", invalid="ignore"):
            growth = (self.log_w - math.log(self.initial_total)) / self.times
        growth[self.times == 0.0] = np.nan
        return growth

    @property
    def realized_growth(self) -> float:
        return float(self.g_cum[-1])

    def to_frame(self) -> pd.DataFrame:
        masses = self.masses
        columns = {"t": self.times}
        for k in range(masses.shape[1]):
            columns[f"w_{k + 1}"] = masses[:, k]
        columns["log_w"] = self.log_w
        columns["g_cum"] = self.g_cum
        return pd.DataFrame(columns)


Trajectory = ShareTrajectory | MassTrajectory


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def integrate_share_dynamics(
    heritable: Lottery,
    lambda_x: float,
    p0: Sequence[float],
    t_end: float,
    dt: float = DEFAULT_DT,
    max_halvings: int = MAX_STEP_HALVINGS,
    max_samples: int = MAX_SAMPLES,
) -> ShareTrajectory:
    """Integrate the share dynamics from ``p0`` to ``t_end``.

    The step is halved (up to ``max_halvings`` times) when a stage leaves
    the open simplex; storage is thinned uniformly to ``max_samples`` rows.

    Raises:
        InvalidInitialState: If p0 is not a strictly positive probability vector
        StepTooLarge: If shares still go non-positive after the last halving
    """
    x = heritable.values
    q = heritable.weights
    start = np.asarray(p0, dtype=float)
    if start.shape != x.shape:
        raise InvalidInitialState(f"p0 has {start.size} entries, support has {x.size}")
    if not np.all(start > 0.0):
        raise InvalidInitialState("initial shares must be strictly positive")
    if abs(start.sum() - 1.0) > SIMPLEX_TOLERANCE:
        raise InvalidInitialState(f"initial shares sum to {start.sum()!r}")
    if not (math.isfinite(lambda_x) and lambda_x > 0.0):
        raise ValidationError(f"lambda_x must be positive, got {lambda_x!r}")

    def rhs(p: Vector) -> Vector:
        x_bar = p @ x
        return (x - x_bar - lambda_x) * p + lambda_x * q

    def run(step: float) -> ShareTrajectory:
        n_steps, h, stride = _sample_plan(t_end, step, max_samples)
        times, samples = [0.0], [start.copy()]
        p = start.copy()
        for i in range(1, n_steps + 1):
            p = rk4_step(rhs, p, h)
            if i % stride == 0 or i == n_steps:
                times.append(i * h)
                samples.append(p)
        shares = np.array(samples)
        return ShareTrajectory(
            times=_frozen(np.array(times)),
            shares=_frozen(shares),
            mean_rates=_frozen(shares @ x),
            support=heritable.support,
            dt=h,
        )

    trajectory = _with_step_halving(run, dt, max_halvings)
    drift = float(np.max(np.abs(trajectory.shares.sum(axis=1) - 1.0)))
    logger.debug(f"Share integration to t={t_end!r}: max simplex drift {drift!r}")
    return trajectory


def integrate_linear_mass(
    heritable: Lottery,
    lambda_x: float,
    delta: float,
    w0: Sequence[float],
    t_end: float,
    dt: float = DEFAULT_DT,
    birth_offset: float = 0.0,
    max_halvings: int = MAX_STEP_HALVINGS,
    max_samples: int = MAX_SAMPLES,
) -> MassTrajectory:
    """Integrate ``dw_k/dt = (x_k + birth_offset - lambda_x - delta) w_k + lambda_x q_k w``.

    ``birth_offset`` carries the idiosyncratic and aggregate means. Unlike
    :class:`GrowthProcess` this accepts degenerate heritable lotteries.
    """
    x = heritable.values
    q = heritable.weights
    start = np.asarray(w0, dtype=float)
    if start.shape != x.shape:
        raise InvalidInitialState(f"w0 has {start.size} entries, support has {x.size}")
    if not np.all(start > 0.0) or not np.all(np.isfinite(start)):
        raise InvalidInitialState("initial masses must be strictly positive and finite")
    if not (math.isfinite(lambda_x) and lambda_x >= 0.0):
        raise ValidationError(f"lambda_x must be non-negative, got {lambda_x!r}")

    own_rate = (x + birth_offset - delta) - lambda_x
    inflow = lambda_x * q

    def rhs(w: Vector) -> Vector:
        return own_rate * w + inflow * w.sum()

    def run(step: float) -> MassTrajectory:
        n_steps, h, stride = _sample_plan(t_end, step, max_samples)
        w = start.copy()
        scale = 0.0
        times, samples, scales = [0.0], [start.copy()], [0.0]
        for i in range(1, n_steps + 1):
            w = rk4_step(rhs, w, h)
            total = w.sum()
            if total > RESCALE_THRESHOLD or total < 1.0 / RESCALE_THRESHOLD:
                w = w / total
                scale += math.log(total)
            if i % stride == 0 or i == n_steps:
                times.append(i * h)
                samples.append(w)
                scales.append(scale)
        return MassTrajectory(
            times=_frozen(np.array(times)),
            scaled_masses=_frozen(np.array(samples)),
            log_scale=_frozen(np.array(scales)),
            initial_total=float(start.sum()),
            support=heritable.support,
            dt=h,
        )

    return _with_step_halving(run, dt, max_halvings)


def integrate_mass_dynamics(
    process: GrowthProcess,
    w0: Sequence[float],
    t_end: float,
    dt: float = DEFAULT_DT,
    max_halvings: int = MAX_STEP_HALVINGS,
    max_samples: int = MAX_SAMPLES,
) -> MassTrajectory:
    """Integrate the mass dynamics of a growth process.

    The aggregate component enters through its mean; its state path is not
    simulated. ``realized_growth`` on the result is ``ln(w(t_end)/w(0)) / t_end``.
    """
    return integrate_linear_mass(
        process.heritable,
        process.lambda_x,
        process.delta,
        w0,
        t_end,
        dt=dt,
        birth_offset=process.mu_y + process.mu_z,
        max_halvings=max_halvings,
        max_samples=max_samples,
    )


def integrate_dynasty_mass(
    heritable: Lottery,
    lambda_m: float,
    lambda_r: float,
    delta: float,
    w0: Sequence[float],
    t_end: float,
    dt: float = DEFAULT_DT,
    max_halvings: int = MAX_STEP_HALVINGS,
    max_samples: int = MAX_SAMPLES,
) -> MassTrajectory:
    """Mass dynamics with migration rate ``lambda_m`` and dynasty redraw rate ``lambda_r``.

    Both terms act on masses exactly as a single redraw rate
    ``lambda_m + lambda_r`` does, so the baseline integrator is reused.

    Raises:
        BothRatesZero: If lambda_m + lambda_r is zero
    """
    if lambda_m < 0.0 or lambda_r < 0.0:
        raise ValidationError(f"rates must be non-negative, got {lambda_m!r}, {lambda_r!r}")
    if lambda_m + lambda_r == 0.0:
        raise BothRatesZero("lambda_m + lambda_r must be positive")
    return integrate_linear_mass(
        heritable,
        lambda_m + lambda_r,
        delta,
        w0,
        t_end,
        dt=dt,
        max_halvings=max_halvings,
        max_samples=max_samples,
    )


def type_competition_share(g_theta: float, g_theta_prime: float, t: float) -> float:
    """Share of type theta after time t when both types start at one half."""
    a = g_theta * t
    b = g_theta_prime * t
    return float(np.exp(a - np.logaddexp(a, b)))


def type_competition_path(g_theta: float, g_theta_prime: float, times: Sequence[float]) -> np.ndarray:
    """Vectorised :func:`type_competition_share` over an array of times."""
    t = np.asarray(times, dtype=float)
    a = g_theta * t
    b = g_theta_prime * t
    return np.exp(a - np.logaddexp(a, b))
