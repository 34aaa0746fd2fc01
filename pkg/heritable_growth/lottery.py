"""Finite lotteries over non-negative rates and the growth process built from them."""

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from heritable_growth.errors import ValidationError

# Probabilities must sum to one within this absolute tolerance
PROB_SUM_TOLERANCE = 1e-12


class NonIncreasingSupport(ValidationError):
    """Support values are not strictly increasing."""
    pass


class NegativeRate(ValidationError):
    """A support value is below zero."""
    pass


class NonFiniteRate(ValidationError):
    """A support value or probability is NaN or infinite."""
    pass


class NonPositiveProb(ValidationError):
    """A probability is zero or negative."""
    pass


class ProbSumMismatch(ValidationError):
    """Probabilities do not sum to one."""
    pass


class LengthMismatch(ValidationError):
    """Support and probabilities have different lengths."""
    pass


class EmptyLottery(ValidationError):
    """A lottery needs at least one atom."""
    pass


class InfeasibleSpread(ValidationError):
    """The requested mean-preserving spread would leave the valid lottery set."""
    pass


class SupportMismatch(ValidationError):
    """Two distributions compared pointwise live on different supports."""
    pass


class InvalidGrowthProcess(ValidationError):
    """A growth process violates its parameter constraints."""
    pass


def _as_floats(values: Iterable[Any]) -> Tuple[float, ...]:
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class Lottery:
    """A discrete distribution over per-year rates.

    Instances are validated on construction and immutable afterwards.
    """

    support: Tuple[float, ...]
    probs: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "support", _as_floats(self.support))
        object.__setattr__(self, "probs", _as_floats(self.probs))
        validate(self)

    @classmethod
    def point(cls, rate: float) -> "Lottery":
        """Degenerate lottery paying ``rate`` with certainty."""
        return cls((rate,), (1.0,))

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.support, dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    @property
    def is_degenerate(self) -> bool:
        return len(self.support) == 1

    @property
    def highest(self) -> float:
        return self.support[-1]

    def __len__(self) -> int:
        return len(self.support)


def validate(lottery: Lottery) -> None:
    """Check every lottery invariant.

    Args:
        lottery: The lottery to check

    Raises:
        EmptyLottery, LengthMismatch, NonFiniteRate, NegativeRate,
        NonIncreasingSupport, NonPositiveProb, ProbSumMismatch
    """
    support, probs = lottery.support, lottery.probs
    if len(support) == 0:
        raise EmptyLottery("lottery has no atoms")
    if len(support) != len(probs):
        raise LengthMismatch(
            f"support has {len(support)} entries but probs has {len(probs)}"
        )
    for value in support + probs:
        if not math.isfinite(value):
            raise NonFiniteRate(f"non-finite entry {value!r}")
    for value in support:
        if value < 0.0:
            raise NegativeRate(f"negative rate {value!r} in support")
    for low, high in zip(support, support[1:]):
        if not high > low:
            raise NonIncreasingSupport(
                f"support must be strictly increasing, got {low!r} then {high!r}"
            )
    for p in probs:
        if not p > 0.0:
            raise NonPositiveProb(f"probability {p!r} is not strictly positive")
    total = math.fsum(probs)
    if abs(total - 1.0) > PROB_SUM_TOLERANCE:
        raise ProbSumMismatch(f"probabilities sum to {total!r}, expected 1")


def mean(lottery: Lottery) -> float:
    """Expected rate, the weighted sum of support values."""
    return math.fsum(x * p for x, p in zip(lottery.support, lottery.probs))


def variance(lottery: Lottery) -> float:
    mu = mean(lottery)
    return math.fsum(p * (x - mu) ** 2 for x, p in zip(lottery.support, lottery.probs))


def normalized(support: Sequence[float], probs: Sequence[float]) -> Lottery:
    """Build a lottery after rescaling ``probs`` to sum to one.

    Renormalization only ever happens through this function; the Lottery
    constructor rejects weights that are off by more than the tolerance.
    """
    weights = np.asarray(probs, dtype=float)
    total = weights.sum()
    if not total > 0.0:
        raise NonPositiveProb("probabilities must have a positive total")
    return Lottery(tuple(support), tuple(weights / total))


def merge_duplicates(support: Sequence[float], probs: Sequence[float]) -> Lottery:
    """Sort atoms and merge equal support values by summing their probabilities."""
    merged: Dict[float, float] = {}
    for x, p in zip(support, probs):
        merged[float(x)] = merged.get(float(x), 0.0) + float(p)
    values = sorted(merged)
    return Lottery(tuple(values), tuple(merged[v] for v in values))


def mean_preserving_spread(
    lottery: Lottery,
    index: int,
    widen: float,
    kind: str = "auto",
) -> Lottery:
    """Construct a mean-preserving spread of ``lottery``.

    Two constructions are available:

    - ``"split"`` moves a fraction ``widen`` (in (0, 1)) of the mass at an
      interior atom ``index`` to its two neighbours, in the proportions that
      keep the mean fixed.
    - ``"stretch"`` pulls a pair of adjacent atoms apart: the atom at
      ``index`` moves down by ``widen`` and the next one moves up by
      ``widen * p_index / p_next`` (for the last atom the roles flip and it
      moves up by ``widen``). A degenerate lottery at ``x`` becomes the
      fair coin over ``x - widen`` and ``x + widen``.

    ``"auto"`` picks ``split`` for interior atoms and ``stretch`` otherwise.

    Args:
        lottery: The lottery to spread
        index: Atom the construction is anchored at
        widen: Fraction of mass to move (split) or distance to move (stretch)
        kind: "auto", "split" or "stretch"

    Returns:
        A new Lottery with the same mean and a strictly larger variance

    Raises:
        InfeasibleSpread: If the result would not be a valid lottery
    """
    n = len(lottery)
    if not 0 <= index < n:
        raise InfeasibleSpread(f"index {index} outside 0..{n - 1}")
    if not (math.isfinite(widen) and widen > 0.0):
        raise InfeasibleSpread(f"widen must be positive, got {widen!r}")
    if kind == "auto":
        kind = "split" if 0 < index < n - 1 else "stretch"

    support = list(lottery.support)
    probs = list(lottery.probs)

    if kind == "split":
        if not 0 < index < n - 1:
            raise InfeasibleSpread("split needs an interior atom")
        if not widen < 1.0:
            raise InfeasibleSpread("split fraction must be below 1")
        left, mid, right = support[index - 1], support[index], support[index + 1]
        moved = widen * probs[index]
        probs[index] -= moved
        probs[index - 1] += moved * (right - mid) / (right - left)
        probs[index + 1] += moved * (mid - left) / (right - left)
    elif kind == "stretch":
        if n == 1:
            x = support[0]
            if x - widen < 0.0:
                raise InfeasibleSpread(f"spread of {widen!r} around {x!r} goes negative")
            support, probs = [x - widen, x + widen], [0.5, 0.5]
        elif index < n - 1:
            low, high = index, index + 1
            support[low] -= widen
            support[high] += widen * probs[low] / probs[high]
        else:
            low, high = index - 1, index
            support[high] += widen
            support[low] -= widen * probs[high] / probs[low]
    else:
        raise InfeasibleSpread(f"unknown spread kind {kind!r}")

    try:
        spread = Lottery(tuple(support), tuple(probs))
    except ValidationError as exc:
        raise InfeasibleSpread(f"spread leaves the valid lottery set: {exc}") from exc
    if not variance(spread) > variance(lottery):
        raise InfeasibleSpread("spread too small to change the variance")
    return spread


DistributionLike = Union[Lottery, Sequence[float], np.ndarray]


def fosd_dominates(p: DistributionLike, q: DistributionLike, tol: float = 1e-12) -> bool:
    """Return True iff ``p`` first-order stochastically dominates ``q``.

    Both arguments are distributions over the same increasing support, given
    either as Lottery instances or as aligned probability vectors. Dominance
    means the cumulative of ``p`` never exceeds that of ``q`` and is strictly
    below it somewhere (beyond ``tol``).
    """
    if isinstance(p, Lottery) and isinstance(q, Lottery):
        if p.support != q.support:
            raise SupportMismatch("distributions are defined on different supports")
    p_weights = p.weights if isinstance(p, Lottery) else np.asarray(p, dtype=float)
    q_weights = q.weights if isinstance(q, Lottery) else np.asarray(q, dtype=float)
    if p_weights.shape != q_weights.shape:
        raise SupportMismatch(
            f"distributions have {p_weights.size} and {q_weights.size} atoms"
        )
    # Last entry is the total mass; only the proper partial sums matter.
    cum_p = np.cumsum(p_weights)[:-1]
    cum_q = np.cumsum(q_weights)[:-1]
    if np.any(cum_p > cum_q + tol):
        return False
    return bool(np.any(cum_p < cum_q - tol))


def _parse_floats(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise ValidationError(f"cannot parse number list {text!r}") from exc


def parse_lottery_literal(text: str) -> Lottery:
    """Parse ``support=0,0.02 probs=0.5,0.5`` (or the JSON object form)."""
    stripped = text.strip()
    if stripped.startswith("{"):
        return lottery_from_json(stripped)
    fields: Dict[str, List[float]] = {}
    for token in stripped.split():
        key, sep, value = token.partition("=")
        if not sep or key not in ("support", "probs"):
            raise ValidationError(f"unexpected lottery token {token!r}")
        fields[key] = _parse_floats(value)
    if set(fields) != {"support", "probs"}:
        raise ValidationError("lottery literal needs both support= and probs=")
    return Lottery(tuple(fields["support"]), tuple(fields["probs"]))


def lottery_from_json(data: Union[str, Dict[str, Any]]) -> Lottery:
    """Build a lottery from ``{"support": [...], "probs": [...]}``."""
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid lottery JSON: {exc}") from exc
    if not isinstance(data, dict) or "support" not in data or "probs" not in data:
        raise ValidationError("lottery JSON needs 'support' and 'probs' keys")
    return Lottery(tuple(data["support"]), tuple(data["probs"]))


def lottery_to_json(lottery: Lottery) -> Dict[str, List[float]]:
    return {"support": list(lottery.support), "probs": list(lottery.probs)}


ZERO = Lottery.point(0.0)


@dataclass(frozen=True)
class GrowthProcess:
    """Death rate plus heritable, idiosyncratic and aggregate birth components.

    The idiosyncratic and aggregate components default to a certain zero,
    which is the setting of the dynasty simulations.
    """

    delta: float
    heritable: Lottery
    lambda_x: float
    idiosyncratic: Lottery = field(default=ZERO)
    lambda_y: float = 1.0
    aggregate: Lottery = field(default=ZERO)
    lambda_z: float = 1.0

    def __post_init__(self):
        for name in ("delta", "lambda_x", "lambda_y", "lambda_z"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InvalidGrowthProcess(f"{name} must be finite, got {value!r}")
        if self.delta < 0.0:
            raise InvalidGrowthProcess(f"death rate must be >= 0, got {self.delta!r}")
        for name in ("lambda_x", "lambda_y", "lambda_z"):
            if not getattr(self, name) > 0.0:
                raise InvalidGrowthProcess(f"{name} must be > 0, got {getattr(self, name)!r}")
        if len(self.heritable) < 2:
            raise InvalidGrowthProcess("heritable lottery needs at least two atoms")

    @property
    def mu_y(self) -> float:
        return mean(self.idiosyncratic)

    @property
    def mu_z(self) -> float:
        return mean(self.aggregate)

    def with_delta(self, delta: float) -> "GrowthProcess":
        return replace(self, delta=delta)
