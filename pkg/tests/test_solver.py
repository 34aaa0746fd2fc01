"""Tests for the heritable fixed point and the closed-form binary solution."""

import math

import numpy as np
import pytest

from heritable_growth.errors import ValidationError
from heritable_growth.lottery import (
    GrowthProcess,
    Lottery,
    fosd_dominates,
    mean,
    mean_preserving_spread,
    normalized,
)
from heritable_growth.solver import (
    InvalidOrdering,
    InvalidProbability,
    NonPositiveLambda,
    binary_closed_form,
    equivalent_growth_rate,
    growth_curve,
    heritable_premium,
    idiosyncratic_growth_rate,
    lambda_grid,
    naive_aggregate_rate,
    solve_x_star,
    solver_tolerance,
    synchronous_growth_rate,
    _residual,
)


def random_lottery(rng, n, grid):
    support = np.sort(rng.choice(grid, size=n, replace=False))
    return normalized(support, rng.uniform(0.05, 1.0, size=n))


def test_baseline_steady_state(baseline_lottery):
    state = solve_x_star(baseline_lottery, 0.02)
    assert state.p_star[1] == pytest.approx(0.70711, abs=1e-5)
    assert state.x_star == pytest.approx(0.02 * math.sqrt(0.5), abs=1e-12)
    assert state.residual <= solver_tolerance(0.02)


def test_baseline_growth_rate(baseline_lottery):
    process = GrowthProcess(delta=0.014, heritable=baseline_lottery, lambda_x=0.02)
    assert equivalent_growth_rate(process) == pytest.approx(1.4214e-4, abs=1e-7)
    # The same lottery as aggregate or idiosyncratic risk shrinks the population
    assert naive_aggregate_rate(baseline_lottery, 0.014) == pytest.approx(-0.004)


def test_skewed_lottery(skewed_lottery):
    state = solve_x_star(skewed_lottery, 0.02)
    assert state.x_star == pytest.approx(0.0330278, abs=1e-7)
    assert state.x_star > mean(skewed_lottery)


def test_degenerate_lottery_solves_to_its_rate():
    state = solve_x_star(Lottery.point(0.05), 1.0)
    assert state.x_star == 0.05
    assert state.p_star == (1.0,)
    assert state.residual == 0.0


def test_closed_form_values():
    state = binary_closed_form(0.0, 0.05, 0.1, 0.02)
    assert state.x_star == pytest.approx(0.0330278, abs=1e-7)
    assert sum(state.p_star) == pytest.approx(1.0)
    assert binary_closed_form(0.0, 0.02, 0.5, 0.02).p_star[1] == pytest.approx(0.70711, abs=1e-5)


def test_closed_form_matches_solver(rng):
    worst = 0.0
    for _ in range(1000):
        x_low, x_high = np.sort(rng.uniform(0.0, 0.2, size=2))
        if x_high - x_low < 1e-6:
            continue
        q_high = float(rng.uniform(0.01, 0.99))
        lambda_x = float(10 ** rng.uniform(-4, 0))
        closed = binary_closed_form(float(x_low), float(x_high), q_high, lambda_x)
        solved = solve_x_star(Lottery((x_low, x_high), (1.0 - q_high, q_high)), lambda_x)
        worst = max(worst, abs(closed.x_star - solved.x_star))
    assert worst <= 1e-10


def test_closed_form_stable_when_lambda_dwarfs_spread():
    state = binary_closed_form(0.0, 1e-6, 0.5, 1e3)
    assert state.x_star > 0.5e-6
    assert state.x_star == pytest.approx(0.5e-6, rel=1e-6)


@pytest.mark.parametrize(
    "args, error",
    [
        ((0.05, 0.05, 0.5, 0.1), InvalidOrdering),
        ((0.06, 0.05, 0.5, 0.1), InvalidOrdering),
        ((-0.01, 0.05, 0.5, 0.1), InvalidOrdering),
        ((0.0, 0.05, 0.0, 0.1), InvalidProbability),
        ((0.0, 0.05, 1.0, 0.1), InvalidProbability),
        ((0.0, 0.05, 0.5, 0.0), NonPositiveLambda),
    ],
)
def test_closed_form_errors(args, error):
    with pytest.raises(error):
        binary_closed_form(*args)


@pytest.mark.parametrize("lambda_x", [0.0, -1.0, math.inf, math.nan])
def test_solver_rejects_bad_lambda(baseline_lottery, lambda_x):
    with pytest.raises(NonPositiveLambda):
        solve_x_star(baseline_lottery, lambda_x)


def test_root_bounds_on_random_lotteries(rng):
    grid = np.linspace(0.0, 0.2, 2001)
    for _ in range(10_000):
        lottery = random_lottery(rng, int(rng.integers(2, 9)), grid)
        lambda_x = float(10 ** rng.uniform(-3, 0))
        state = solve_x_star(lottery, lambda_x)
        x_n = lottery.highest
        assert max(mean(lottery), x_n - lambda_x) < state.x_star < x_n
        assert state.residual <= solver_tolerance(x_n)


def test_steady_state_shares(rng):
    grid = np.linspace(0.0, 0.2, 201)
    for _ in range(200):
        lottery = random_lottery(rng, int(rng.integers(2, 9)), grid)
        state = solve_x_star(lottery, float(rng.uniform(0.01, 1.0)))
        assert math.fsum(state.p_star) == pytest.approx(1.0, abs=1e-12)
        assert all(p > 0.0 for p in state.p_star)
        assert fosd_dominates(Lottery(lottery.support, state.p_star), lottery)


def test_residual_at_root_is_small(skewed_lottery):
    state = solve_x_star(skewed_lottery, 0.02)
    residual = _residual(state.x_star, skewed_lottery.support, skewed_lottery.probs, 0.02)
    assert abs(residual) <= solver_tolerance(0.05)
    assert _residual(0.05 - 0.03, skewed_lottery.support, skewed_lottery.probs, 0.02) == -math.inf


def test_spreads_raise_x_star(rng):
    grid = np.linspace(0.0, 0.2, 21)
    increases = []
    while len(increases) < 500:
        lottery = random_lottery(rng, int(rng.integers(3, 8)), grid)
        index = int(rng.integers(1, len(lottery) - 1))
        spread = mean_preserving_spread(lottery, index, float(rng.uniform(0.05, 0.95)))
        lambda_x = float(rng.uniform(0.01, 1.0))
        increases.append(solve_x_star(spread, lambda_x).x_star - solve_x_star(lottery, lambda_x).x_star)
    assert min(increases) > 1e-12


def test_lambda_limits(rng):
    grid = np.linspace(0.0, 0.2, 2001)
    for _ in range(100):
        lottery = random_lottery(rng, int(rng.integers(2, 9)), grid)
        x_n = lottery.highest
        fast = solve_x_star(lottery, 1e4 * x_n).x_star
        assert abs(fast - mean(lottery)) <= 1e-3 * x_n
        slow_lambda = 1e-4 * x_n
        slow = solve_x_star(lottery, slow_lambda).x_star
        assert abs(slow - x_n) <= 2 * slow_lambda


def test_binary_x_star_decreases_in_lambda(skewed_lottery):
    values = [solve_x_star(skewed_lottery, lam).x_star for lam in lambda_grid(1e-4, 1.0, 60)]
    assert all(later < earlier for earlier, later in zip(values, values[1:]))


def test_growth_curve_shape():
    frame = growth_curve(0.0, 0.05, 0.1, lambda_grid(1e-4, 1.0, 50))
    assert list(frame.columns) == ["lambda", "x_star", "mu", "r_h_minus_lambda", "g_sync"]
    assert len(frame) == 50
    x_star = frame["x_star"].to_numpy()
    assert np.all(np.diff(x_star) < 0.0)
    assert np.all(x_star > np.maximum(0.005, 0.05 - frame["lambda"].to_numpy()))
    assert abs(x_star[-1] - 0.005) <= 5e-4
    assert np.allclose(frame["mu"], 0.005)


def test_death_rate_is_additive(baseline_lottery):
    process = GrowthProcess(delta=0.014, heritable=baseline_lottery, lambda_x=0.02)
    drop = equivalent_growth_rate(process) - equivalent_growth_rate(process.with_delta(0.024))
    assert drop == pytest.approx(0.01, abs=1e-15)


def test_other_components_enter_through_means(baseline_lottery):
    process = GrowthProcess(
        delta=0.014,
        heritable=baseline_lottery,
        lambda_x=0.02,
        idiosyncratic=Lottery((0.0, 0.01), (0.5, 0.5)),
        aggregate=Lottery((0.0, 0.002), (0.5, 0.5)),
    )
    base = equivalent_growth_rate(GrowthProcess(delta=0.014, heritable=baseline_lottery, lambda_x=0.02))
    assert equivalent_growth_rate(process) == pytest.approx(base + 0.005 + 0.001, abs=1e-15)


def test_benchmark_rates(skewed_lottery):
    assert idiosyncratic_growth_rate(skewed_lottery) == pytest.approx(0.005)
    assert heritable_premium(skewed_lottery, 0.02) == pytest.approx(0.0330278 - 0.005, abs=1e-7)
    assert heritable_premium(Lottery.point(0.05), 0.5) == 0.0


def test_synchronous_growth_rate_limits():
    mu = 0.005
    slow = synchronous_growth_rate(0.0, 0.05, 0.9, 1e-4)
    assert slow == pytest.approx(0.05 + 1e-4 * math.log(0.1), abs=1e-9)
    fast = synchronous_growth_rate(0.0, 0.05, 0.9, 1e3)
    assert fast == pytest.approx(mu, abs=1e-6)
    assert mu < synchronous_growth_rate(0.0, 0.05, 0.9, 0.02) < 0.05
    with pytest.raises(InvalidProbability):
        synchronous_growth_rate(0.0, 0.05, 1.0, 0.02)


def test_lambda_grid():
    grid = lambda_grid(1e-4, 1.0, 5)
    assert grid[0] == pytest.approx(1e-4)
    assert grid[-1] == pytest.approx(1.0)
    assert np.allclose(np.diff(np.log10(grid)), 1.0)
    with pytest.raises(ValidationError):
        lambda_grid(0.0, 1.0, 5)


def test_steady_state_to_dict(baseline_lottery):
    payload = solve_x_star(baseline_lottery, 0.02).to_dict(g=1.0)
    assert set(payload) == {"x_star", "p_star", "residual", "g"}
    assert isinstance(payload["p_star"], list)
