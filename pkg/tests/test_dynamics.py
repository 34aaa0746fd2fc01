"""Tests for the share and mass integrators."""

import math

import numpy as np
import pytest

from heritable_growth.dynamics import (
    BothRatesZero,
    InvalidInitialState,
    StepTooLarge,
    integrate_dynasty_mass,
    integrate_linear_mass,
    integrate_mass_dynamics,
    integrate_share_dynamics,
    rk4_step,
    type_competition_path,
    type_competition_share,
)
from heritable_growth.errors import ValidationError
from heritable_growth.lottery import GrowthProcess, Lottery, normalized
from heritable_growth.solver import binary_closed_form, equivalent_growth_rate, solve_x_star


def test_rk4_step_on_exponential():
    y = rk4_step(lambda v: v, np.array([1.0]), 0.1)
    # Fourth-order Taylor polynomial of e^0.1
    assert y[0] == pytest.approx(1 + 0.1 + 0.005 + 0.1 ** 3 / 6 + 0.1 ** 4 / 24, rel=1e-15)


def test_rk4_step_rejects_non_positive_stage():
    with pytest.raises(StepTooLarge):
        rk4_step(lambda v: -10.0 * v, np.array([1.0]), 1.0)


def test_shares_converge_to_steady_state(rng):
    grid = np.linspace(0.0, 0.1, 101)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 6))
        lottery = normalized(np.sort(rng.choice(grid, size=n, replace=False)), rng.uniform(0.1, 1.0, size=n))
        lambda_x = float(rng.uniform(0.2, 1.0))
        p_star = np.array(solve_x_star(lottery, lambda_x).p_star)
        for _ in range(5):
            p0 = rng.dirichlet(np.ones(n))
            p0 = np.maximum(p0, 1e-3)
            p0 /= p0.sum()
            trajectory = integrate_share_dynamics(lottery, lambda_x, p0, 50.0 / lambda_x, dt=0.25)
            worst = max(worst, float(np.max(np.abs(trajectory.terminal - p_star))))
    assert worst <= 1e-6


def test_distance_to_steady_state_never_grows(rng):
    for _ in range(10):
        high = float(rng.uniform(0.01, 0.1))
        lottery = normalized([0.0, high], [1.0, float(rng.uniform(0.1, 9.0))])
        lambda_x = float(rng.uniform(0.01, 0.5))
        p_star = np.array(solve_x_star(lottery, lambda_x).p_star)
        start = float(rng.uniform(0.01, 0.99))
        trajectory = integrate_share_dynamics(lottery, lambda_x, [start, 1.0 - start], 30.0 / lambda_x, dt=0.5)
        distance = np.linalg.norm(trajectory.shares - p_star, axis=1)
        distance = distance[distance > 1e-9]
        assert np.all(np.diff(distance) <= 1e-12)

    # With more atoms the projective (Hilbert) distance is the one that contracts
    lottery = Lottery((0.0, 0.03, 0.05, 0.1), (0.4, 0.3, 0.2, 0.1))
    p_star = np.array(solve_x_star(lottery, 0.1).p_star)
    trajectory = integrate_share_dynamics(lottery, 0.1, [0.05, 0.05, 0.1, 0.8], 1000.0, dt=0.25)
    ratios = np.log(trajectory.shares / p_star)
    distance = ratios.max(axis=1) - ratios.min(axis=1)
    assert distance[-1] < 1e-9
    distance = distance[distance > 1e-8]
    assert np.all(np.diff(distance) <= 1e-10)


def test_share_integrator_is_fourth_order():
    lottery = Lottery((0.0, 1.0, 2.0), (1 / 3, 1 / 3, 1 / 3))
    p0 = [0.6, 0.3, 0.1]
    terminal = [
        integrate_share_dynamics(lottery, 1.0, p0, 5.0, dt=dt).terminal
        for dt in (0.2, 0.1, 0.05)
    ]
    coarse = np.max(np.abs(terminal[0] - terminal[1]))
    fine = np.max(np.abs(terminal[1] - terminal[2]))
    assert 8.0 <= coarse / fine <= 32.0


def test_fixed_point_start_gives_flat_trajectory(skewed_lottery):
    p_star = solve_x_star(skewed_lottery, 0.02).p_star
    trajectory = integrate_share_dynamics(skewed_lottery, 0.02, p_star, 100.0)
    assert np.allclose(trajectory.shares, p_star, atol=1e-12, rtol=0.0)


def test_shares_stay_on_simplex(skewed_lottery):
    trajectory = integrate_share_dynamics(skewed_lottery, 0.02, [0.5, 0.5], 500.0)
    assert np.allclose(trajectory.shares.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(trajectory.shares > 0.0)
    assert trajectory.mean_rates == pytest.approx(trajectory.shares @ np.array([0.0, 0.05]))


def test_step_size_fits_horizon():
    lottery = Lottery((0.0, 0.02), (0.5, 0.5))
    trajectory = integrate_share_dynamics(lottery, 0.02, [0.5, 0.5], 1.0, dt=0.3)
    assert trajectory.dt == pytest.approx(0.25)
    assert trajectory.times[-1] == pytest.approx(1.0)
    assert len(trajectory.times) == 5


def test_storage_is_decimated(baseline_lottery):
    trajectory = integrate_share_dynamics(baseline_lottery, 0.02, [0.5, 0.5], 2000.0, dt=0.1)
    assert len(trajectory.times) <= 10_000
    assert trajectory.times[0] == 0.0
    assert trajectory.times[-1] == pytest.approx(2000.0)


def test_large_step_is_halved():
    lottery = Lottery((0.0, 10.0), (0.5, 0.5))
    trajectory = integrate_share_dynamics(lottery, 10.0, [0.5, 0.5], 10.0, dt=5.0)
    assert trajectory.dt < 5.0
    with pytest.raises(StepTooLarge):
        integrate_share_dynamics(lottery, 10.0, [0.5, 0.5], 10.0, dt=5.0, max_halvings=0)


@pytest.mark.parametrize("p0", [[1.0], [0.0, 1.0], [0.6, 0.6], [-0.1, 1.1]])
def test_invalid_initial_shares(baseline_lottery, p0):
    with pytest.raises(InvalidInitialState):
        integrate_share_dynamics(baseline_lottery, 0.02, p0, 10.0)


@pytest.mark.parametrize("t_end, dt", [(0.0, 0.1), (10.0, 0.0), (math.inf, 0.1)])
def test_invalid_horizon(baseline_lottery, t_end, dt):
    with pytest.raises(ValidationError):
        integrate_share_dynamics(baseline_lottery, 0.02, [0.5, 0.5], t_end, dt=dt)


def test_mass_shares_match_share_dynamics(baseline_lottery):
    process = GrowthProcess(delta=0.014, heritable=baseline_lottery, lambda_x=0.02)
    mass = integrate_mass_dynamics(process, [0.5, 0.5], 200.0, dt=0.1)
    shares = integrate_share_dynamics(baseline_lottery, 0.02, [0.5, 0.5], 200.0, dt=0.1)
    assert np.array_equal(mass.times, shares.times)
    assert np.allclose(mass.shares, shares.shares, atol=1e-8, rtol=0.0)


def test_mass_grows_at_equivalent_rate(baseline_lottery):
    p_star = solve_x_star(baseline_lottery, 0.02).p_star
    process = GrowthProcess(delta=0.014, heritable=baseline_lottery, lambda_x=0.02)
    trajectory = integrate_mass_dynamics(process, p_star, 1000.0)
    assert trajectory.realized_growth == pytest.approx(1.4214e-4, abs=1e-7)
    assert math.isnan(trajectory.g_cum[0])


def test_degenerate_mass_grows_exponentially():
    trajectory = integrate_linear_mass(Lottery.point(0.05), 1.0, 0.01, [1.0], 10.0)
    assert trajectory.log_w[-1] == pytest.approx(0.4, rel=1e-9)
    assert trajectory.realized_growth == pytest.approx(0.04, rel=1e-9)


def test_long_horizons_are_rescaled():
    lottery = Lottery((0.0, 1.0), (0.5, 0.5))
    steady = binary_closed_form(0.0, 1.0, 0.5, 0.5)
    trajectory = integrate_linear_mass(lottery, 0.5, 0.0, steady.p_star, 300.0, dt=0.05)
    assert trajectory.log_scale[-1] > 0.0
    assert np.all(np.isfinite(trajectory.log_w))
    assert trajectory.realized_growth == pytest.approx(steady.x_star, abs=1e-6)
    assert np.all(trajectory.scaled_masses.sum(axis=1) <= 1e100 * 2)


def test_shrinking_mass_keeps_its_growth_rate():
    lottery = Lottery((0.0, 0.02), (0.5, 0.5))
    process = GrowthProcess(delta=0.1, heritable=lottery, lambda_x=0.02)
    p_star = solve_x_star(lottery, 0.02).p_star
    trajectory = integrate_mass_dynamics(process, p_star, 20_000.0)
    expected = equivalent_growth_rate(process)
    assert expected == pytest.approx(-0.0858578, abs=1e-6)
    assert trajectory.log_scale[-1] < 0.0
    assert np.all(np.isfinite(trajectory.log_w))
    assert trajectory.realized_growth == pytest.approx(expected, abs=1e-8)
    assert trajectory.log_w[-1] == pytest.approx(expected * 20_000.0, rel=1e-6)

    dynasty = integrate_dynasty_mass(lottery, 0.01, 0.01, 0.1, p_star, 20_000.0)
    assert dynasty.realized_growth == pytest.approx(expected, abs=1e-8)


def test_mass_is_linear_in_initial_state(baseline_lottery):
    process = GrowthProcess(delta=0.014, heritable=baseline_lottery, lambda_x=0.02)
    single = integrate_mass_dynamics(process, [0.3, 0.7], 500.0)
    double = integrate_mass_dynamics(process, [0.6, 1.4], 500.0)
    assert np.allclose(double.masses, 2.0 * single.masses, rtol=1e-14, atol=0.0)
    assert np.allclose(double.g_cum[1:], single.g_cum[1:], rtol=0.0, atol=1e-15)


def test_death_rate_cancels_degenerate_birth_rate():
    trajectory = integrate_linear_mass(Lottery.point(0.03), 1.0, 0.03, [2.0], 1000.0)
    assert np.all(trajectory.masses == 2.0)
    assert np.all(trajectory.g_cum[1:] == 0.0)


def test_dynasty_mass_equals_combined_redraw(baseline_lottery):
    dynasty = integrate_dynasty_mass(baseline_lottery, 0.01, 0.01, 0.014, [0.5, 0.5], 500.0)
    process = GrowthProcess(delta=0.014, heritable=baseline_lottery, lambda_x=0.02)
    combined = integrate_mass_dynamics(process, [0.5, 0.5], 500.0)
    assert np.array_equal(dynasty.times, combined.times)
    assert np.array_equal(dynasty.scaled_masses, combined.scaled_masses)
    assert np.array_equal(dynasty.log_scale, combined.log_scale)


def test_dynasty_mass_needs_a_switching_rate(baseline_lottery):
    with pytest.raises(BothRatesZero):
        integrate_dynasty_mass(baseline_lottery, 0.0, 0.0, 0.014, [0.5, 0.5], 10.0)
    with pytest.raises(ValidationError):
        integrate_dynasty_mass(baseline_lottery, -0.01, 0.02, 0.014, [0.5, 0.5], 10.0)


def test_trajectory_frames(baseline_lottery):
    shares = integrate_share_dynamics(baseline_lottery, 0.02, [0.5, 0.5], 1.0).to_frame()
    assert list(shares.columns) == ["t", "p_1", "p_2", "x_bar"]
    process = GrowthProcess(delta=0.014, heritable=baseline_lottery, lambda_x=0.02)
    masses = integrate_mass_dynamics(process, [0.5, 0.5], 1.0).to_frame()
    assert list(masses.columns) == ["t", "w_1", "w_2", "log_w", "g_cum"]
    assert masses["w_1"].iloc[0] == 0.5


def test_trajectory_arrays_are_read_only(baseline_lottery):
    trajectory = integrate_share_dynamics(baseline_lottery, 0.02, [0.5, 0.5], 1.0)
    with pytest.raises(ValueError):
        trajectory.shares[0, 0] = 1.0


def test_type_competition():
    assert type_competition_share(0.01, 0.02, 0.0) == pytest.approx(0.5, abs=1e-15)
    assert type_competition_share(0.02, 0.01, 1e4) > 0.99
    assert type_competition_share(0.02, 0.01, 1e7) == pytest.approx(1.0)
    times = [0.0, 10.0, 100.0]
    path = type_competition_path(0.02, 0.01, times)
    assert path == pytest.approx([type_competition_share(0.02, 0.01, t) for t in times])
