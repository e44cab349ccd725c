import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rendezvous_cmdp.energy import (BatterySpec, ConsumptionHistogram, PowerBank, PowerCoefficients,
                                    StochasticParams, airspeed, bins_consumed, leg_energy_sample,
                                    leg_soc_distribution, power)

C = PowerCoefficients()
CALM = StochasticParams.degenerate()


def hand_power(v, w):
    # fitted coefficients written out longhand
    return -88.77 + 3.53 * v - 0.42 * v * v + 0.043 * v * v * v + 107.5 * w - 2.74 * v * w


@pytest.mark.parametrize("v,expected", [(10.0, 131.76), (14.0, 155.344)])
def test_power_spot_values(v, expected):
    assert power(v, 2.3) == pytest.approx(expected, rel=1e-9)


def test_power_best_endurance_below_best_range():
    p = power(9.8, 2.3)
    assert p == pytest.approx(hand_power(9.8, 2.3), rel=1e-9)
    assert p == pytest.approx(131.449, abs=5e-4)
    assert p < power(14.0, 2.3)


def test_power_is_clamped_at_zero():
    assert power(0.0, 0.0) == 0.0


@pytest.mark.parametrize("v,xi,psi,expected", [(14, 1.5, 0, 15.5), (14, 1.5, 180, 12.5), (9.8, 2.0, 90, 9.8)])
def test_airspeed(v, xi, psi, expected):
    assert airspeed(v, xi, psi) == pytest.approx(expected, abs=1e-12)


def test_degenerate_leg_energy():
    e = leg_energy_sample(1400, 14, CALM, C, np.random.default_rng(0))
    assert e == pytest.approx(15534.4, rel=1e-9)


def test_zero_length_leg_is_free():
    rng = np.random.default_rng(3)
    assert all(leg_energy_sample(0, 14, StochasticParams(), C, rng) == 0 for _ in range(20))


def test_leg_energy_seeded():
    a = leg_energy_sample(2000, 14, StochasticParams(), C, np.random.default_rng(11))
    b = leg_energy_sample(2000, 14, StochasticParams(), C, np.random.default_rng(11))
    assert a == b


def test_degenerate_soc_distribution_lands_in_bin_93():
    d = leg_soc_distribution(1400, 14, 100, BatterySpec(), CALM, C, n_samples=50)
    assert d.masses == {93: pytest.approx(1.0)} and d.failure == 0


def test_start_bin_one_fails_surely():
    d = leg_soc_distribution(1400, 14, 1, BatterySpec(), CALM, C, n_samples=50)
    assert d.failure == 1 and d.masses == {}


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 8000), st.sampled_from([9.8, 14.0]), st.integers(0, 100), st.integers(0, 2**32))
def test_soc_distribution_normalised(length, v, start, seed):
    d = leg_soc_distribution(length, v, start, BatterySpec(), StochasticParams(), C, n_samples=500, seed=seed)
    assert abs(d.total() - 1) <= 1e-9
    assert all(p >= 0 for p in d.masses.values())


def test_soc_distribution_seeded():
    args = (3000, 14, 80, BatterySpec(), StochasticParams(), C)
    assert leg_soc_distribution(*args, n_samples=2000, seed=5) == leg_soc_distribution(*args, n_samples=2000, seed=5)


def test_energy_increases_with_length():
    rng = np.random.default_rng(0)
    means = [np.mean([leg_energy_sample(l, 14, StochasticParams(), C, rng) for _ in range(400)])
             for l in (500, 1000, 2000, 4000)]
    assert np.all(np.diff(means) > 0)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 240000), st.integers(0, 100))
def test_floor_binning_never_overstates(e, start):
    bat = BatterySpec()
    k = int(bins_consumed(e, bat))
    if k <= start:
        assert bat.charge(start - k) <= bat.charge(start) - e + 1e-6
    else:
        assert e > bat.charge(start)


def test_failure_mass_converges():
    bat = BatterySpec()
    args = (8650, 14, 40, bat, StochasticParams(), C)
    p4 = leg_soc_distribution(*args, n_samples=10_000, seed=1).failure
    p5 = leg_soc_distribution(*args, n_samples=100_000, seed=2).failure
    assert 0.01 < p5 < 0.99  # the case has to be non-trivial
    assert abs(p4 - p5) < 3 * np.sqrt(p5 * (1 - p5) / 10_000)


def test_histogram_failure_monotone_in_soc():
    bank = PowerBank(StochasticParams(), C, BatterySpec(), 5000, 0)
    h = bank.histogram(9000, 14)
    fails = [h.failure_from(b) for b in range(101)]
    assert np.all(np.diff(fails) <= 0)
    assert bank.histogram(9000, 14) is h


def test_histogram_from_bin():
    h = ConsumptionHistogram.from_energy(np.array([100.0, 2500.0, 2500.0, 9000.0]), BatterySpec())
    end, p, fail = h.from_bin(2)
    assert list(end) == [1, 0] and list(p) == [0.25, 0.5] and fail == 0.25


def test_invalid_params():
    with pytest.raises(ValueError):
        StochasticParams(weight_std=-1)
    with pytest.raises(ValueError):
        BatterySpec(bins=1)
    with pytest.raises(ValueError):
        leg_energy_sample(-1, 14, CALM, C, np.random.default_rng())
