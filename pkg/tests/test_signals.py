import numpy as np
import pytest

from stiffnet import signals as sig
from stiffnet.signals import PrbsConfig, Pwl, RecordParams


# -- PRBS ------------------------------------------------------------------


def brute_force_period(bits):
    n = len(bits)
    for p in range(1, n):
        if all(bits[i] == bits[i + p] for i in range(n - p)):
            return p
    return n


def test_prbs7_period_is_127():
    bits = sig.gen_prbs(PrbsConfig(register_length=7, seed=1, n_bits=300))
    assert brute_force_period(list(bits)) == 127


def test_prbs7_one_period_balance():
    bits = sig.gen_prbs(PrbsConfig(register_length=7, seed=0x5A, n_bits=127))
    assert int(bits.sum()) == 64
    assert int((bits == 0).sum()) == 63


def test_prbs_deterministic():
    cfg = PrbsConfig(register_length=7, seed=17, n_bits=200)
    np.testing.assert_array_equal(sig.gen_prbs(cfg), sig.gen_prbs(cfg))


def test_prbs_zero_seed_rejected():
    with pytest.raises(ValueError, match="seed"):
        PrbsConfig(register_length=7, seed=0)
    with pytest.raises(ValueError, match="seed"):
        PrbsConfig(register_length=7, seed=128)  # masks to zero


@pytest.mark.parametrize("seed", [1, 2, 63, 127])
def test_prbs7_state_sequence_is_maximal(seed):
    states = sig.lfsr_states(7, seed, 127)
    assert set(states.tolist()) == set(range(1, 128))


# -- bits_to_pwl -----------------------------------------------------------


def test_constant_ones_flat_after_first_edge():
    pwl = sig.bits_to_pwl([1, 1, 1], bit_time=100e-9, rise=25e-9, fall=25e-9,
                          v_lo=0.0, v_hi=1.0)
    t = np.linspace(25e-9, 300e-9, 200)
    np.testing.assert_allclose(pwl.sample(t), 1.0, atol=1e-15)


def test_ramp_midpoint_value():
    pwl = sig.bits_to_pwl([0, 1], bit_time=100e-9, rise=25e-9, fall=25e-9,
                          v_lo=0.0, v_hi=1.0)
    assert pwl.sample(np.array([112.5e-9]))[0] == pytest.approx(0.5, abs=1e-12)


def test_random_bits_bounded_by_rails():
    rng = np.random.default_rng(7)
    bits = rng.integers(0, 2, size=40)
    pwl = sig.bits_to_pwl(bits, bit_time=100e-9, rise=22e-9, fall=28e-9,
                          v_lo=-0.5, v_hi=0.5)
    t = np.linspace(0.0, 41 * 100e-9, 20000)
    s = pwl.sample(t)
    assert s.min() >= -0.5 and s.max() <= 0.5


def test_excessive_edges_rejected():
    with pytest.raises(ValueError, match="bit time"):
        sig.bits_to_pwl([0, 1], bit_time=40e-9, rise=25e-9, fall=25e-9)


def test_pwl_validation():
    with pytest.raises(ValueError, match="t=0"):
        Pwl(np.array([1e-9, 2e-9]), np.array([0.0, 1.0]))
    with pytest.raises(ValueError, match="increasing"):
        Pwl(np.array([0.0, 2e-9, 2e-9]), np.array([0.0, 1.0, 0.5]))


# -- differential pair ------------------------------------------------------


def test_zero_differential_sits_at_common_mode():
    pwl = Pwl(np.array([0.0, 1e-6]), np.array([0.0, 0.0]))
    vp, vm = sig.differential_pair(pwl, v_cm=0.45, v_dm=0.2)
    assert np.all(vp.values == 0.45) and np.all(vm.values == 0.45)


def test_differential_rails_arithmetic():
    pwl = Pwl(np.array([0.0, 1e-6]), np.array([0.5, 0.5]))
    vp, vm = sig.differential_pair(pwl, v_cm=0.45, v_dm=0.2)
    np.testing.assert_allclose(vp.values, 0.55)
    np.testing.assert_allclose(vm.values, 0.35)


def test_differential_common_mode_invariant():
    rng = np.random.default_rng(11)
    times = np.concatenate([[0.0], np.sort(rng.uniform(1e-9, 1e-6, 30))])
    values = rng.uniform(-0.5, 0.5, 31)
    vp, vm = sig.differential_pair(Pwl(times, values), v_cm=0.45, v_dm=0.22)
    t = np.linspace(0, 1e-6, 5000)
    assert np.max(np.abs(vp.sample(t) + vm.sample(t) - 0.9)) < 1e-12


# -- channel filter ----------------------------------------------------------


def test_channel_dc_gain():
    # (1 + x)e^-x drops below 1e-3 at x ~ 9.24, so settle is ~10/w0 for a
    # critically damped pair (5/w0 only holds for a single pole).
    f_cut = 175e6
    w0 = 2 * np.pi * f_cut
    dt = 0.25e-9
    n = int(np.ceil(12.0 / w0 / dt))
    y = sig.channel_filter(np.full(n, 0.37), dt, f_cut)
    settle = int(np.ceil(10.0 / w0 / dt))
    assert np.all(np.abs(y[settle:] - 0.37) < 0.001 * 0.37)


def test_channel_step_matches_closed_form():
    f_cut = 175e6
    w0 = 2 * np.pi * f_cut
    dt = 0.25e-9
    n = 4000
    y = sig.channel_filter(np.ones(n), dt, f_cut)
    t = np.arange(n) * dt
    expected = 1.0 - (1.0 + w0 * t) * np.exp(-w0 * t)
    assert np.max(np.abs(y - expected)) < 1e-6


def test_channel_zero_input():
    y = sig.channel_filter(np.zeros(100), 0.25e-9, 175e6)
    np.testing.assert_array_equal(y, np.zeros(100))


def test_channel_linearity():
    rng = np.random.default_rng(3)
    x1 = rng.normal(size=2000)
    x2 = rng.normal(size=2000)
    a, b = 1.7, -0.3
    lhs = sig.channel_filter(a * x1 + b * x2, 0.25e-9, 175e6)
    rhs = a * sig.channel_filter(x1, 0.25e-9, 175e6) + b * sig.channel_filter(x2, 0.25e-9, 175e6)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


# -- clock -------------------------------------------------------------------


def _params(clk_period, clk_phase):
    return RecordParams(
        bit_time=100e-9, edge_frac=0.25, v_cm=0.45, v_dm=0.2,
        clk_period=clk_period, clk_phase=clk_phase, clk_edge=2.5e-9,
        r_load=5.0, c_load=100e-12, rng_seed=1,
    )


def rising_edge_starts(pwl):
    starts = []
    for i in range(len(pwl.times) - 1):
        if pwl.values[i] == sig.CLK_LOW and pwl.values[i + 1] == sig.CLK_HIGH:
            starts.append(pwl.times[i])
    return np.array(starts)


def test_clock_phase_zero_edge_times():
    clk = sig.gen_clock(_params(60e-9, 0.0), duration=150e-9)
    np.testing.assert_allclose(rising_edge_starts(clk), [0.0, 60e-9, 120e-9], atol=1e-18)


def test_clock_phase_180_delays_half_period():
    clk = sig.gen_clock(_params(60e-9, 180.0), duration=150e-9)
    starts = rising_edge_starts(clk)
    assert starts[0] == pytest.approx(30e-9, abs=1e-18)


def test_clock_edge_count_over_record():
    # oracle: floor((duration - delay) / period) + 1 edge starts in [0, duration)
    duration, period, phase = 1250e-9, 57.5e-9, 0.0
    delay = phase / 360.0 * period
    expected = int(np.floor((duration - delay) / period)) + 1
    assert expected == 22
    clk = sig.gen_clock(_params(period, phase), duration=duration)
    starts = rising_edge_starts(clk)
    assert np.sum(starts < duration) == 22


def test_clock_duty_cycle_and_rails():
    clk = sig.gen_clock(_params(57.5e-9, 90.0), duration=1250e-9)
    t = np.arange(0.0, 1250e-9, 0.05e-9)
    s = clk.sample(t)
    assert s.min() >= 0.0 and s.max() <= 0.9
    # 50% duty: high and low dwell times match within edge-time granularity
    high = np.mean(s > 0.45)
    assert abs(high - 0.5) < 0.03


def test_clock_edge_must_fit_half_period():
    # valid RecordParams can never violate this, so poke the guard directly
    from types import SimpleNamespace

    bad = SimpleNamespace(clk_period=4e-9, clk_phase=0.0, clk_edge=2.5e-9)
    with pytest.raises(ValueError, match="half"):
        sig.gen_clock(bad, duration=100e-9)


# -- parameter sampling -------------------------------------------------------


def test_sample_params_deterministic():
    assert sig.sample_params(42, 7) == sig.sample_params(42, 7)
    assert sig.sample_params(42, 7) != sig.sample_params(42, 8)


def test_sample_params_monte_carlo_ranges():
    draws = np.array([sig.sample_params(1, i).bit_time for i in range(10_000)])
    assert draws.min() >= 50e-9
    assert draws.max() <= 150e-9
    assert abs(draws.mean() - 100e-9) < 0.02 * 100e-9


def test_common_mode_is_constant():
    for i in range(50):
        assert sig.sample_params(3, i).v_cm == 0.45


def test_params_validation():
    with pytest.raises(ValueError, match="bit_time"):
        RecordParams(bit_time=10e-9, edge_frac=0.25, v_cm=0.45, v_dm=0.2,
                     clk_period=57e-9, clk_phase=0.0, clk_edge=2.5e-9,
                     r_load=5.0, c_load=100e-12, rng_seed=1)
