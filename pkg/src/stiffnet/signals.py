"""Randomized stimulus synthesis: PRBS source, trapezoidal shaping, lossy
channel, and the evaluation clock.

Every function here is a pure function of its arguments; per-record
randomness comes from a generator keyed on (master_seed, record_index),
so records are independently reproducible and generation parallelizes
trivially.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

# Uniform sampling ranges for one record's randomization.
BIT_TIME_RANGE = (50e-9, 150e-9)
EDGE_FRAC_RANGE = (0.20, 0.30)
V_COMMON = 0.45
V_DIFF_RANGE = (0.15, 0.25)
CLK_PERIOD_RANGE = (55e-9, 60e-9)
CLK_PHASE_RANGE = (0.0, 180.0)
CLK_EDGE_TIME = 2.5e-9
R_LOAD_RANGE = (0.0, 10.0)
C_LOAD_RANGE = (90e-12, 110e-12)

CLK_LOW = 0.0
CLK_HIGH = 0.9

# Maximal-length LFSR tap pairs, x^n + x^m + 1.
_MAXIMAL_TAPS = {
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    9: (9, 5),
    11: (11, 9),
    15: (15, 14),
}


@dataclass(frozen=True)
class PrbsConfig:
    """Linear-feedback shift register run configuration."""

    register_length: int = 7
    seed: int = 1
    n_bits: int = 127

    def __post_init__(self):
        if self.register_length not in _MAXIMAL_TAPS:
            raise ValueError(
                f"no maximal tap table for register length {self.register_length}"
            )
        if self.seed % (1 << self.register_length) == 0:
            raise ValueError("LFSR seed must be nonzero (all-zero state is absorbing)")
        if self.n_bits < 0:
            raise ValueError("n_bits must be nonnegative")


def lfsr_states(register_length: int, seed: int, n_steps: int) -> np.ndarray:
    """Successive register states, starting from the seed state."""
    taps = _MAXIMAL_TAPS[register_length]
    mask = (1 << register_length) - 1
    state = seed & mask
    states = np.empty(n_steps, dtype=np.int64)
    for i in range(n_steps):
        states[i] = state
        fb = 0
        for tap in taps:
            fb ^= state >> (tap - 1)
        state = ((state << 1) | (fb & 1)) & mask
    return states


def gen_prbs(cfg: PrbsConfig) -> np.ndarray:
    """Maximal-length PRBS bits (0/1) from a Fibonacci LFSR."""
    taps = _MAXIMAL_TAPS[cfg.register_length]
    mask = (1 << cfg.register_length) - 1
    state = cfg.seed & mask
    bits = np.empty(cfg.n_bits, dtype=np.uint8)
    for i in range(cfg.n_bits):
        fb = 0
        for tap in taps:
            fb ^= state >> (tap - 1)
        fb &= 1
        state = ((state << 1) | fb) & mask
        bits[i] = fb
    return bits


@dataclass(frozen=True)
class Pwl:
    """Piecewise-linear waveform; samples beyond the last breakpoint hold."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if times.ndim != 1 or times.shape != values.shape:
            raise ValueError("breakpoint arrays must be 1-d and equal length")
        if times.size == 0 or times[0] != 0.0:
            raise ValueError("first breakpoint must be at t=0")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("breakpoint times must be strictly increasing")

    def sample(self, t: np.ndarray) -> np.ndarray:
        return np.interp(t, self.times, self.values)

    @property
    def end_time(self) -> float:
        return float(self.times[-1])


def bits_to_pwl(bits, bit_time: float, rise: float, fall: float,
                v_lo: float = 0.0, v_hi: float = 1.0) -> Pwl:
    """Trapezoidal waveform for a bit stream, one level per bit slot.

    The waveform starts at v_lo; each bit whose level differs from the
    current one launches a ramp at its slot boundary, taking exactly
    ``rise`` (upward) or ``fall`` (downward) seconds.
    """
    if rise < 0 or fall < 0:
        raise ValueError("rise and fall must be nonnegative")
    if rise + fall > bit_time:
        raise ValueError(
            f"rise+fall ({rise + fall:.3e}s) exceeds the bit time ({bit_time:.3e}s)"
        )
    times = [0.0]
    values = [v_lo]
    level = v_lo
    for k, bit in enumerate(bits):
        target = v_hi if bit else v_lo
        if target == level:
            continue
        t0 = k * bit_time
        ramp = rise if target > level else fall
        if t0 > times[-1]:
            times.append(t0)
            values.append(level)
        times.append(t0 + ramp)
        values.append(target)
        level = target
    return Pwl(np.array(times), np.array(values))


def differential_pair(pwl: Pwl, v_cm: float, v_dm: float) -> tuple[Pwl, Pwl]:
    """Map a normalized waveform onto complementary rails around v_cm."""
    vin_p = Pwl(pwl.times.copy(), v_cm + v_dm * pwl.values)
    vin_m = Pwl(pwl.times.copy(), v_cm - v_dm * pwl.values)
    return vin_p, vin_m


def channel_filter(samples: np.ndarray, dt: float, f_cut: float) -> np.ndarray:
    """Critically damped second-order low-pass, DC gain 1.

    Discretized exactly under a zero-order hold: for A = [[0,1],
    [-w^2,-2w]] the matrix (A + wI) is nilpotent, so e^{Ah} has the
    closed form used below and the filter reduces to a biquad run by
    ``lfilter`` from zero initial state.
    """
    if dt <= 0 or f_cut <= 0:
        raise ValueError("dt and f_cut must be positive")
    w = 2.0 * np.pi * f_cut
    a = w * dt
    e = np.exp(-a)
    num = [0.0, 1.0 - e * (1.0 + a), e * (e - 1.0 + a)]
    den = [1.0, -2.0 * e, e * e]
    return lfilter(num, den, np.asarray(samples, dtype=np.float64))


@dataclass(frozen=True)
class RecordParams:
    """One record's sampled randomization."""

    bit_time: float
    edge_frac: float
    v_cm: float
    v_dm: float
    clk_period: float
    clk_phase: float
    clk_edge: float
    r_load: float
    c_load: float
    rng_seed: int

    _RANGES = {
        "bit_time": BIT_TIME_RANGE,
        "edge_frac": EDGE_FRAC_RANGE,
        "v_cm": (V_COMMON, V_COMMON),
        "v_dm": V_DIFF_RANGE,
        "clk_period": CLK_PERIOD_RANGE,
        "clk_phase": CLK_PHASE_RANGE,
        "clk_edge": (CLK_EDGE_TIME, CLK_EDGE_TIME),
        "r_load": R_LOAD_RANGE,
        "c_load": C_LOAD_RANGE,
    }

    def __post_init__(self):
        for field, (lo, hi) in self._RANGES.items():
            v = getattr(self, field)
            if not lo <= v <= hi:
                raise ValueError(f"{field}={v!r} outside [{lo!r}, {hi!r}]")

    @property
    def rise_time(self) -> float:
        return self.edge_frac * self.bit_time

    @property
    def fall_time(self) -> float:
        return self.edge_frac * self.bit_time


def sample_params(master_seed: int, record_index: int) -> RecordParams:
    """Draw one record's parameters from a stream keyed on (seed, index)."""
    rng = np.random.default_rng(np.random.SeedSequence((master_seed, record_index)))
    return RecordParams(
        bit_time=rng.uniform(*BIT_TIME_RANGE),
        edge_frac=rng.uniform(*EDGE_FRAC_RANGE),
        v_cm=V_COMMON,
        v_dm=rng.uniform(*V_DIFF_RANGE),
        clk_period=rng.uniform(*CLK_PERIOD_RANGE),
        clk_phase=rng.uniform(*CLK_PHASE_RANGE),
        clk_edge=CLK_EDGE_TIME,
        r_load=rng.uniform(*R_LOAD_RANGE),
        c_load=rng.uniform(*C_LOAD_RANGE),
        rng_seed=int(rng.integers(1, 2**31)),
    )


def gen_clock(params: RecordParams, duration: float) -> Pwl:
    """50%-duty trapezoidal clock between 0 V and 0.9 V.

    The first rising edge is delayed by (clk_phase/360) * clk_period.
    """
    period, edge = params.clk_period, params.clk_edge
    if not edge < period / 2:
        raise ValueError("edge time must be shorter than half the period")
    delay = params.clk_phase / 360.0 * period
    times = [0.0]
    values = [CLK_LOW]

    def ramp(start, v_from, v_to):
        if start > times[-1]:
            times.append(start)
            values.append(v_from)
        times.append(start + edge)
        values.append(v_to)

    t = delay
    while t < duration:
        ramp(t, CLK_LOW, CLK_HIGH)
        ramp(t + period / 2.0, CLK_HIGH, CLK_LOW)
        t += period
    return Pwl(np.array(times), np.array(values))
