"""Behavioral reference simulator for a 1.5-bit pipeline-stage sub-ADC.

A latched comparator samples the differential input on each rising clock
crossing and drives the two digital output nodes through the randomized
RC load. The output dynamics are integrated with an unconditionally
stable implicit stepper, so the fast clocked edges and the slow analog
drift coexist without step-size trouble.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stiffnet.signals import Pwl, RecordParams

V_REF = 0.4
V_LOGIC_HIGH = 0.9
V_LOGIC_LOW = 0.0
R_DRIVER = 1e3
CLK_THRESHOLD = 0.45

CODE_LOW = 0b00
CODE_MID = 0b01
CODE_HIGH = 0b10


class NewtonConvergenceError(RuntimeError):
    """Implicit step failed to reach the residual tolerance."""

    def __init__(self, residual: float, iterations: int):
        super().__init__(
            f"Newton iteration stalled after {iterations} iterations, "
            f"residual {residual:.3e}"
        )
        self.residual = residual
        self.iterations = iterations


@dataclass
class AdcState:
    """Latched code plus the two analog output node voltages."""

    latch: int = CODE_LOW
    v_out1: float = 0.0
    v_out0: float = 0.0
    last_clk: float = 0.0

    def __post_init__(self):
        if self.latch not in (CODE_LOW, CODE_MID, CODE_HIGH):
            raise ValueError(f"latch code {self.latch:#04b} is not a 1.5-bit code")


def comparator_code(v_diff: float, v_ref: float = V_REF) -> int:
    """1.5-bit thresholding at +/- v_ref/4; code 0b11 never occurs."""
    if v_ref <= 0:
        raise ValueError("v_ref must be positive")
    if v_diff > v_ref / 4.0:
        return CODE_HIGH
    if v_diff < -v_ref / 4.0:
        return CODE_LOW
    return CODE_MID


def backward_euler_step(f, y, h: float, jac=None, tol: float = 1e-10,
                        max_iter: int = 50):
    """One implicit Euler step: solve y_next = y + h*f(y_next).

    Damped Newton with step halving; ``jac`` may supply the analytic
    Jacobian of f, otherwise it is estimated by forward differences.
    Unconditionally stable on decaying linear systems for any h > 0.
    """
    y = np.asarray(y, dtype=np.float64)
    scalar = y.ndim == 0
    y = np.atleast_1d(y)
    n = y.size

    def residual(z):
        return z - y - h * np.atleast_1d(np.asarray(f(z), dtype=np.float64))

    z = y.copy()
    g = residual(z)
    gnorm = float(np.max(np.abs(g)))
    for iteration in range(max_iter):
        if gnorm < tol:
            return float(z[0]) if scalar else z
        if jac is not None:
            jf = np.atleast_2d(np.asarray(jac(z), dtype=np.float64))
        else:
            jf = np.empty((n, n))
            f0 = np.atleast_1d(np.asarray(f(z), dtype=np.float64))
            eps = 1e-8
            for k in range(n):
                zp = z.copy()
                zp[k] += eps
                jf[:, k] = (np.atleast_1d(np.asarray(f(zp), dtype=np.float64)) - f0) / eps
        jg = np.eye(n) - h * jf
        dz = np.linalg.solve(jg, -g)
        # damping: halve the step until the residual actually shrinks
        alpha = 1.0
        while alpha > 1e-6:
            z_try = z + alpha * dz
            g_try = residual(z_try)
            gnorm_try = float(np.max(np.abs(g_try)))
            if gnorm_try < gnorm or gnorm_try < tol:
                z, g, gnorm = z_try, g_try, gnorm_try
                break
            alpha *= 0.5
        else:
            break
    if gnorm < tol:
        return float(z[0]) if scalar else z
    raise NewtonConvergenceError(gnorm, max_iter)


def _code_targets(code: int) -> np.ndarray:
    d1 = (code >> 1) & 1
    d0 = code & 1
    return np.array([V_LOGIC_HIGH if d1 else V_LOGIC_LOW,
                     V_LOGIC_HIGH if d0 else V_LOGIC_LOW])


def rising_crossing_indices(samples: np.ndarray, threshold: float = CLK_THRESHOLD) -> np.ndarray:
    """Grid indices k where samples[k-1] < threshold <= samples[k]."""
    s = np.asarray(samples)
    return np.flatnonzero((s[:-1] < threshold) & (s[1:] >= threshold)) + 1


def simulate_record(vin_p: Pwl, vin_m: Pwl, clk: Pwl, params: RecordParams,
                    fine_dt: float = 0.25e-9, duration: float = 1250e-9,
                    v_ref: float = V_REF, r_driver: float = R_DRIVER
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Integrate both output nodes over the record's fine time grid.

    Returns (dout1, dout0) sampled at fine_dt, index 0 at t=0. The latch
    re-evaluates at every upward 0.45 V clock crossing; in between, each
    node relaxes exponentially toward its code's logic level through
    (r_driver + r_load) * c_load.
    """
    if fine_dt <= 0 or duration <= 0:
        raise ValueError("fine_dt and duration must be positive")
    n = int(round(duration / fine_dt))
    t = np.arange(n) * fine_dt
    vp = vin_p.sample(t)
    vm = vin_m.sample(t)
    ck = clk.sample(t)

    tau = (r_driver + params.r_load) * params.c_load
    inv_tau = 1.0 / tau
    jac_matrix = np.array([[-inv_tau, 0.0], [0.0, -inv_tau]])
    jac = lambda z: jac_matrix

    target = _code_targets(CODE_LOW)

    def node_derivative(z):
        return (target - z) * inv_tau

    crossings = rising_crossing_indices(ck, CLK_THRESHOLD)
    out = np.empty((2, n))
    state = AdcState()
    v = np.array([state.v_out1, state.v_out0])
    out[:, 0] = v
    ci = 0
    for k in range(1, n):
        if ci < crossings.size and crossings[ci] == k:
            state.latch = comparator_code(vp[k] - vm[k], v_ref)
            target = _code_targets(state.latch)
            ci += 1
        v = backward_euler_step(node_derivative, v, fine_dt, jac=jac)
        out[:, k] = v
    state.v_out1, state.v_out0 = float(v[0]), float(v[1])
    state.last_clk = float(ck[-1])
    return out[0], out[1]
