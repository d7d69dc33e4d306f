"""JIT-compiled per-step arithmetic shared by the public API and the fast loop.

Every floating-point operation that touches a trajectory lives here, so the
step-by-step Python API and the batch closed-loop kernel produce bit-identical
results. Parameters travel as flat float64 arrays; the index constants below
document the packing.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# PlantParams packing
M_CART, M_ROD, ROD_LEN, GRAV, MOTOR_GAIN, VISC, COULOMB = 0, 1, 2, 3, 4, 5, 6
RAIL, ANGLE_LIM, DEAD_ZONE, V_MID, V_SPAN, F_MAX = 7, 8, 9, 10, 11, 12
N_PLANT = 13

# SensorModel packing
OFF_P, OFF_TH, Q_P, Q_TH, SD_P, SD_TH = 0, 1, 2, 3, 4, 5
N_SENSOR = 6

# Controller modes
MODE_LQG, MODE_NEURAL, MODE_HYBRID = 0, 1, 2

# Closed-loop status codes
OK, HARD_LIMIT, LEFT_SAFE, BLOWUP = 0, 1, 2, 3

# Trajectory log columns (matches the CSV order)
N_LOG = 14

# Network input half-ranges: p (m), p_dot (m/s), theta (rad), theta_dot (rad/s)
INPUT_HALF_RANGE = np.array([0.5, 5.0, 0.5, 5.0])
OUTPUT_SPAN = 5.0
# logistic(36) is the largest value that stays below 1.0 in float64
SIGMOID_CLIP = 36.0


@njit(cache=True)
def actuator_force(voltage, P):
    u = voltage - P[V_MID]
    if abs(u) <= P[DEAD_ZONE]:
        return 0.0
    f = P[MOTOR_GAIN] * u
    if f > P[F_MAX]:
        return P[F_MAX]
    if f < -P[F_MAX]:
        return -P[F_MAX]
    return f


@njit(cache=True)
def derivative(x, force, P):
    """Cart-pole with a uniform rod pivoted at one end, theta = 0 upright."""
    M = P[M_CART]
    m = P[M_ROD]
    half = 0.5 * P[ROD_LEN]
    s = math.sin(x[2])
    c = math.cos(x[2])
    v = x[1]
    sgn = 0.0
    if v > 0.0:
        sgn = 1.0
    elif v < 0.0:
        sgn = -1.0

    a11 = M + m
    a12 = m * half * c
    a22 = m * P[ROD_LEN] * P[ROD_LEN] / 3.0
    f1 = force - P[VISC] * v - P[COULOMB] * sgn + m * half * s * x[3] * x[3]
    f2 = m * P[GRAV] * half * s
    det = a11 * a22 - a12 * a12

    out = np.empty(4)
    out[0] = v
    out[1] = (a22 * f1 - a12 * f2) / det
    out[2] = x[3]
    out[3] = (a11 * f2 - a12 * f1) / det
    return out


@njit(cache=True)
def rk4_step(x, force, P, dt):
    k1 = derivative(x, force, P)
    k2 = derivative(x + 0.5 * dt * k1, force, P)
    k3 = derivative(x + 0.5 * dt * k2, force, P)
    k4 = derivative(x + dt * k3, force, P)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    rail = P[RAIL]
    if out[0] > rail:
        out[0] = rail
        out[1] = 0.0
    elif out[0] < -rail:
        out[0] = -rail
        out[1] = 0.0
    return out


@njit(cache=True)
def euler_step(x, force, P, dt):
    return x + dt * derivative(x, force, P)


@njit(cache=True)
def quantize(x, step):
    if step > 0.0:
        return np.rint(x / step) * step
    return x


@njit(cache=True)
def sense(x, S, n_p, n_th):
    """Measured (p, theta) given standard-normal draws n_p and n_th."""
    p = quantize(x[0] + S[OFF_P] + S[SD_P] * n_p, S[Q_P])
    th = quantize(x[2] + S[OFF_TH] + S[SD_TH] * n_th, S[Q_TH])
    return p, th


@njit(cache=True)
def out_of_bounds(x, P):
    return abs(x[0]) >= P[RAIL] or abs(x[2]) >= P[ANGLE_LIM]


@njit(cache=True)
def kalman_update(x_hat, u_prev, y, Ad, Bd, Cd, L):
    """Current-estimator form: predict with the previous input, then correct."""
    x_bar = Ad @ x_hat + Bd[:, 0] * u_prev
    innov = y - Cd @ x_bar
    return x_bar + L @ innov


@njit(cache=True)
def lqg_voltage(x_hat, r, K, P):
    err = x_hat.copy()
    err[0] -= r
    u = -(K[0] @ err)
    v = P[V_MID] + u
    if v < 0.0:
        v = 0.0
    elif v > P[V_SPAN]:
        v = P[V_SPAN]
    return v


@njit(cache=True)
def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


@njit(cache=True)
def mlp_voltage(w, x_hat, r):
    """4-4-2-1 logistic network over reference-relative, range-normalised inputs."""
    inp = x_hat.copy()
    inp[0] -= r
    for i in range(4):
        v = inp[i] / INPUT_HALF_RANGE[i]
        if v > 1.0:
            v = 1.0
        elif v < -1.0:
            v = -1.0
        inp[i] = v
    W1 = w[0:16].reshape((4, 4))
    b1 = w[16:20]
    W2 = w[20:28].reshape((2, 4))
    b2 = w[28:30]
    W3 = w[30:32].reshape((1, 2))
    b3 = w[32:33]
    h1 = _sigmoid(W1 @ inp + b1)
    h2 = _sigmoid(W2 @ h1 + b2)
    z = (W3 @ h2 + b3)[0]
    z = min(max(z, -SIGMOID_CLIP), SIGMOID_CLIP)
    return OUTPUT_SPAN * _sigmoid(z)


@njit(cache=True)
def in_box(x_hat, r, lo, hi):
    for i in range(4):
        e = x_hat[i] - r if i == 0 else x_hat[i]
        if e < lo[i] or e > hi[i]:
            return False
    return True


@njit(cache=True)
def switch_update(neural, dwell, x_hat, r, dt, nhc_lo, nhc_hi, lhc_lo, lhc_hi, t_sw):
    """One supervisor tick; returns (neural_active, dwell_elapsed)."""
    if not neural:
        if in_box(x_hat, r, nhc_lo, nhc_hi):
            dwell = dwell + dt
            if dwell >= t_sw:
                return True, dwell
            return False, dwell
        return False, 0.0
    if not in_box(x_hat, r, lhc_lo, lhc_hi):
        return False, 0.0
    return True, dwell


@njit(cache=True)
def closed_loop(x0, x_hat0, P, S, noise, ref, Ad, Bd, Cd, K, L, w, mode,
                nhc_lo, nhc_hi, lhc_lo, lhc_hi, t_sw, Ts, substeps,
                safe_lo, safe_hi, stop_on_safe_exit, log):
    """Simulate at the control period; fills ``log`` and returns (rows, status).

    Row k holds the true state at t_k, the estimate and measurement taken at
    t_k, the reference, the voltage held over [t_k, t_k + Ts) and the active
    controller flag. The run stops after the step whose end state breaches the
    hard limits (or the safe box, when requested) or goes non-finite.
    """
    n = ref.shape[0]
    x = x0.copy()
    x_hat = x_hat0.copy()
    u_prev = 0.0
    neural = mode == MODE_NEURAL
    dwell = 0.0
    h = Ts / substeps
    y = np.empty(2)
    for k in range(n):
        r = ref[k]
        p_m, th_m = sense(x, S, noise[k, 0], noise[k, 1])
        y[0] = p_m
        y[1] = th_m
        x_hat = kalman_update(x_hat, u_prev, y, Ad, Bd, Cd, L)
        if mode == MODE_HYBRID:
            neural, dwell = switch_update(neural, dwell, x_hat, r, Ts,
                                          nhc_lo, nhc_hi, lhc_lo, lhc_hi, t_sw)
        if neural:
            volt = mlp_voltage(w, x_hat, r)
        else:
            volt = lqg_voltage(x_hat, r, K, P)
        u_prev = volt - P[V_MID]

        log[k, 0] = k * Ts
        log[k, 1:5] = x
        log[k, 5:9] = x_hat
        log[k, 9] = p_m
        log[k, 10] = th_m
        log[k, 11] = r
        log[k, 12] = volt
        log[k, 13] = 1.0 if neural else 0.0

        force = actuator_force(volt, P)
        for _ in range(substeps):
            x = rk4_step(x, force, P, h)
        for i in range(4):
            if not math.isfinite(x[i]):
                return k + 1, BLOWUP
        if out_of_bounds(x, P):
            return k + 1, HARD_LIMIT
        if stop_on_safe_exit and not in_box(x, r, safe_lo, safe_hi):
            return k + 1, LEFT_SAFE
    return n, OK
