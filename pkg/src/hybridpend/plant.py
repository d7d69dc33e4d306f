"""Nonlinear inverted-pendulum plant: actuator, dynamics, integrator, sensors.

State order everywhere is ``[p, p_dot, theta, theta_dot]`` with theta = 0
upright and positive theta leaning toward +p.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields, replace

import numpy as np

from . import _kernels as kern


class InvalidParameter(ValueError):
    """A configuration value violates its invariant; ``field`` names it."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class NumericBlowup(FloatingPointError):
    """Integration produced a non-finite state component."""


def _require(cond: bool, field: str, message: str) -> None:
    if not cond:
        raise InvalidParameter(field, message)


@dataclass(frozen=True)
class PlantParams:
    cart_mass: float = 1.0  # kg
    rod_mass: float = 0.1  # kg
    rod_length: float = 0.5  # m
    gravity: float = 9.81  # m/s^2
    motor_gain: float = 10.0  # N per volt away from voltage_mid
    dynamic_friction: float = 5.0  # N s/m
    static_friction: float = 0.5  # N, Coulomb
    rail_half_length: float = 0.5  # m
    angle_limit: float = 0.5  # rad
    dead_zone_volts: float = 0.2
    voltage_mid: float = 2.5
    voltage_span: float = 5.0
    force_max: float = 20.0  # N

    def __post_init__(self):
        for f in fields(self):
            _require(math.isfinite(getattr(self, f.name)), f.name, "must be finite")
        for name in ("cart_mass", "rod_mass", "rod_length", "gravity"):
            _require(getattr(self, name) > 0, name, "must be > 0")
        _require(self.motor_gain > 0, "motor_gain", "must be > 0")
        _require(self.dynamic_friction >= 0, "dynamic_friction", "must be >= 0")
        _require(self.static_friction >= 0, "static_friction", "must be >= 0")
        _require(self.force_max > 0, "force_max", "must be > 0")
        _require(self.voltage_span > 0, "voltage_span", "must be > 0")
        _require(
            0 <= self.dead_zone_volts < self.voltage_span / 2,
            "dead_zone_volts",
            "must lie in [0, voltage_span/2)",
        )
        _require(self.rail_half_length > 0, "rail_half_length", "must be > 0")
        _require(0 < self.angle_limit < math.pi / 2, "angle_limit", "must lie in (0, pi/2)")

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    def frictionless(self) -> "PlantParams":
        return replace(self, dynamic_friction=0.0, static_friction=0.0)


@dataclass(frozen=True)
class PlantState:
    p: float = 0.0
    p_dot: float = 0.0
    theta: float = 0.0
    theta_dot: float = 0.0
    t: float = 0.0

    def vector(self) -> np.ndarray:
        return np.array([self.p, self.p_dot, self.theta, self.theta_dot])

    @classmethod
    def from_vector(cls, x, t: float = 0.0) -> "PlantState":
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]), float(t))


@dataclass(frozen=True)
class SensorModel:
    offset_p: float = 0.0  # m
    offset_theta: float = 0.0  # rad
    quant_p: float = 1e-4  # m per count
    quant_theta: float = 2 * math.pi / 4096  # rad per count
    noise_std_p: float = 5e-4  # m
    noise_std_theta: float = 1e-3  # rad

    def __post_init__(self):
        for f in fields(self):
            _require(math.isfinite(getattr(self, f.name)), f.name, "must be finite")
        for name in ("quant_p", "quant_theta", "noise_std_p", "noise_std_theta"):
            _require(getattr(self, name) >= 0, name, "must be >= 0")

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def ideal(cls) -> "SensorModel":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Measurement:
    p_meas: float
    theta_meas: float
    t: float

    def vector(self) -> np.ndarray:
        return np.array([self.p_meas, self.theta_meas])


def apply_actuator(voltage: float, params: PlantParams) -> float:
    """Motor force for a drive voltage already clamped to [0, voltage_span].

    Voltages within ``dead_zone_volts`` of ``voltage_mid`` produce no force;
    beyond that the force is ``motor_gain * (voltage - voltage_mid)``
    saturated at ``force_max``.
    """
    if not math.isfinite(voltage):
        raise ValueError(f"voltage must be finite, got {voltage!r}")
    return float(kern.actuator_force(float(voltage), params.as_array()))


def dynamics(state: PlantState, force: float, params: PlantParams) -> np.ndarray:
    """Time derivative ``(p_dot, p_ddot, theta_dot, theta_ddot)``."""
    return kern.derivative(state.vector(), float(force), params.as_array())


def plant_step(state: PlantState, voltage: float, params: PlantParams, dt: float) -> PlantState:
    """One RK4 step of length ``dt`` with the motor force held constant.

    The cart stops dead at the rail ends. Raises :class:`NumericBlowup` if any
    component of the new state is not finite.
    """
    if not 0 < dt <= 0.02:
        raise ValueError(f"dt must lie in (0, 0.02], got {dt}")
    P = params.as_array()
    force = kern.actuator_force(float(voltage), P)
    x = kern.rk4_step(state.vector(), force, P, float(dt))
    names = ("p", "p_dot", "theta", "theta_dot")
    for name, value in zip(names, x):
        if not math.isfinite(value):
            raise NumericBlowup(f"non-finite {name} at t={state.t + dt:.6g}")
    return PlantState.from_vector(x, state.t + dt)


def advance(state: PlantState, voltage: float, params: PlantParams, Ts: float, substeps: int) -> PlantState:
    """Hold ``voltage`` for one control period using ``substeps`` RK4 steps."""
    t_end = state.t + Ts
    h = Ts / substeps
    for _ in range(substeps):
        state = plant_step(state, voltage, params, h)
    # summing h repeatedly drifts off the control grid
    return replace(state, t=t_end)


def measure(state: PlantState, sensors: SensorModel, rng: np.random.Generator) -> Measurement:
    """Offset, noisy, quantised readings of cart position and rod angle.

    Always consumes two standard-normal draws (position first) so the noise
    stream stays aligned whatever the noise levels are.
    """
    n_p, n_th = rng.standard_normal(2)
    p, th = kern.sense(state.vector(), sensors.as_array(), n_p, n_th)
    return Measurement(float(p), float(th), state.t)


def is_out_of_bounds(state: PlantState, params: PlantParams) -> bool:
    return bool(kern.out_of_bounds(state.vector(), params.as_array()))


def mechanical_energy(state: PlantState, params: PlantParams) -> float:
    """Kinetic plus gravitational energy of cart and rod (J)."""
    M, m, l, g = params.cart_mass, params.rod_mass, params.rod_length, params.gravity
    v, w, th = state.p_dot, state.theta_dot, state.theta
    kinetic = 0.5 * (M + m) * v**2 + 0.5 * m * l * v * w * math.cos(th) + m * l**2 * w**2 / 6
    return kinetic + 0.5 * m * g * l * math.cos(th)
