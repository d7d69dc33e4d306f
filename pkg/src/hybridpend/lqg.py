"""Linearisation, ZOH discretisation, Riccati synthesis and the runtime LQG law."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kern
from .plant import InvalidParameter, Measurement, PlantParams, SensorModel


class SynthesisError(RuntimeError):
    """Riccati iteration failed to converge (unstabilisable/undetectable pair)."""


class ControllerFault(RuntimeError):
    """The state estimate became non-finite."""


OUTPUT_MATRIX = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class ContinuousModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray


@dataclass(frozen=True)
class DiscreteModel:
    Ad: np.ndarray
    Bd: np.ndarray
    Cd: np.ndarray
    Ts: float


@dataclass(frozen=True)
class LqgWeights:
    """LQR weights and the process-noise scale used for the Kalman design."""

    q_diag: tuple[float, float, float, float] = (100.0, 1.0, 500.0, 1.0)
    r: float = 1.0
    w_scale: float = 1e-4

    def __post_init__(self):
        if len(self.q_diag) != 4 or any(not math.isfinite(q) or q < 0 for q in self.q_diag):
            raise InvalidParameter("q_diag", "needs four finite entries >= 0")
        if not (math.isfinite(self.r) and self.r > 0):
            raise InvalidParameter("r", "must be > 0")
        if not (math.isfinite(self.w_scale) and self.w_scale > 0):
            raise InvalidParameter("w_scale", "must be > 0")


@dataclass(frozen=True)
class LqgDesign:
    K: np.ndarray  # 1x4
    L: np.ndarray  # 4x2
    Q: np.ndarray
    R: np.ndarray
    W: np.ndarray
    Vn: np.ndarray
    model: DiscreteModel
    plant: PlantParams
    P: np.ndarray  # LQR cost-to-go
    P_est: np.ndarray  # a-priori error covariance

    @property
    def closed_loop_radius(self) -> float:
        m = self.model
        return spectral_radius(m.Ad - m.Bd @ self.K)

    @property
    def estimator_radius(self) -> float:
        m = self.model
        return spectral_radius(m.Ad - self.L @ m.Cd @ m.Ad)

    @property
    def lqr_residual(self) -> float:
        m = self.model
        return dare_residual(m.Ad, m.Bd, self.Q, self.R, self.P)

    @property
    def kalman_residual(self) -> float:
        m = self.model
        return dare_residual(m.Ad.T, m.Cd.T, self.W, self.Vn, self.P_est)


@dataclass
class LqgRuntime:
    design: LqgDesign
    x_hat: np.ndarray = field(default_factory=lambda: np.zeros(4))
    r: float = 0.0
    u_prev: float = 0.0


def spectral_radius(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def linearize(params: PlantParams) -> ContinuousModel:
    """Jacobian of the nonlinear dynamics at the upright origin.

    The input is the voltage offset from ``voltage_mid`` (force = motor_gain *
    u, dead zone ignored). Coulomb friction has no derivative at rest and is
    left out, leaving viscous friction as the only damping term.
    """
    M, m, l, g = params.cart_mass, params.rod_mass, params.rod_length, params.gravity
    a = M + m
    b = m * l / 2
    c = m * l * l / 3
    det = a * c - b * b
    grav = m * g * l / 2
    cp = params.dynamic_friction

    A = np.zeros((4, 4))
    A[0, 1] = 1.0
    A[1, 1] = -c * cp / det
    A[1, 2] = -b * grav / det
    A[2, 3] = 1.0
    A[3, 1] = b * cp / det
    A[3, 2] = a * grav / det
    B = params.motor_gain * np.array([[0.0], [c / det], [0.0], [-b / det]])
    return ContinuousModel(A, B, OUTPUT_MATRIX.copy())


def expm_taylor(M: np.ndarray, tol: float = 1e-16) -> np.ndarray:
    """Matrix exponential by scaling and squaring a truncated Taylor series."""
    norm = np.linalg.norm(M, 1)
    s = max(0, int(math.ceil(math.log2(norm / 0.5)))) if norm > 0.5 else 0
    X = M / (2.0**s)
    term = np.eye(M.shape[0])
    total = term.copy()
    for k in range(1, 60):
        term = term @ X / k
        total = total + term
        if np.linalg.norm(term, 1) <= tol * np.linalg.norm(total, 1):
            break
    for _ in range(s):
        total = total @ total
    return total


def discretize(model: ContinuousModel, Ts: float) -> DiscreteModel:
    """Zero-order-hold discretisation via the augmented ``[[A, B], [0, 0]]`` exponential."""
    if not 0 < Ts <= 0.1:
        raise ValueError(f"Ts must lie in (0, 0.1], got {Ts}")
    n, m = model.B.shape
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = model.A
    aug[:n, n:] = model.B
    E = expm_taylor(aug * Ts)
    return DiscreteModel(np.ascontiguousarray(E[:n, :n]), np.ascontiguousarray(E[:n, n:]), model.C.copy(), float(Ts))


def riccati_map(P, A, B, Q, R):
    BtP = B.T @ P
    G = np.linalg.solve(R + BtP @ B, BtP @ A)
    return Q + A.T @ P @ A - A.T @ P @ B @ G


def dare_residual(A, B, Q, R, P) -> float:
    return float(np.linalg.norm(P - riccati_map(P, A, B, Q, R), "fro"))


def solve_dare(Ad, Bd, Q, R, tol: float = 1e-12, max_iter: int = 100_000):
    """Fixed-point iteration of the Riccati map from ``P0 = Q``.

    Stops when successive iterates differ by less than ``tol`` plus the
    rounding floor ``16 eps |P|``; without the floor the iteration can stall
    on round-off once the cost-to-go reaches the thousands.

    Returns ``(P, K)`` with ``K = (R + B'PB)^-1 B'PA``.
    """
    Ad, Bd, Q, R = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (Ad, Bd, Q, R))
    P = Q.copy()
    for _ in range(max_iter):
        P_next = riccati_map(P, Ad, Bd, Q, R)
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)):
            raise SynthesisError("Riccati iteration diverged")
        floor = 16 * np.finfo(float).eps * np.linalg.norm(P_next, "fro")
        if np.linalg.norm(P_next - P, "fro") < tol + floor:
            P = P_next
            break
        P = P_next
    else:
        raise SynthesisError(f"Riccati iteration did not converge in {max_iter} iterations")
    BtP = Bd.T @ P
    K = np.linalg.solve(R + BtP @ Bd, BtP @ Ad)
    return P, K


def design_kalman(Ad, Cd, W, Vn):
    """Steady-state gain for the current (measurement-update) estimator.

    Solves the dual Riccati equation for the a-priori covariance ``P`` and
    returns ``(L, P)`` with ``L = P C' (C P C' + Vn)^-1``.
    """
    Ad, Cd, W, Vn = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (Ad, Cd, W, Vn))
    P, _ = solve_dare(Ad.T, Cd.T, W, Vn)
    S = Cd @ P @ Cd.T + Vn
    L = np.linalg.solve(S.T, (P @ Cd.T).T).T
    return np.ascontiguousarray(L), P


def measurement_covariance(sensors: SensorModel) -> np.ndarray:
    """Per-channel noise variance plus the uniform quantisation variance step^2/12."""
    var_p = sensors.noise_std_p**2 + sensors.quant_p**2 / 12
    var_th = sensors.noise_std_theta**2 + sensors.quant_theta**2 / 12
    if var_p <= 0 or var_th <= 0:
        raise SynthesisError("measurement covariance must be positive definite")
    return np.diag([var_p, var_th])


def synthesize(params: PlantParams, sensors: SensorModel, weights: LqgWeights, Ts: float) -> LqgDesign:
    model = discretize(linearize(params), Ts)
    Q = np.diag(np.asarray(weights.q_diag, dtype=float))
    R = np.array([[weights.r]])
    W = weights.w_scale * np.eye(4)
    Vn = measurement_covariance(sensors)
    P, K = solve_dare(model.Ad, model.Bd, Q, R)
    L, P_est = design_kalman(model.Ad, model.Cd, W, Vn)
    design = LqgDesign(K, L, Q, R, W, Vn, model, params, P, P_est)
    if design.closed_loop_radius >= 1 or design.estimator_radius >= 1:
        raise SynthesisError("synthesised loop is not stable")
    return design


def lqg_step(rt: LqgRuntime, meas: Measurement, r: float) -> tuple[float, LqgRuntime]:
    """Estimator update followed by ``u = -K (x_hat - [r, 0, 0, 0])``."""
    d = rt.design
    x_hat = kern.kalman_update(rt.x_hat, rt.u_prev, meas.vector(), d.model.Ad, d.model.Bd, d.model.Cd, d.L)
    if not np.all(np.isfinite(x_hat)):
        raise ControllerFault(f"non-finite state estimate at t={meas.t:.6g}")
    P = d.plant.as_array()
    voltage = float(kern.lqg_voltage(x_hat, float(r), d.K, P))
    return voltage, LqgRuntime(d, x_hat, float(r), voltage - d.plant.voltage_mid)


def format_design(design: LqgDesign) -> str:
    lines = [
        f"Ts = {design.model.Ts}",
        "K = " + " ".join(f"{v:.9g}" for v in design.K.ravel()),
        "L =",
        *("  " + " ".join(f"{v:.9g}" for v in row) for row in design.L),
        f"closed_loop_spectral_radius = {design.closed_loop_radius:.12f}",
        f"estimator_spectral_radius = {design.estimator_radius:.12f}",
        f"lqr_riccati_residual = {design.lqr_residual:.3e}",
        f"kalman_riccati_residual = {design.kalman_residual:.3e}",
    ]
    return "\n".join(lines) + "\n"
