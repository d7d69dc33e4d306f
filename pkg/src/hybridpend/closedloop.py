"""Fixed-period closed-loop simulation of plant, sensors, estimator and controller."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as kern
from .lqg import LqgDesign
from .neural import GENOME_DIM
from .plant import PlantParams, SensorModel
from .switching import Hypercube, SwitchConfig

LOG_COLUMNS = (
    "t", "p", "p_dot", "theta", "theta_dot",
    "p_hat", "pdot_hat", "theta_hat", "thetadot_hat",
    "p_meas", "theta_meas", "r", "voltage", "active",
)

MODES = {"lqg": kern.MODE_LQG, "neural": kern.MODE_NEURAL, "hybrid": kern.MODE_HYBRID}
STATUS = {kern.OK: "ok", kern.HARD_LIMIT: "hard_limit", kern.LEFT_SAFE: "left_safe", kern.BLOWUP: "blowup"}


@dataclass(frozen=True)
class SimSetup:
    params: PlantParams
    sensors: SensorModel
    design: LqgDesign
    Ts: float = 0.01
    substeps: int = 10


@dataclass(frozen=True)
class Trace:
    log: np.ndarray  # (rows, 14) in LOG_COLUMNS order
    status: str
    steps_planned: int
    Ts: float
    mode: str = "lqg"

    @property
    def failed(self) -> bool:
        return self.status in ("hard_limit", "blowup")

    @property
    def end_time(self) -> float:
        """Time at which the last simulated control period ends."""
        if len(self.log) == 0:
            return 0.0
        return float(self.log[-1, 0]) + self.Ts

    def column(self, name: str) -> np.ndarray:
        return self.log[:, LOG_COLUMNS.index(name)]

    def states(self) -> np.ndarray:
        return self.log[:, 1:5]

    def estimates(self) -> np.ndarray:
        return self.log[:, 5:9]

    def switch_events(self) -> list[tuple[float, str]]:
        """Handovers of a hybrid run, as ``(time, 'LQG->NEURAL' | 'NEURAL->LQG')``."""
        if self.mode != "hybrid":
            return []
        active = self.column("active")
        t = self.column("t")
        events = []
        prev = 0.0
        for k in range(len(active)):
            if active[k] != prev:
                events.append((float(t[k]), "LQG->NEURAL" if active[k] else "NEURAL->LQG"))
                prev = active[k]
        return events


def simulate(
    setup: SimSetup,
    x0,
    ref,
    noise,
    mode: str = "lqg",
    genome=None,
    switch: SwitchConfig | None = None,
    safe: Hypercube | None = None,
    x_hat0=None,
) -> Trace:
    """Run the loop for ``len(ref)`` control periods.

    ``noise`` holds one pair of standard-normal draws per period (position
    first). With ``safe`` given, the run also stops once the true state
    leaves that reference-relative box.
    """
    ref = np.ascontiguousarray(ref, dtype=float)
    n = ref.shape[0]
    noise = np.ascontiguousarray(noise, dtype=float).reshape(n, 2)
    w = np.zeros(GENOME_DIM) if genome is None else np.ascontiguousarray(genome, dtype=float)
    if mode not in MODES:
        raise ValueError(f"unknown controller mode {mode!r}")
    if mode in ("neural", "hybrid") and genome is None:
        raise ValueError(f"mode {mode!r} needs a genome")
    if mode == "hybrid" and switch is None:
        raise ValueError("hybrid mode needs a switch configuration")
    zeros = np.zeros(4)
    if switch is not None:
        nhc_lo, nhc_hi = switch.omega_nhc.lo_array, switch.omega_nhc.hi_array
        lhc_lo, lhc_hi = switch.omega_lhc.lo_array, switch.omega_lhc.hi_array
        t_sw = float(switch.t_sw)
    else:
        nhc_lo = nhc_hi = lhc_lo = lhc_hi = zeros
        t_sw = np.inf
    safe_lo = safe.lo_array if safe is not None else zeros
    safe_hi = safe.hi_array if safe is not None else zeros
    x_hat0 = zeros if x_hat0 is None else np.asarray(x_hat0, dtype=float)

    d = setup.design
    mats = [np.ascontiguousarray(a, dtype=float) for a in (d.model.Ad, d.model.Bd, d.model.Cd, d.K, d.L)]
    log = np.zeros((n, kern.N_LOG))
    rows, status = kern.closed_loop(
        np.asarray(x0, dtype=float), x_hat0, setup.params.as_array(), setup.sensors.as_array(),
        noise, ref, *mats, w, MODES[mode],
        nhc_lo, nhc_hi, lhc_lo, lhc_hi, t_sw, float(setup.Ts), int(setup.substeps),
        safe_lo, safe_hi, safe is not None, log,
    )
    return Trace(log[:rows], STATUS[status], n, float(setup.Ts), mode)
