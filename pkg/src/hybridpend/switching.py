"""Hypercube regions, the dwell-time supervisor and the composed hybrid controller.

Regions are boxes over ``(p - r, p_dot, theta, theta_dot)``, i.e. relative to
the regulation point. Control starts on LQG; it passes to the network once the
estimate has stayed inside the entry box for ``t_sw`` seconds, and returns to
LQG on the first sample the estimate leaves the exit box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path

import numpy as np

from . import _kernels as kern
from .lqg import ControllerFault, LqgRuntime
from .plant import Measurement

DIM_NAMES = ("p", "p_dot", "theta", "theta_dot")


class RegionError(ValueError):
    pass


class Active(IntEnum):
    LQG = 0
    NEURAL = 1


@dataclass(frozen=True)
class Hypercube:
    lo: tuple[float, float, float, float]
    hi: tuple[float, float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 4 or len(hi) != 4:
            raise RegionError("hypercube needs four (lo, hi) pairs")
        for name, a, b in zip(DIM_NAMES, lo, hi):
            if not (math.isfinite(a) and math.isfinite(b)):
                raise RegionError(f"{name}: bounds must be finite")
            if a > b:
                raise RegionError(f"{name}: lo {a} exceeds hi {b}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def symmetric(cls, half_widths) -> "Hypercube":
        h = [abs(float(v)) for v in half_widths]
        return cls(tuple(-v for v in h), tuple(h))

    @property
    def lo_array(self) -> np.ndarray:
        return np.array(self.lo)

    @property
    def hi_array(self) -> np.ndarray:
        return np.array(self.hi)

    def subset_of(self, other: "Hypercube") -> bool:
        return all(o_lo <= a and b <= o_hi for a, b, o_lo, o_hi in zip(self.lo, self.hi, other.lo, other.hi))

    def inflate(self, factor: float) -> "Hypercube":
        """Scale every side about the box centre."""
        c = (self.lo_array + self.hi_array) / 2
        half = (self.hi_array - self.lo_array) / 2 * factor
        return Hypercube(tuple(c - half), tuple(c + half))

    def intersect(self, other: "Hypercube") -> "Hypercube":
        lo = np.maximum(self.lo_array, other.lo_array)
        hi = np.minimum(self.hi_array, other.hi_array)
        if np.any(lo > hi):
            raise RegionError("hypercubes do not overlap")
        return Hypercube(tuple(lo), tuple(hi))


def contains(h: Hypercube, state, reference: float) -> bool:
    """Closed-box membership of ``state - [reference, 0, 0, 0]``."""
    return bool(kern.in_box(np.asarray(state, dtype=float), float(reference), h.lo_array, h.hi_array))


def calibrate_region(log, coverage: float = 0.99) -> Hypercube:
    """Per-dimension nearest-rank ``[(1-c)/2, 1-(1-c)/2]`` quantile box.

    ``log`` is an ``(N, 4)`` array of reference-relative states.
    """
    data = np.asarray(log, dtype=float)
    if data.ndim != 2 or data.shape[1] != 4:
        raise RegionError(f"calibration log must be (N, 4), got {data.shape}")
    n = data.shape[0]
    if n < 100:
        raise RegionError(f"calibration needs at least 100 samples, got {n}")
    if not 0 < coverage <= 1:
        raise RegionError(f"coverage must lie in (0, 1], got {coverage}")
    tail = (1 - coverage) / 2
    # round() strips representation error such as (1 - 0.99) / 2 * 1000 = 5.000000000000004
    k_lo = max(1, math.ceil(round(tail * n, 9)))
    k_hi = max(1, math.ceil(round((1 - tail) * n, 9)))
    s = np.sort(data, axis=0)
    return Hypercube(tuple(s[k_lo - 1]), tuple(s[k_hi - 1]))


@dataclass(frozen=True)
class SwitchConfig:
    omega_nhc: Hypercube
    omega_lhc: Hypercube
    t_sw: float
    omega_safe: Hypercube

    def __post_init__(self):
        if not (self.t_sw >= 0):
            raise RegionError(f"t_sw must be >= 0, got {self.t_sw}")
        for name, box in (("omega_nhc", self.omega_nhc), ("omega_lhc", self.omega_lhc)):
            if not box.subset_of(self.omega_safe):
                raise RegionError(f"{name} is not contained in omega_safe")


@dataclass(frozen=True)
class SwitchState:
    active: Active = Active.LQG
    dwell_elapsed: float = 0.0
    events: tuple[tuple[float, str], ...] = ()


def switch_step(s: SwitchState, cfg: SwitchConfig, x_hat, r: float, dt: float, t: float = math.nan) -> SwitchState:
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    neural, dwell = kern.switch_update(
        s.active == Active.NEURAL, s.dwell_elapsed, np.asarray(x_hat, dtype=float), float(r), float(dt),
        cfg.omega_nhc.lo_array, cfg.omega_nhc.hi_array,
        cfg.omega_lhc.lo_array, cfg.omega_lhc.hi_array, float(cfg.t_sw),
    )
    active = Active.NEURAL if neural else Active.LQG
    events = s.events
    if active != s.active:
        events = events + ((t, "LQG->NEURAL" if neural else "NEURAL->LQG"),)
    return SwitchState(active, float(dwell), events)


@dataclass
class HybridRuntime:
    lqg: LqgRuntime
    genome: np.ndarray
    cfg: SwitchConfig
    switch: SwitchState = field(default_factory=SwitchState)


def hybrid_control(rt: HybridRuntime, meas: Measurement, r: float, dt: float) -> tuple[float, HybridRuntime]:
    """Shared estimator update, supervisor tick, then the active control law."""
    d = rt.lqg.design
    m = d.model
    x_hat = kern.kalman_update(rt.lqg.x_hat, rt.lqg.u_prev, meas.vector(), m.Ad, m.Bd, m.Cd, d.L)
    if not np.all(np.isfinite(x_hat)):
        raise ControllerFault(f"non-finite state estimate at t={meas.t:.6g}")
    sw = switch_step(rt.switch, rt.cfg, x_hat, r, dt, meas.t)
    if sw.active == Active.NEURAL:
        voltage = float(kern.mlp_voltage(rt.genome, x_hat, float(r)))
    else:
        voltage = float(kern.lqg_voltage(x_hat, float(r), d.K, d.plant.as_array()))
    lqg = replace(rt.lqg, x_hat=x_hat, r=float(r), u_prev=voltage - d.plant.voltage_mid)
    return voltage, replace(rt, lqg=lqg, switch=sw)


def save_region(path: str | Path, box: Hypercube, coverage: float, source: str, **meta) -> None:
    lines = [
        "# hypercube bounds relative to the regulation point: lo hi per line",
        "# dims: " + " ".join(DIM_NAMES),
        f"# coverage = {coverage!r}",
        f"# source = {source}",
    ]
    lines += [f"# {k} = {v}" for k, v in meta.items()]
    lines += [f"{a:.17g} {b:.17g}" for a, b in zip(box.lo, box.hi)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_region(path: str | Path) -> tuple[Hypercube, dict[str, str]]:
    meta: dict[str, str] = {}
    rows = []
    for ln in Path(path).read_text().splitlines():
        ln = ln.strip()
        if not ln:
            continue
        if ln.startswith("#"):
            key, sep, value = ln[1:].partition("=")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        parts = ln.split()
        if len(parts) != 2:
            raise RegionError(f"{path}: expected 'lo hi', got {ln!r}")
        rows.append((float(parts[0]), float(parts[1])))
    if len(rows) != 4:
        raise RegionError(f"{path}: expected 4 bound lines, got {len(rows)}")
    return Hypercube(tuple(r[0] for r in rows), tuple(r[1] for r in rows)), meta
