"""Reference signals, the four balancing/tracking scenarios, RMS metrics and reports."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .closedloop import LOG_COLUMNS, SimSetup, Trace, simulate
from .rng import RngStream
from .switching import SwitchConfig


class MetricError(ValueError):
    pass


class ReportError(ValueError):
    pass


class ScenarioKind(str, Enum):
    ZERO_IC = "zero_ic"
    OFFSET_IC = "offset_ic"
    SQUARE_LOW = "square_low"
    SQUARE_HIGH = "square_high"
    CUSTOM = "custom"


SCENARIO_ORDER = (ScenarioKind.ZERO_IC, ScenarioKind.OFFSET_IC, ScenarioKind.SQUARE_LOW, ScenarioKind.SQUARE_HIGH)
SCENARIO_TITLES = {
    ScenarioKind.ZERO_IC: "Balancing with zero initial conditions",
    ScenarioKind.OFFSET_IC: "Balancing with 0.15 m initial cart offset",
    ScenarioKind.SQUARE_LOW: "Tracking 0.05 Hz square wave",
    ScenarioKind.SQUARE_HIGH: "Tracking 0.5 Hz square wave",
}
CONTROLLERS = ("lqg", "hybrid")
LABELS = {"lqg": "LQG", "hybrid": "Hybrid"}


@dataclass(frozen=True)
class Scenario:
    kind: ScenarioKind
    initial_state: tuple[float, float, float, float] | None = None  # None: seeded small perturbation
    frequency: float = 0.0  # Hz
    amplitude: float = 0.0  # m
    duration: float = 100.0  # s
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind(self.kind))
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        if self.kind in (ScenarioKind.SQUARE_LOW, ScenarioKind.SQUARE_HIGH) and not self.frequency > 0:
            raise ValueError("square-wave scenarios need frequency > 0")

    @property
    def is_square(self) -> bool:
        return self.kind in (ScenarioKind.SQUARE_LOW, ScenarioKind.SQUARE_HIGH) or (
            self.kind == ScenarioKind.CUSTOM and self.frequency > 0
        )


def standard_scenario(kind: str | ScenarioKind, duration: float = 100.0, amplitude: float = 0.15,
                      low_freq: float = 0.05, high_freq: float = 0.5, offset: float = 0.15) -> Scenario:
    kind = ScenarioKind(kind)
    if kind == ScenarioKind.OFFSET_IC:
        return Scenario(kind, (offset, 0.0, 0.0, 0.0), duration=duration)
    if kind == ScenarioKind.SQUARE_LOW:
        return Scenario(kind, frequency=low_freq, amplitude=amplitude, duration=duration)
    if kind == ScenarioKind.SQUARE_HIGH:
        return Scenario(kind, frequency=high_freq, amplitude=amplitude, duration=duration)
    return Scenario(kind, duration=duration)


def reference_signal(sc: Scenario, t: float) -> float:
    """Cart position reference; square waves start at ``+amplitude``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if not sc.is_square:
        return 0.0
    # rounding keeps k*Ts grid points that land on a half period from flipping late
    phase = round(t * sc.frequency, 12) % 1.0
    return sc.amplitude if phase < 0.5 else -sc.amplitude


def reference_series(sc: Scenario, n: int, Ts: float) -> np.ndarray:
    return np.array([reference_signal(sc, k * Ts) for k in range(n)])


def compute_rms(log) -> tuple[float, float]:
    """``(position-error RMS in m, rod-angle RMS in deg)`` over every logged sample.

    ``log`` is a :class:`Trace` or an array in trajectory-column order.
    """
    arr = log.log if isinstance(log, Trace) else np.asarray(log, dtype=float)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise MetricError("cannot compute RMS of an empty log")
    cols = {name: i for i, name in enumerate(LOG_COLUMNS)}
    e = arr[:, cols["p"]] - arr[:, cols["r"]]
    th = arr[:, cols["theta"]]
    return math.sqrt(float(np.mean(e**2))), math.degrees(math.sqrt(float(np.mean(th**2))))


@dataclass
class RunResult:
    scenario: Scenario
    controller: str
    trace: Trace
    pos_rms: float
    angle_rms: float
    status: str
    failure_time: float | None
    switch_events: list[tuple[float, str]] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return self.failure_time is not None

    @property
    def neural_fraction(self) -> float:
        return float(np.mean(self.trace.column("active"))) if len(self.trace.log) else 0.0


def initial_state(sc: Scenario, gen: np.random.Generator) -> np.ndarray:
    """Scenario start state; the draw is consumed even when a fixed state is given."""
    draw = gen.uniform(-0.01, 0.01, 2)
    if sc.initial_state is not None:
        return np.asarray(sc.initial_state, dtype=float)
    return np.array([draw[0], 0.0, draw[1], 0.0])


def run_experiment(sc: Scenario, controller: str, setup: SimSetup, rng: RngStream,
                   genome=None, switch: SwitchConfig | None = None) -> RunResult:
    """Closed-loop run of one scenario; failures are reported, not raised.

    Randomness (start state and sensor noise) depends only on ``rng``, so
    runs of different controllers on the same stream see identical noise.
    """
    gen = rng.generator()
    n = int(round(sc.duration / setup.Ts))
    x0 = initial_state(sc, gen)
    noise = gen.standard_normal((n, 2))
    ref = reference_series(sc, n, setup.Ts)
    tr = simulate(setup, x0, ref, noise, mode=controller, genome=genome, switch=switch)
    failure = tr.end_time if tr.status != "ok" else None
    pos, ang = compute_rms(tr)
    return RunResult(sc, controller, tr, pos, ang, tr.status, failure, tr.switch_events())


def run_stream(root: RngStream, sc: Scenario, repeat: int) -> RngStream:
    """Stream for one repeat of a scenario, shared by every controller."""
    return root.child("run", sc.kind.value, sc.seed, repeat)


def run_repeats(sc: Scenario, controller: str, setup: SimSetup, root: RngStream, repeats: int,
                genome=None, switch: SwitchConfig | None = None) -> list[RunResult]:
    return [run_experiment(sc, controller, setup, run_stream(root, sc, i), genome, switch) for i in range(repeats)]


@dataclass(frozen=True)
class CellSummary:
    """One controller x scenario cell; values may be floats or pre-formatted text."""

    pos_rms: float | str
    angle_rms: float | str
    switch_events: int | None = None
    failures: int = 0


def summarize(results: Sequence[RunResult]) -> CellSummary:
    return CellSummary(
        float(np.mean([r.pos_rms for r in results])),
        float(np.mean([r.angle_rms for r in results])),
        int(round(np.mean([len(r.switch_events) for r in results]))),
        sum(r.failed for r in results),
    )


def _fmt(v) -> str:
    return v if isinstance(v, str) else f"{v:.4g}"


def percent_delta(hybrid, lqg) -> float:
    return (float(hybrid) - float(lqg)) / float(lqg) * 100.0


def report_table2(cells: Mapping[tuple[str, str], CellSummary]) -> tuple[str, str]:
    """Render the controller x scenario grid as ``(text, csv)``.

    Keys are ``(controller, scenario_kind)``. Raises :class:`ReportError`
    naming the first missing cell.
    """
    keys = [k.value for k in SCENARIO_ORDER]
    for c in CONTROLLERS:
        for k in keys:
            if (c, k) not in cells:
                raise ReportError(f"missing run: controller={c} scenario={k}")

    header = ["Controller", "Parameter"] + [SCENARIO_TITLES[ScenarioKind(k)] for k in keys]
    rows = []
    for c in CONTROLLERS:
        rows.append([LABELS[c], "Cart position RMS, m"] + [_fmt(cells[c, k].pos_rms) for k in keys])
        rows.append(["", "Rod angle RMS, dgr"] + [_fmt(cells[c, k].angle_rms) for k in keys])
    rows.append(["Delta", "Cart position RMS, %"] + [f"{percent_delta(cells['hybrid', k].pos_rms, cells['lqg', k].pos_rms):+.1f}%" for k in keys])
    rows.append(["", "Rod angle RMS, %"] + [f"{percent_delta(cells['hybrid', k].angle_rms, cells['lqg', k].angle_rms):+.1f}%" for k in keys])
    if all(cells[c, k].switch_events is not None for c in CONTROLLERS for k in keys):
        rows.append(["Hybrid", "Switch events"] + [str(cells["hybrid", k].switch_events) for k in keys])

    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    text = "\n".join("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in [header] + rows)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["controller", "scenario", "pos_rms_m", "angle_rms_deg", "switch_events", "failures"])
    for c in CONTROLLERS:
        for k in keys:
            cell = cells[c, k]
            w.writerow([c, k, _fmt(cell.pos_rms), _fmt(cell.angle_rms),
                        "" if cell.switch_events is None else cell.switch_events, cell.failures])
    return text + "\n", buf.getvalue()


def read_table2_csv(text: str) -> dict[tuple[str, str], CellSummary]:
    """Inverse of the CSV half of :func:`report_table2`; numbers stay as text."""
    cells = {}
    for row in csv.DictReader(io.StringIO(text)):
        sw = row.get("switch_events") or None
        cells[row["controller"], row["scenario"]] = CellSummary(
            row["pos_rms_m"], row["angle_rms_deg"], None if sw is None else int(sw), int(row.get("failures") or 0)
        )
    return cells


def write_trajectory_csv(path: str | Path, trace: Trace) -> None:
    fmt = ["%.17g"] * (len(LOG_COLUMNS) - 1) + ["%d"]
    np.savetxt(path, trace.log, fmt=fmt, delimiter=",", header=",".join(LOG_COLUMNS), comments="")


def read_trajectory_csv(path: str | Path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if tuple(header) != LOG_COLUMNS:
        raise ValueError(f"{path}: unexpected trajectory header {header}")
    return np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))


def relative_states(log: np.ndarray, source: str = "estimate") -> np.ndarray:
    """Reference-relative ``(p - r, p_dot, theta, theta_dot)`` from a trajectory array."""
    cols = {name: i for i, name in enumerate(LOG_COLUMNS)}
    if source == "estimate":
        out = log[:, [cols["p_hat"], cols["pdot_hat"], cols["theta_hat"], cols["thetadot_hat"]]].copy()
    elif source == "true":
        out = log[:, [cols["p"], cols["p_dot"], cols["theta"], cols["theta_dot"]]].copy()
    else:
        raise ValueError(f"source must be 'estimate' or 'true', got {source!r}")
    out[:, 0] -= log[:, cols["r"]]
    return out
