"""High-level steps shared by the CLI and the acceptance suite.

Every step takes a :class:`Config` and derives its randomness from
``RngStream(cfg.seed)`` under a fixed label, so a step gives the same
result whether it is driven from the command line or from Python.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .closedloop import SimSetup
from .config import Config
from .evo import GenerationStats, TrainingResult, evolve
from .harness import (
    RunResult,
    Scenario,
    ScenarioKind,
    relative_states,
    run_experiment,
    run_repeats,
    standard_scenario,
)
from .lqg import synthesize
from .neural import bang_bang_fraction
from .rng import RngStream
from .switching import Hypercube, SwitchConfig, calibrate_region

CALIBRATION_SEED = 1  # scenario seed of calibration runs, kept apart from evaluation runs


def build_setup(cfg: Config) -> SimSetup:
    design = synthesize(cfg.plant, cfg.sensors, cfg.lqg, cfg.sim.ts)
    return SimSetup(cfg.plant, cfg.sensors, design, cfg.sim.ts, cfg.sim.substeps)


def root_stream(cfg: Config) -> RngStream:
    return RngStream(cfg.seed)


def scenario(cfg: Config, kind, duration: float | None = None, seed: int = 0) -> Scenario:
    s = cfg.scenario
    sc = standard_scenario(kind, s.duration if duration is None else duration, s.amplitude, s.low_freq,
                           s.high_freq, s.offset)
    return Scenario(sc.kind, sc.initial_state, sc.frequency, sc.amplitude, sc.duration, seed)


def train(cfg: Config, setup: SimSetup, progress: Callable[[GenerationStats], None] | None = None) -> TrainingResult:
    return evolve(cfg.ga, cfg.fitness, cfg.safe, setup, root_stream(cfg).child("train"), progress=progress)


@dataclass(frozen=True)
class BalanceCheck:
    """100 s balancing comparison of a trained network against the LQG."""

    neural: RunResult
    lqg: RunResult

    @property
    def bang_bang(self) -> float:
        return bang_bang_fraction(self.neural.trace.column("voltage"))

    @property
    def pos_reduction(self) -> float:
        return (self.lqg.pos_rms - self.neural.pos_rms) / self.lqg.pos_rms * 100.0

    @property
    def angle_reduction(self) -> float:
        return (self.lqg.angle_rms - self.neural.angle_rms) / self.lqg.angle_rms * 100.0


def balance_check(cfg: Config, setup: SimSetup, genome, duration: float = 100.0) -> BalanceCheck:
    sc = Scenario(ScenarioKind.ZERO_IC, duration=duration)
    stream = root_stream(cfg).child("balance_check")
    neural = run_experiment(sc, "neural", setup, stream, genome)
    lqg = run_experiment(sc, "lqg", setup, stream)
    return BalanceCheck(neural, lqg)


def training_report(cfg: Config, result: TrainingResult, check: BalanceCheck) -> str:
    """``key = value`` summary of a training run and its balancing check."""
    lines = [
        f"generations = {cfg.ga.generations}",
        f"population = {cfg.ga.population}",
        f"initial_best_F = {result.initial_best_F:.9g}",
        f"final_best_F = {result.best_record.F:.9g}",
        f"best_survived = {result.best_record.survived}",
        f"all_F_finite = {result.all_finite()}",
        f"neural_status = {check.neural.status}",
        f"neural_pos_rms_m = {check.neural.pos_rms:.6g}",
        f"neural_angle_rms_deg = {check.neural.angle_rms:.6g}",
        f"lqg_pos_rms_m = {check.lqg.pos_rms:.6g}",
        f"lqg_angle_rms_deg = {check.lqg.angle_rms:.6g}",
        f"pos_rms_reduction_pct = {check.pos_reduction:.3f}",
        f"angle_rms_reduction_pct = {check.angle_reduction:.3f}",
        f"bang_bang_fraction = {check.bang_bang:.6f}",
    ]
    return "\n".join(lines) + "\n"


def safe_box_violations(cfg: Config, result: RunResult) -> int:
    """Samples of a run whose true reference-relative state lies outside the safe box."""
    rel = relative_states(result.trace.log, "true")
    lo, hi = cfg.safe.lo_array, cfg.safe.hi_array
    return int(np.sum(np.any((rel < lo) | (rel > hi), axis=1)))


def nhc_region(cfg: Config, log: np.ndarray) -> Hypercube:
    """Entry box: the calibrated steady-state box of an LQG run."""
    box = calibrate_region(relative_states(log, cfg.switch.calibration_source), cfg.switch.coverage)
    return box.intersect(cfg.safe)


def lhc_region(cfg: Config, log: np.ndarray) -> Hypercube:
    """Exit box: the calibrated box of a neural run, inflated by the margin and kept inside the safe box."""
    box = calibrate_region(relative_states(log, cfg.switch.calibration_source), cfg.switch.coverage)
    return box.inflate(cfg.switch.lhc_margin).intersect(cfg.safe)


def calibration_run(cfg: Config, setup: SimSetup, controller: str, genome=None) -> RunResult:
    sc = scenario(cfg, ScenarioKind.ZERO_IC, cfg.switch.calibration_duration, CALIBRATION_SEED)
    return run_repeats(sc, controller, setup, root_stream(cfg), 1, genome)[0]


def switch_config(cfg: Config, nhc: Hypercube, lhc: Hypercube) -> SwitchConfig:
    return SwitchConfig(nhc, lhc, cfg.switch.t_sw, cfg.safe)
