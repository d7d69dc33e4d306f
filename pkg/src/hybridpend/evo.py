"""Failure-free genetic optimisation of the neural controller.

Each genome is scored on closed-loop episodes that start near the regulation
point and end as soon as the true state leaves the safe box; the time left on
the clock is then charged at the worst integrand the box allows, so leaving
early never pays. Nothing here raises on a bad genome: blow-ups become
maximally penalised episodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .closedloop import SimSetup, Trace, simulate
from .harness import Scenario, ScenarioKind, run_experiment
from .lqg import LqgDesign
from .neural import GENOME_DIM, INPUT_RANGES, OUTPUT_RANGE, WEIGHT_LIMIT, clamp_genome
from .plant import InvalidParameter, PlantParams
from .rng import RngStream
from .switching import Hypercube

PENALTY_MODES = ("worst_remaining", "none")
INIT_MODES = ("lqg_seeded", "uniform")


@dataclass(frozen=True)
class FitnessConfig:
    p_w: float = 0.005  # m
    a_w: float = 0.5  # deg
    episode_length: float = 30.0  # s
    n_episodes: int = 3
    ic_fraction: float = 0.1  # of the safe box half-widths
    penalty_mode: str = "worst_remaining"

    def __post_init__(self):
        if not self.p_w > 0:
            raise InvalidParameter("p_w", "must be > 0")
        if not self.a_w > 0:
            raise InvalidParameter("a_w", "must be > 0")
        if not self.episode_length > 0:
            raise InvalidParameter("episode_length", "must be > 0")
        if self.n_episodes < 1:
            raise InvalidParameter("n_episodes", "must be >= 1")
        if not 0 <= self.ic_fraction <= 1:
            raise InvalidParameter("ic_fraction", "must lie in [0, 1]")
        if self.penalty_mode not in PENALTY_MODES:
            raise InvalidParameter("penalty_mode", f"must be one of {PENALTY_MODES}")


@dataclass(frozen=True)
class GaConfig:
    population: int = 40
    generations: int = 60
    tournament: int = 3
    crossover_rate: float = 0.9
    alpha: float = 0.5
    mutation_rate: float = 0.05
    mutation_sigma: float = 0.5
    elites: int = 2
    init_mode: str = "lqg_seeded"
    init_spread: float = 1.0

    def __post_init__(self):
        if self.population < 2:
            raise InvalidParameter("population", "must be >= 2")
        if self.generations < 0:
            raise InvalidParameter("generations", "must be >= 0")
        if not 1 <= self.tournament <= self.population:
            raise InvalidParameter("tournament", "must lie in [1, population]")
        if not 0 <= self.elites < self.population:
            raise InvalidParameter("elites", "must lie in [0, population)")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise InvalidParameter(name, "must lie in [0, 1]")
        for name in ("alpha", "mutation_sigma", "init_spread"):
            if not getattr(self, name) >= 0:
                raise InvalidParameter(name, "must be >= 0")
        if self.init_mode not in INIT_MODES:
            raise InvalidParameter("init_mode", f"must be one of {INIT_MODES}")


DEFAULT_SAFE = Hypercube.symmetric((0.25, 2.0, 0.25, 2.0))


def validate_safe_region(safe: Hypercube, params: PlantParams) -> Hypercube:
    """Reject a safe box that reaches the rail ends or the angle limit."""
    if max(abs(safe.lo[0]), abs(safe.hi[0])) >= params.rail_half_length:
        raise InvalidParameter("omega_safe", "position bounds must stay inside the rail")
    if max(abs(safe.lo[2]), abs(safe.hi[2])) >= params.angle_limit:
        raise InvalidParameter("omega_safe", "angle bounds must stay inside the angle limit")
    return safe


@dataclass(frozen=True)
class FitnessRecord:
    genome_id: int
    F: float
    survived: bool
    exit_time: float
    pos_rms: float  # m
    angle_rms: float  # deg


def integrand(p_err, theta, fc: FitnessConfig) -> np.ndarray:
    return (np.asarray(p_err) / fc.p_w) ** 2 + (np.degrees(theta) / fc.a_w) ** 2


def fitness_integral(p_err, theta, Ts: float, fc: FitnessConfig) -> float:
    """Rectangle-rule integral of the weighted squared position/angle error."""
    return float(np.sum(integrand(p_err, theta, fc)) * Ts)


def worst_integrand(safe: Hypercube, fc: FitnessConfig) -> float:
    p_max = max(abs(safe.lo[0]), abs(safe.hi[0]))
    a_max = math.degrees(max(abs(safe.lo[2]), abs(safe.hi[2])))
    return (p_max / fc.p_w) ** 2 + (a_max / fc.a_w) ** 2


def episode_initial_state(safe: Hypercube, frac: float, gen: np.random.Generator) -> np.ndarray:
    centre = (safe.lo_array + safe.hi_array) / 2
    half = (safe.hi_array - safe.lo_array) / 2
    return centre + frac * half * gen.uniform(-1.0, 1.0, 4)


def run_episode(genome, setup: SimSetup, fc: FitnessConfig, safe: Hypercube, rng: RngStream) -> tuple[float, Trace | None]:
    """Score one episode; returns ``(F, trace)`` with ``trace=None`` on a simulator fault."""
    gen = rng.generator()
    n = int(round(fc.episode_length / setup.Ts))
    x0 = episode_initial_state(safe, fc.ic_fraction, gen)
    noise = gen.standard_normal((n, 2))
    worst = worst_integrand(safe, fc)
    try:
        tr = simulate(setup, x0, np.zeros(n), noise, mode="neural", genome=genome, safe=safe)
    except (FloatingPointError, ValueError, ZeroDivisionError):
        return worst * fc.episode_length, None
    if tr.status == "blowup":
        return worst * fc.episode_length, tr
    st = tr.states()
    F = fitness_integral(st[:, 0] - tr.column("r"), st[:, 2], setup.Ts, fc)
    if tr.status != "ok" and fc.penalty_mode == "worst_remaining":
        F += worst * max(0.0, fc.episode_length - tr.end_time)
    if not math.isfinite(F):
        F = worst * fc.episode_length
    return F, tr


def evaluate_fitness(genome, setup: SimSetup, fc: FitnessConfig, safe: Hypercube, rng: RngStream, genome_id: int = 0) -> FitnessRecord:
    """Mean episode fitness over ``fc.n_episodes`` seeded episodes."""
    Fs, exits, p_sq, a_sq, count = [], [], 0.0, 0.0, 0
    survived = True
    for e in range(fc.n_episodes):
        F, tr = run_episode(genome, setup, fc, safe, rng.child("episode", e))
        Fs.append(F)
        if tr is None or tr.status != "ok":
            survived = False
            exits.append(0.0 if tr is None else min(tr.end_time, fc.episode_length))
        else:
            exits.append(fc.episode_length)
        if tr is not None and len(tr.log):
            st = tr.states()
            p_err = st[:, 0] - tr.column("r")
            if np.all(np.isfinite(p_err)) and np.all(np.isfinite(st[:, 2])):
                p_sq += float(np.sum(p_err**2))
                a_sq += float(np.sum(np.degrees(st[:, 2]) ** 2))
                count += len(p_err)
    pos_rms = math.sqrt(p_sq / count) if count else math.nan
    angle_rms = math.sqrt(a_sq / count) if count else math.nan
    return FitnessRecord(genome_id, float(np.mean(Fs)), survived, float(min(exits)), pos_rms, angle_rms)


def mutate(genome, rate: float, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian perturbation of each gene with probability ``rate``.

    Draw order is fixed: one uniform per gene for the mask, then one standard
    normal per gene.
    """
    g = np.asarray(genome, dtype=float)
    mask = rng.random(g.shape[0]) < rate
    delta = rng.standard_normal(g.shape[0]) * sigma
    return clamp_genome(np.where(mask, g + delta, g))


def crossover(parent_a, parent_b, alpha: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Blend crossover (BLX-alpha): each child gene is uniform on the parents'
    interval widened by ``alpha`` times its length at both ends."""
    a = np.asarray(parent_a, dtype=float)
    b = np.asarray(parent_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"parent shapes differ: {a.shape} vs {b.shape}")
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    ext = alpha * (hi - lo)
    c1 = rng.uniform(lo - ext, hi + ext)
    c2 = rng.uniform(lo - ext, hi + ext)
    return clamp_genome(c1), clamp_genome(c2)


def tournament_select(fitness: np.ndarray, k: int, rng: np.random.Generator) -> int:
    idx = rng.choice(fitness.shape[0], size=k, replace=False)
    return int(idx[np.argmin(fitness[idx])])


def imitation_genome(design: LqgDesign, outer_gain: float = WEIGHT_LIMIT, middle_gain: float = WEIGHT_LIMIT) -> np.ndarray:
    """Network whose small-signal response matches the LQG state feedback.

    One first-layer unit carries the LQG direction, one unit in each later
    layer relays it; the other units sit idle at 0.5. Each hidden logistic
    stage contributes slope 1/4, so the gain from normalised inputs to the
    output pre-activation is ``outer * middle * first / 16``; the output
    stage adds ``5/4`` volts per unit. The product is matched to the LQG gain
    in normalised inputs, and output saturation stands in for the LQG
    voltage clamp.
    """
    half = np.array([(hi - lo) / 2 for lo, hi in INPUT_RANGES])
    volts_per_z = (OUTPUT_RANGE[1] - OUTPUT_RANGE[0]) / 4
    g = -design.K.ravel() * half / volts_per_z
    norm = float(np.linalg.norm(g))
    w = np.zeros(GENOME_DIM)
    if norm == 0:
        return w
    first = 16 * norm / (outer_gain * middle_gain)
    w[0:4] = first * g / norm
    w[20] = middle_gain
    w[28] = -middle_gain / 2
    w[30] = outer_gain
    w[32] = -outer_gain / 2
    return clamp_genome(w)


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best_F: float
    mean_F: float
    survival_rate: float
    best_so_far_F: float


@dataclass
class TrainingResult:
    best_genome: np.ndarray
    best_record: FitnessRecord
    history: list[GenerationStats] = field(default_factory=list)
    final_population: np.ndarray | None = None
    final_records: list[FitnessRecord] = field(default_factory=list)
    generation_F: list[np.ndarray] = field(default_factory=list)  # every genome's F, per generation

    @property
    def initial_best_F(self) -> float:
        return self.history[0].best_F

    def all_finite(self) -> bool:
        return all(bool(np.all(np.isfinite(F))) for F in self.generation_F)


def initial_population(ga: GaConfig, rng: RngStream, seed_genome=None) -> np.ndarray:
    gen = rng.generator()
    spread = gen.uniform(-ga.init_spread, ga.init_spread, (ga.population, GENOME_DIM))
    if seed_genome is None:
        return clamp_genome(spread)
    seed = np.asarray(seed_genome, dtype=float)
    pop = clamp_genome(seed + spread)
    pop[0] = clamp_genome(seed)
    return pop


def evolve(
    ga: GaConfig,
    fc: FitnessConfig,
    safe: Hypercube,
    setup: SimSetup,
    rng: RngStream,
    seed_genome=None,
    progress: Callable[[GenerationStats], None] | None = None,
) -> TrainingResult:
    """Generational GA with tournament selection, BLX crossover, Gaussian
    mutation and elitism.

    Individual ``i`` of generation ``g`` is scored with stream
    ``rng/eval/g/i``, so results do not depend on evaluation order. Elites
    keep their score, which makes the per-generation best non-increasing.
    With ``init_mode='lqg_seeded'`` and no explicit ``seed_genome`` the
    population is centred on :func:`imitation_genome`.
    """
    if seed_genome is None and ga.init_mode == "lqg_seeded":
        seed_genome = imitation_genome(setup.design)
    pop = initial_population(ga, rng.child("ga_init"), seed_genome)
    records = [evaluate_fitness(pop[i], setup, fc, safe, rng.child("eval", 0, i), i) for i in range(ga.population)]
    next_id = ga.population
    history: list[GenerationStats] = []
    generation_F: list[np.ndarray] = []

    best_i = int(np.argmin([r.F for r in records]))
    best = (pop[best_i].copy(), records[best_i])

    def log_generation(g: int) -> None:
        F = np.array([r.F for r in records])
        generation_F.append(F)
        stats = GenerationStats(g, float(F.min()), float(F.mean()), float(np.mean([r.survived for r in records])), best[1].F)
        history.append(stats)
        if progress is not None:
            progress(stats)

    log_generation(0)
    for g in range(1, ga.generations + 1):
        F = np.array([r.F for r in records])
        order = np.argsort(F, kind="stable")
        breed = rng.child("breed", g).generator()
        new_pop = [pop[i].copy() for i in order[: ga.elites]]
        new_records: list[FitnessRecord | None] = [records[i] for i in order[: ga.elites]]
        while len(new_pop) < ga.population:
            a = pop[tournament_select(F, ga.tournament, breed)]
            b = pop[tournament_select(F, ga.tournament, breed)]
            if breed.random() < ga.crossover_rate:
                c1, c2 = crossover(a, b, ga.alpha, breed)
            else:
                c1, c2 = a.copy(), b.copy()
            for child in (c1, c2):
                if len(new_pop) < ga.population:
                    new_pop.append(mutate(child, ga.mutation_rate, ga.mutation_sigma, breed))
                    new_records.append(None)
        pop = np.array(new_pop)
        for i in range(ga.population):
            if new_records[i] is None:
                new_records[i] = evaluate_fitness(pop[i], setup, fc, safe, rng.child("eval", g, i), next_id)
                next_id += 1
        records = new_records  # type: ignore[assignment]
        i_min = int(np.argmin([r.F for r in records]))
        if records[i_min].F < best[1].F:
            best = (pop[i_min].copy(), records[i_min])
        log_generation(g)

    return TrainingResult(best[0], best[1], history, pop, list(records), generation_F)


def training_csv(result: TrainingResult) -> str:
    lines = ["generation,best_F,mean_F,survival_rate,best_so_far_F"]
    for h in result.history:
        lines.append(f"{h.generation},{h.best_F:.17g},{h.mean_F:.17g},{h.survival_rate:.17g},{h.best_so_far_F:.17g}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SweepRow:
    p_w: float  # m
    a_w: float  # deg
    pos_rms: float  # m
    angle_rms: float  # deg
    best_F: float
    failures: int


@dataclass
class SweepReport:
    rows: list[SweepRow]
    lqg_pos_rms: float
    lqg_angle_rms: float
    lqg_failures: int = 0

    def reductions(self, row: SweepRow) -> tuple[float, float]:
        """Percent reduction of position and angle RMS relative to the LQG."""
        return (
            (self.lqg_pos_rms - row.pos_rms) / self.lqg_pos_rms * 100.0,
            (self.lqg_angle_rms - row.angle_rms) / self.lqg_angle_rms * 100.0,
        )

    def text(self) -> str:
        header = ["#", "P_w, cm", "A_w, deg", "Cart position RMS, cm", "Rod angle RMS, deg",
                  "Reduction in cart position RMS, %", "Reduction in rod angle RMS, %", "Failures"]
        rows = []
        for i, row in enumerate(self.rows, start=1):
            dp, da = self.reductions(row)
            rows.append([str(i), f"{row.p_w * 100:g}", f"{row.a_w:g}", f"{row.pos_rms * 100:.4f}",
                         f"{row.angle_rms:.4f}", f"{dp:.2f}", f"{da:.2f}", str(row.failures)])
        rows.append(["LQG", "", "", f"{self.lqg_pos_rms * 100:.4f}", f"{self.lqg_angle_rms:.4f}", "", "",
                     str(self.lqg_failures)])
        widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header] + rows) + "\n"

    def csv(self) -> str:
        lines = ["p_w_cm,a_w_deg,pos_rms_cm,angle_rms_deg,pos_reduction_pct,angle_reduction_pct,best_F,failures"]
        for row in self.rows:
            dp, da = self.reductions(row)
            lines.append(f"{row.p_w * 100:.17g},{row.a_w:.17g},{row.pos_rms * 100:.17g},{row.angle_rms:.17g},"
                         f"{dp:.17g},{da:.17g},{row.best_F:.17g},{row.failures}")
        lines.append(f"lqg,,{self.lqg_pos_rms * 100:.17g},{self.lqg_angle_rms:.17g},,,,{self.lqg_failures}")
        return "\n".join(lines) + "\n"


def sweep_table1(
    pairs,
    ga: GaConfig,
    fc: FitnessConfig,
    safe: Hypercube,
    setup: SimSetup,
    rng: RngStream,
    duration: float = 100.0,
    repeats: int = 1,
    progress: Callable[[str], None] | None = None,
) -> SweepReport:
    """Train one network per ``(p_w [m], a_w [deg])`` pair and compare its
    balancing RMS with the LQG on the same noise.

    Each pair trains on its own stream ``rng/sweep/i``; the balancing runs
    use ``rng/balance/k`` for every controller, so all rows see the same
    start states and sensor noise.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("sweep needs at least one (p_w, a_w) pair")
    sc = Scenario(ScenarioKind.ZERO_IC, duration=duration)
    streams = [rng.child("balance", k) for k in range(repeats)]

    def balance(controller: str, genome=None) -> tuple[float, float, int]:
        runs = [run_experiment(sc, controller, setup, s, genome) for s in streams]
        return (float(np.mean([r.pos_rms for r in runs])), float(np.mean([r.angle_rms for r in runs])),
                sum(r.failed for r in runs))

    lqg = balance("lqg")
    rows = []
    for i, (p_w, a_w) in enumerate(pairs):
        fci = FitnessConfig(p_w, a_w, fc.episode_length, fc.n_episodes, fc.ic_fraction, fc.penalty_mode)
        result = evolve(ga, fci, safe, setup, rng.child("sweep", i))
        pos, ang, fails = balance("neural", result.best_genome)
        rows.append(SweepRow(p_w, a_w, pos, ang, result.best_record.F, fails))
        if progress is not None:
            progress(f"pair {i + 1}/{len(pairs)}: P_w={p_w * 100:g} cm A_w={a_w:g} deg -> "
                     f"{pos * 100:.4f} cm, {ang:.4f} deg")
    return SweepReport(rows, lqg[0], lqg[1], lqg[2])
