import math
from dataclasses import replace

import numpy as np
import pytest

from hybridpend.evo import (
    DEFAULT_SAFE,
    FitnessConfig,
    GaConfig,
    crossover,
    episode_initial_state,
    evaluate_fitness,
    evolve,
    fitness_integral,
    imitation_genome,
    mutate,
    run_episode,
    sweep_table1,
    tournament_select,
    training_csv,
    validate_safe_region,
    worst_integrand,
)
from hybridpend.neural import GENOME_DIM, mlp_forward
from hybridpend.plant import InvalidParameter, PlantParams
from hybridpend.rng import RngStream
from hybridpend.switching import Hypercube

FC = FitnessConfig()
SMALL_GA = GaConfig(population=6, generations=2, elites=1, tournament=2)
SHORT_FC = replace(FC, episode_length=3.0, n_episodes=2)


def saturating_genome():
    g = np.zeros(GENOME_DIM)
    g[32] = 30.0  # output bias: full positive drive whatever the state
    return g


# --- operators


def test_mutate_identity_cases():
    g = np.linspace(-3, 3, GENOME_DIM)
    np.testing.assert_array_equal(mutate(g, 0.0, 1.0, np.random.default_rng(0)), g)
    np.testing.assert_array_equal(mutate(g, 1.0, 0.0, np.random.default_rng(0)), g)


def test_mutate_matches_reference_stream():
    g = np.linspace(-3, 3, GENOME_DIM)
    got = mutate(g, 1.0, 1.0, np.random.Generator(np.random.PCG64(42)))
    ref = np.random.Generator(np.random.PCG64(42))  # independently seeded copy of the stream
    mask = ref.random(GENOME_DIM) < 1.0
    delta = ref.standard_normal(GENOME_DIM)
    np.testing.assert_array_equal(got, np.clip(np.where(mask, g + delta, g), -30, 30))


def test_mutate_rate_and_clamp():
    g = np.full(GENOME_DIM, 29.9)
    out = mutate(g, 0.5, 100.0, np.random.default_rng(1))
    assert np.all(np.abs(out) <= 30)
    changes = np.mean([np.mean(mutate(np.zeros(GENOME_DIM), 0.3, 1.0, np.random.default_rng(s)) != 0)
                       for s in range(300)])
    assert changes == pytest.approx(0.3, abs=0.02)


def test_crossover_identical_parents():
    a = np.linspace(-1, 1, GENOME_DIM)
    c1, c2 = crossover(a, a, 0.0, np.random.default_rng(0))
    np.testing.assert_array_equal(c1, a)
    np.testing.assert_array_equal(c2, a)


def test_crossover_interval_containment():
    c1, c2 = crossover(np.zeros(1000), np.ones(1000), 0.0, np.random.default_rng(0))
    assert c1.min() >= 0 and c1.max() <= 1 and c2.min() >= 0 and c2.max() <= 1


def test_crossover_blend_monte_carlo():
    c1, c2 = crossover(np.zeros(50_000), np.ones(50_000), 0.5, np.random.default_rng(7))
    genes = np.concatenate([c1, c2])
    assert genes.min() >= -0.5 and genes.max() <= 1.5
    assert abs(genes.mean() - 0.5) < 0.01
    assert genes.min() < -0.45 and genes.max() > 1.45  # the widened interval is actually used


def test_crossover_shape_mismatch():
    with pytest.raises(ValueError):
        crossover(np.zeros(3), np.zeros(4), 0.5, np.random.default_rng(0))


def test_tournament_select():
    F = np.array([5.0, 1.0, 3.0, 0.5, 9.0])
    assert tournament_select(F, 5, np.random.default_rng(0)) == 3
    picks = [tournament_select(F, 1, np.random.default_rng(s)) for s in range(200)]
    assert set(picks) == set(range(5))


# --- fitness


def test_fitness_zero_trajectory():
    assert fitness_integral(np.zeros(1000), np.zeros(1000), 0.01, FC) == 0.0


def test_fitness_unit_integrand():
    F = fitness_integral(np.full(1000, FC.p_w), np.zeros(1000), 0.01, FC)
    assert F == pytest.approx(10.0, rel=1e-12)
    F = fitness_integral(np.zeros(1000), np.full(1000, math.radians(FC.a_w)), 0.01, FC)
    assert F == pytest.approx(10.0, rel=1e-12)


def test_fitness_additivity():
    g = np.random.default_rng(0)
    p, th = g.normal(0, 0.01, 3000), g.normal(0, 0.01, 3000)
    whole = fitness_integral(p, th, 0.01, FC)
    split = fitness_integral(p[:1234], th[:1234], 0.01, FC) + fitness_integral(p[1234:], th[1234:], 0.01, FC)
    assert whole == pytest.approx(split, abs=1e-9)
    assert whole >= 0


def test_worst_integrand():
    w = worst_integrand(DEFAULT_SAFE, FC)
    assert w == pytest.approx((0.25 / 0.005) ** 2 + (math.degrees(0.25) / 0.5) ** 2)


def test_episode_initial_state_inside_fraction():
    g = np.random.default_rng(0)
    for _ in range(200):
        x = episode_initial_state(DEFAULT_SAFE, 0.1, g)
        assert np.all(np.abs(x) <= 0.1 * DEFAULT_SAFE.hi_array + 1e-15)


def test_immediate_failure_scores_near_worst(setup):
    fc = replace(FC, episode_length=10.0, n_episodes=1)
    F, tr = run_episode(saturating_genome(), setup, fc, DEFAULT_SAFE, RngStream(0, ("t",)))
    worst = worst_integrand(DEFAULT_SAFE, fc) * fc.episode_length
    assert tr.status == "left_safe"
    assert tr.end_time < 1.0
    assert worst * 0.9 < F <= worst


def test_failing_genome_ranks_below_surviving_one(setup):
    fc = replace(FC, episode_length=10.0)
    bad = evaluate_fitness(saturating_genome(), setup, fc, DEFAULT_SAFE, RngStream(0, ("x",)))
    good = evaluate_fitness(imitation_genome(setup.design), setup, fc, DEFAULT_SAFE, RngStream(0, ("x",)))
    assert good.survived and not bad.survived
    assert good.F < bad.F
    assert good.exit_time == fc.episode_length and bad.exit_time < fc.episode_length


def test_confinement_logged_states_inside_safe_box(setup):
    _, tr = run_episode(saturating_genome(), setup, FC, DEFAULT_SAFE, RngStream(3))
    st = tr.states()
    assert np.all(st >= DEFAULT_SAFE.lo_array) and np.all(st <= DEFAULT_SAFE.hi_array)


def test_penalty_none_mode(setup):
    fc = replace(FC, episode_length=10.0, n_episodes=1, penalty_mode="none")
    F, _ = run_episode(saturating_genome(), setup, fc, DEFAULT_SAFE, RngStream(0, ("t",)))
    assert F < worst_integrand(DEFAULT_SAFE, fc) * 1.0


def test_blowup_is_penalised_not_raised(setup):
    g = np.random.default_rng(0).uniform(-30, 30, GENOME_DIM)
    rec = evaluate_fitness(g, setup, SHORT_FC, DEFAULT_SAFE, RngStream(0))
    assert math.isfinite(rec.F) and rec.F >= 0


def test_imitation_genome_matches_lqg_small_signal(design):
    g = imitation_genome(design)
    for x in ([1e-4, 0, 0, 0], [0, 1e-3, 0, 0], [0, 0, 1e-4, 0], [0, 0, 0, 1e-3], [2e-4, -1e-3, 1e-4, 5e-4]):
        x = np.array(x)
        u_net = mlp_forward(g, x, 0.0) - 2.5
        u_lqg = -(design.K @ x)[0]
        assert u_net == pytest.approx(u_lqg, rel=0.02)


# --- GA loop


def test_generations_zero_returns_best_initial(setup):
    ga = replace(SMALL_GA, generations=0)
    res = evolve(ga, SHORT_FC, DEFAULT_SAFE, setup, RngStream(5))
    assert len(res.history) == 1
    assert res.best_record.F == min(res.generation_F[0])
    assert res.best_record.F == res.initial_best_F


def test_evolve_is_deterministic(setup):
    a = evolve(SMALL_GA, SHORT_FC, DEFAULT_SAFE, setup, RngStream(11))
    b = evolve(SMALL_GA, SHORT_FC, DEFAULT_SAFE, setup, RngStream(11))
    np.testing.assert_array_equal(a.best_genome, b.best_genome)
    assert training_csv(a) == training_csv(b)
    c = evolve(SMALL_GA, SHORT_FC, DEFAULT_SAFE, setup, RngStream(12))
    assert training_csv(a) != training_csv(c)


def test_evaluation_is_order_independent(setup):
    rng = RngStream(11)
    res = evolve(SMALL_GA, SHORT_FC, DEFAULT_SAFE, setup, rng)
    from hybridpend.evo import initial_population

    pop = initial_population(SMALL_GA, rng.child("ga_init"), imitation_genome(setup.design))
    for i in reversed(range(SMALL_GA.population)):
        rec = evaluate_fitness(pop[i], setup, SHORT_FC, DEFAULT_SAFE, rng.child("eval", 0, i), i)
        assert rec.F == res.generation_F[0][i]


def test_initial_population_seeding(setup):
    from hybridpend.evo import initial_population

    seed = imitation_genome(setup.design)
    pop = initial_population(GaConfig(), RngStream(0), seed)
    np.testing.assert_array_equal(pop[0], seed)
    assert np.all(np.abs(pop[1:] - seed) <= 1.0 + 1e-12)
    uniform = initial_population(replace(GaConfig(), init_mode="uniform"), RngStream(0))
    assert np.all(np.abs(uniform) <= 1.0)


def test_elitism_and_history(setup):
    res = evolve(replace(SMALL_GA, generations=4), SHORT_FC, DEFAULT_SAFE, setup, RngStream(2))
    best = [h.best_F for h in res.history]
    assert all(b <= a for a, b in zip(best, best[1:]))
    assert [h.best_so_far_F for h in res.history] == best
    assert res.all_finite()
    lines = training_csv(res).splitlines()
    assert lines[0] == "generation,best_F,mean_F,survival_rate,best_so_far_F"
    assert len(lines) == 6


def test_training_improves_on_initial_population(trained):
    assert trained.best_record.F < trained.initial_best_F


@pytest.mark.parametrize(
    "kwargs", [dict(population=1), dict(elites=40), dict(mutation_rate=1.5), dict(tournament=0),
               dict(init_mode="random")],
)
def test_ga_config_validation(kwargs):
    with pytest.raises(InvalidParameter):
        replace(GaConfig(), **kwargs)


def test_fitness_config_validation():
    with pytest.raises(InvalidParameter):
        FitnessConfig(p_w=0.0)
    with pytest.raises(InvalidParameter):
        FitnessConfig(penalty_mode="other")


def test_safe_region_must_stay_inside_hard_limits():
    with pytest.raises(InvalidParameter):
        validate_safe_region(Hypercube.symmetric((0.5, 2, 0.25, 2)), PlantParams())
    with pytest.raises(InvalidParameter):
        validate_safe_region(Hypercube.symmetric((0.25, 2, 0.6, 2)), PlantParams())
    assert validate_safe_region(DEFAULT_SAFE, PlantParams()) is DEFAULT_SAFE


# --- sweep


def test_sweep_degenerate_budget_renders(setup):
    ga = replace(SMALL_GA, generations=0)
    report = sweep_table1([(0.005, 0.5)], ga, SHORT_FC, DEFAULT_SAFE, setup, RngStream(0), duration=5.0)
    assert len(report.rows) == 1
    row = report.rows[0]
    assert (row.p_w, row.a_w) == (0.005, 0.5)
    text = report.text()
    assert "0.5" in text.splitlines()[1].split()[1]  # P_w rendered in cm
    dp, _ = report.reductions(row)
    assert f"{dp:.2f}" in text
    assert report.csv().splitlines()[0].startswith("p_w_cm,a_w_deg")


def test_sweep_needs_pairs(setup):
    with pytest.raises(ValueError):
        sweep_table1([], SMALL_GA, SHORT_FC, DEFAULT_SAFE, setup, RngStream(0))
