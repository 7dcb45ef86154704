import dataclasses
import math

import numpy as np
import pytest

from lamarck_vsr.bo import BOConfig
from lamarck_vsr.config import ConfigError, EvoConfig
from lamarck_vsr.controller import ControllerParams
from lamarck_vsr.environment import EnvInstance, EnvSchedule
from lamarck_vsr.evo import (Individual, evaluate_individual, generation_stats, initial_individual,
                             mutate_brain_genotype, reproduce, run_experiment, run_generation,
                             tournament_select)
from lamarck_vsr.morphology import MorphGenome, is_valid
from lamarck_vsr.records import LearnerRecord, Sample
from lamarck_vsr.rl import RLConfig
from lamarck_vsr.sim import run_episode

BODY = MorphGenome.from_string("R" * 25)


def small_config(**kw):
    base = dict(pop_size=4, n_offspring=4, generations=2, seed=1,
                schedule=EnvSchedule("flat"), bo=BOConfig(budget=4, n_seeds=2),
                rl=RLConfig(episodes=2, steps_per_episode=20, batch_size=8))
    base.update(kw)
    return EvoConfig(**base)


def fake(ind_id, f):
    rec = LearnerRecord("bo", [Sample(np.zeros(3), f)])
    return Individual(ind_id, BODY, np.zeros(3), 0, record=rec)


def test_tournament_examples():
    pop = [fake(0, 1.0), fake(1, 5.0), fake(2, 5.0), fake(3, -2.0)]
    assert tournament_select(pop, 4, None, draws=[0, 1, 2, 3]).id == 1
    assert tournament_select(pop, 4, None, draws=[2, 2, 3, 1]).id == 1
    assert tournament_select(pop, 2, None, draws=[3, 3]).id == 3
    assert tournament_select(pop, 1, None, draws=[0]).id == 0


def test_failed_individuals_lose_tournaments():
    failed = Individual(0, BODY, np.zeros(3), 0, record=LearnerRecord("bo", failed=True))
    assert failed.fitness == -math.inf
    assert tournament_select([failed, fake(1, -100.0)], 2, None, draws=[0, 1]).id == 1


def test_brain_mutation():
    rng = np.random.default_rng(0)
    g = rng.uniform(-1, 1, 321)
    assert np.array_equal(mutate_brain_genotype(g, 0.0, rng), g)
    child = mutate_brain_genotype(g, 0.1, rng)
    assert child.shape == g.shape and not np.array_equal(child, g)


def test_darwinian_bo_seeding():
    cfg = small_config(inheritance="darwinian", bo=BOConfig(budget=10, n_seeds=8))
    ind = initial_individual(0, cfg, np.random.default_rng(0))
    assert len(ind.seeds) == 8
    assert ind.seeds[0].tobytes() == ind.brain_genotype.tobytes()
    assert ind.seed_inherited == [True] + [False] * 7


def test_lamarckian_bo_inherits_top_samples():
    cfg = small_config(bo=BOConfig(budget=10, n_seeds=3))
    rng = np.random.default_rng(1)
    thetas = [rng.uniform(-1, 1, 321) for _ in range(5)]
    fs = [0.1, 0.5, 0.3, 0.5, -0.2]
    parent = Individual(7, BODY, thetas[0], 0,
                        record=LearnerRecord("bo", [Sample(t, f) for t, f in zip(thetas, fs)]))
    child = reproduce(parent, 20, 1, cfg, rng)
    assert [s.tobytes() for s in child.seeds] == [thetas[i].tobytes() for i in (1, 3, 2)]
    assert child.parent_id == 7 and child.id == 20
    assert np.count_nonzero(child.morph.grid != BODY.grid) <= 3 and is_valid(child.morph)


def test_darwinian_zero_sigma_keeps_genotype():
    cfg = small_config(inheritance="darwinian", sigma_mut=0.0)
    parent = initial_individual(0, cfg, np.random.default_rng(2))
    child = reproduce(parent, 1, 1, cfg, np.random.default_rng(3))
    assert child.brain_genotype.tobytes() == parent.brain_genotype.tobytes()


def test_lamarckian_rl_bequeaths_best_snapshot():
    cfg = small_config(learner="rl")
    snaps = [np.full(321, 0.1), np.full(321, 0.2)]
    rec = LearnerRecord("rl", [Sample(snaps[0], 1.0), Sample(snaps[1], 2.0)], final_theta=np.zeros(321))
    parent = Individual(0, BODY, np.zeros(321), 0, record=rec)
    child = reproduce(parent, 1, 1, cfg, np.random.default_rng(0))
    assert len(child.seeds) == 1 and child.seeds[0].tobytes() == snaps[1].tobytes()


def test_bo_evaluation_bookkeeping():
    cfg = small_config()
    ind = initial_individual(0, cfg, np.random.default_rng(4))
    rec = evaluate_individual(ind, EnvInstance("flat"), cfg, np.random.default_rng(5))
    assert len(rec.samples) == 4
    assert ind.seeds[0].tobytes() == rec.samples[0].theta.tobytes()
    assert rec.fitness == max(s.f for s in rec.samples)
    assert rec.before_learning == rec.samples[0].f


def test_rl_evaluation_before_learning_is_noise_free():
    cfg = small_config(learner="rl")
    ind = initial_individual(0, cfg, np.random.default_rng(4))
    rec = evaluate_individual(ind, EnvInstance("flat"), cfg, np.random.default_rng(5))
    assert rec.before_learning == run_episode(ind.morph, ControllerParams(ind.seeds[0]),
                                              EnvInstance("flat")).fitness
    assert len(rec.samples) == 2 and rec.samples[0].inherited


def test_generation_ids_and_size():
    cfg = small_config(n_offspring=6)
    env = EnvInstance("flat")
    g0 = run_generation([], 0, cfg, env, 0)
    g1 = run_generation(g0, 1, cfg, env, len(g0))
    assert [i.id for i in g0] == [0, 1, 2, 3]
    assert [i.id for i in g1] == list(range(4, 10))
    assert {i.parent_id for i in g1} <= {0, 1, 2, 3}


def test_generation_stats_skip_failures():
    failed = Individual(9, BODY, np.zeros(3), 0, record=LearnerRecord("bo", failed=True))
    stats = generation_stats([fake(0, 1.0), fake(1, 3.0), failed], 0, EnvInstance("flat"))
    assert stats["mean"] == 2.0 and stats["max"] == 3.0 and stats["n_failed"] == 1


def test_experiment_deterministic_and_complete():
    cfg = small_config(schedule=EnvSchedule("bidirectional"))
    a = run_experiment(cfg, keep_populations=True)
    b = run_experiment(cfg)
    assert a.generations == 2
    assert a.stats == b.stats
    assert [e.goal_sign for e in a.environments] == [1, -1]
    for pop in a.populations:
        assert len(pop) == 4
        assert all(ind.fitness == ind.record.fitness for ind in pop)


def test_evaluation_failure_yields_minus_infinity(monkeypatch):
    import lamarck_vsr.evo as evo

    def boom(*args, **kwargs):
        raise evo.EvaluationError("simulated blow-up")

    monkeypatch.setattr(evo.bo, "run_bo_learning", boom)
    cfg = small_config()
    ind = initial_individual(0, cfg, np.random.default_rng(0))
    rec = evaluate_individual(ind, EnvInstance("flat"), cfg, np.random.default_rng(0))
    assert rec.failed and rec.fitness == -math.inf


def test_config_validation():
    with pytest.raises(ConfigError) as err:
        dataclasses.replace(small_config(), tournament_size=0).validate()
    assert err.value.field == "tournament_size"
