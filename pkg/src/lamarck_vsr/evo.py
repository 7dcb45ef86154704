"""Outer evolutionary loop over robot bodies with a learning inner loop.

Generational replacement without elitism: every generation, ``n_offspring``
children are produced by tournament selection and mutation, learn their
controller in the current environment, and replace the parents entirely.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bo, rl
from .config import EvoConfig, dump_config
from .controller import ControllerParams, param_count
from .environment import EnvInstance, env_for_generation
from .morphology import MorphGenome, mutate, random_init
from .records import LearnerRecord
from .sim import ActionOutOfRange, run_episode

logger = logging.getLogger(__name__)

GENERATION_COLUMNS = ("generation", "goal_sign", "mean", "q25", "q75", "max", "min",
                      "before_learning_mean", "n_failed")
LINEAGE_COLUMNS = ("id", "parent_id", "generation", "morph", "fitness", "before_learning")

# rng stream tags
_REPRODUCE, _LEARN = 0, 1


class EvaluationError(RuntimeError):
    pass


@dataclass
class Individual:
    id: int
    morph: MorphGenome
    brain_genotype: np.ndarray
    generation: int
    parent_id: int | None = None
    seeds: list = field(default_factory=list)  # BO seed vectors or the single initial actor
    seed_inherited: list = field(default_factory=list)
    record: LearnerRecord | None = None

    @property
    def fitness(self) -> float:
        return -math.inf if self.record is None else self.record.fitness

    @property
    def before_learning(self) -> float:
        return -math.inf if self.record is None else self.record.before_learning


def stream(seed: int, generation: int, index: int, purpose: int) -> np.random.Generator:
    """Independent generator per (run, generation, offspring, purpose)."""
    return np.random.default_rng([seed, generation, index, purpose])


def tournament_select(population, k: int, rng: np.random.Generator, draws=None) -> Individual:
    """Best of ``k`` uniform draws with replacement; lower id wins ties.

    ``draws`` overrides the sampled indices (used by tests).
    """
    if not population:
        raise ValueError("empty population")
    if draws is None:
        draws = rng.integers(0, len(population), k)
    contenders = [population[int(i)] for i in draws]
    return max(contenders, key=lambda ind: (ind.fitness, -ind.id))


def mutate_brain_genotype(genotype, sigma: float, rng: np.random.Generator) -> np.ndarray:
    genotype = np.asarray(genotype, dtype=np.float64)
    return genotype + sigma * rng.standard_normal(genotype.shape)


def _random_tail(n: int, d: int, rng) -> list:
    return [rng.uniform(-1.0, 1.0, d) for _ in range(n)]


def initial_individual(ind_id: int, config: EvoConfig, rng: np.random.Generator) -> Individual:
    d = param_count(config.sensor_mode)
    morph = random_init(rng)
    genotype = rng.uniform(-1.0, 1.0, d)
    child = Individual(ind_id, morph, genotype, generation=0)
    _assign_darwinian_seeds(child, config, rng)
    return child


def _assign_darwinian_seeds(child: Individual, config: EvoConfig, rng) -> None:
    if config.learner == "bo":
        d = child.brain_genotype.shape[0]
        child.seeds = [child.brain_genotype.copy()] + _random_tail(config.bo.n_seeds - 1, d, rng)
        child.seed_inherited = [True] + [False] * (config.bo.n_seeds - 1)
    else:
        child.seeds = [child.brain_genotype.copy()]
        child.seed_inherited = [True]


def reproduce(parent: Individual, child_id: int, generation: int, config: EvoConfig,
              rng: np.random.Generator) -> Individual:
    """Unevaluated offspring of ``parent`` under the configured inheritance mode."""
    morph = mutate(parent.morph, rng)
    if config.inheritance == "darwinian":
        genotype = mutate_brain_genotype(parent.brain_genotype, config.sigma_mut, rng)
        child = Individual(child_id, morph, genotype, generation, parent.id)
        _assign_darwinian_seeds(child, config, rng)
        return child

    child = Individual(child_id, morph, parent.brain_genotype.copy(), generation, parent.id)
    record = parent.record
    if record is None or not record.samples:
        _assign_darwinian_seeds(child, config, rng)
        return child
    if config.learner == "bo":
        inherited = [s.theta.copy() for s in record.top(config.bo.n_seeds)]
    else:
        inherited = [rl.bequest(record, config.rl)]
    if config.lamarckian_sigma > 0:
        inherited = [mutate_brain_genotype(t, config.lamarckian_sigma, rng) for t in inherited]
    child.seeds = inherited
    child.seed_inherited = [True] * len(inherited)
    return child


def evaluate_individual(ind: Individual, env: EnvInstance, config: EvoConfig,
                        rng: np.random.Generator) -> LearnerRecord:
    """Run the inner learner; failures give an empty record with fitness -inf."""
    sensor = config.sensor_mode

    def objective(theta):
        result = run_episode(ind.morph, ControllerParams(theta, sensor), env, config=config.sim)
        if not math.isfinite(result.fitness):
            raise EvaluationError("non-finite fitness")
        return result.fitness

    try:
        if config.learner == "bo":
            return bo.run_bo_learning(objective, ind.seeds, config.bo, rng, ind.seed_inherited)
        actor = ControllerParams(ind.seeds[0], sensor)
        before = objective(actor.values)
        record = rl.run_rl_learning(ind.morph, env, actor, config.rl, rng, config.sim)
        record.samples[0].inherited = True
        record.before_learning = before
        return record
    except (EvaluationError, rl.LearningDiverged, bo.FactorizationFailure,
            ActionOutOfRange, FloatingPointError) as exc:
        logger.warning("evaluation of robot %d failed: %s", ind.id, exc)
        return LearnerRecord(config.learner, failed=True)


def _evaluate_task(task):
    ind, env, config = task
    return evaluate_individual(ind, env, config, stream(config.seed, ind.generation, ind.id, _LEARN))


def evaluate_all(individuals, env: EnvInstance, config: EvoConfig, executor=None) -> None:
    tasks = [(ind, env, config) for ind in individuals]
    if executor is None:
        records = [_evaluate_task(t) for t in tasks]
    else:
        records = list(executor.map(_evaluate_task, tasks))
    for ind, record in zip(individuals, records):
        ind.record = record


def run_generation(population, g: int, config: EvoConfig, env: EnvInstance,
                   next_id: int, executor=None) -> list:
    """Build and evaluate generation ``g``. Ids start at ``next_id``."""
    if g == 0:
        children = [initial_individual(next_id + i, config, stream(config.seed, 0, i, _REPRODUCE))
                    for i in range(config.pop_size)]
    else:
        children = []
        for i in range(config.n_offspring):
            rng = stream(config.seed, g, i, _REPRODUCE)
            parent = tournament_select(population, config.tournament_size, rng)
            children.append(reproduce(parent, next_id + i, g, config, rng))
    evaluate_all(children, env, config, executor)
    return children


def generation_stats(population, g: int, env: EnvInstance) -> dict:
    fit = np.array([ind.fitness for ind in population])
    before = np.array([ind.before_learning for ind in population])
    ok = np.isfinite(fit)
    row = {"generation": g, "goal_sign": env.goal_sign, "n_failed": int((~ok).sum())}
    if ok.any():
        f = fit[ok]
        row.update(mean=float(f.mean()), q25=float(np.percentile(f, 25)),
                   q75=float(np.percentile(f, 75)), max=float(f.max()), min=float(f.min()))
    else:
        row.update(mean=math.nan, q25=math.nan, q75=math.nan, max=math.nan, min=math.nan)
    b = before[np.isfinite(before)]
    row["before_learning_mean"] = float(b.mean()) if b.size else math.nan
    return row


@dataclass
class RunLog:
    config: EvoConfig
    stats: list = field(default_factory=list)
    environments: list = field(default_factory=list)
    populations: list = field(default_factory=list)  # kept only when requested

    @property
    def generations(self) -> int:
        return len(self.stats)


class RunWriter:
    """Streams a run to ``config.json``, ``generations.csv``, ``evals.jsonl``,
    ``lineage.csv`` and ``environments.jsonl`` inside ``out_dir``."""

    def __init__(self, out_dir, config: EvoConfig):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / "config.json").write_text(dump_config(config), encoding="utf-8")
        self.config = config
        self._gen = open(self.dir / "generations.csv", "w", newline="", encoding="utf-8")
        self._gen_csv = csv.writer(self._gen)
        self._gen_csv.writerow(GENERATION_COLUMNS)
        self._lin = open(self.dir / "lineage.csv", "w", newline="", encoding="utf-8")
        self._lin_csv = csv.writer(self._lin)
        self._lin_csv.writerow(LINEAGE_COLUMNS)
        self._evals = open(self.dir / "evals.jsonl", "w", encoding="utf-8")
        self._envs = open(self.dir / "environments.jsonl", "w", encoding="utf-8")

    def write_generation(self, g, env, population, stats):
        self._gen_csv.writerow([_fmt(stats[c]) for c in GENERATION_COLUMNS])
        self._envs.write(json.dumps({"generation": g, **env.to_record()}) + "\n")
        store = self.config.store_theta_bo if self.config.learner == "bo" else self.config.store_theta_rl
        for ind in population:
            self._lin_csv.writerow([ind.id, "" if ind.parent_id is None else ind.parent_id, g,
                                    ind.morph.to_string(), _fmt(ind.fitness),
                                    _fmt(ind.before_learning)])
            for row in ind.record.to_rows(ind.id, store):
                row = {"generation": g, "morph": ind.morph.to_string(), **row}
                self._evals.write(json.dumps(row) + "\n")
        for fh in (self._gen, self._lin, self._evals, self._envs):
            fh.flush()

    def close(self):
        for fh in (self._gen, self._lin, self._evals, self._envs):
            fh.close()


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def run_experiment(config: EvoConfig, out_dir=None, keep_populations: bool = False,
                   on_generation=None) -> RunLog:
    """Run ``config.generations`` generations; reproducible from ``config`` alone."""
    config.validate()
    schedule = dataclasses.replace(config.schedule, seed=config.seed)
    config = dataclasses.replace(config, schedule=schedule)
    log = RunLog(config)
    writer = RunWriter(out_dir, config) if out_dir is not None else None
    executor = ProcessPoolExecutor(config.jobs) if config.jobs > 1 else None
    population, env, next_id = [], None, 0
    try:
        for g in range(config.generations):
            env = env_for_generation(schedule, g, env)
            population = run_generation(population, g, config, env, next_id, executor)
            next_id += len(population)
            stats = generation_stats(population, g, env)
            log.stats.append(stats)
            log.environments.append(env)
            if keep_populations:
                log.populations.append(population)
            if writer is not None:
                writer.write_generation(g, env, population, stats)
            if on_generation is not None:
                on_generation(g, stats)
            logger.info("generation %d: mean %.4f max %.4f", g, stats["mean"], stats["max"])
    finally:
        if writer is not None:
            writer.close()
        if executor is not None:
            executor.shutdown()
    return log
