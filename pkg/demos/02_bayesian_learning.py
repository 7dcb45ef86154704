# %% [markdown]
# # Learning a controller with Bayesian optimisation
#
# The inner loop fits a Gaussian process to (parameters, fitness) pairs and
# picks the next controller by maximising the upper confidence bound.

# %%
import numpy as np

from lamarck_vsr.bo import BOConfig, run_bo_learning
from lamarck_vsr.controller import ControllerParams, param_count
from lamarck_vsr.environment import EnvInstance
from lamarck_vsr.morphology import MorphGenome
from lamarck_vsr.sim import run_episode

body = MorphGenome.from_string("....." "....." "SHS.." "VRV.." "SHS..")
env = EnvInstance("flat")


def fitness(theta):
    return run_episode(body, ControllerParams(theta), env).fitness


# %%
rng = np.random.default_rng(1)
config = BOConfig(budget=20, n_seeds=4)
seeds = [rng.uniform(-1, 1, param_count("none")) for _ in range(config.n_seeds)]
record = run_bo_learning(fitness, seeds, config, rng)

# %%
best_so_far = np.maximum.accumulate([s.f for s in record.samples])
for i, (s, b) in enumerate(zip(record.samples, best_so_far)):
    tag = "seed" if i < config.n_seeds else "bo  "
    print(f"{i:2d} {tag} f={s.f:+.4f} best={b:+.4f}")
print("fitness (best sample):", record.fitness)

# %% [markdown]
# Under Lamarckian inheritance a child would start from `record.top(8)`;
# under Darwinian inheritance it starts again from its genotype.

# %%
print([round(s.f, 4) for s in record.top(3)])
