# %% [markdown]
# # Simulating one soft robot
#
# A body is a 5x5 grid string: `R` rigid, `S` soft, `H`/`V` horizontal and
# vertical actuators, `.` empty. We build one, drive it with a random
# controller on a rugged terrain and look at where its centre of mass goes.

# %%
import numpy as np

from lamarck_vsr.controller import ControllerParams
from lamarck_vsr.environment import EnvInstance, gen_initial_terrain
from lamarck_vsr.morphology import MorphGenome
from lamarck_vsr.sim import run_episode

body = MorphGenome.from_string(
    "....."
    "....."
    "SHS.."
    "VRV.."
    "SHS.."
)
print(body.n_voxels, "voxels,", len(body.actuated_cells()), "actuators")

# %%
rng = np.random.default_rng(0)
terrain = gen_initial_terrain(rng)
print("terrain heights (first 30):", terrain.heights[:30])
env = EnvInstance("rugged", 1, "none", terrain)

# %% [markdown]
# Fitness is the goal-signed displacement of the centre of mass over 500
# control steps (5 simulated seconds).

# %%
for i in range(5):
    params = ControllerParams.random(rng)
    result = run_episode(body, params, env)
    print(f"controller {i}: fitness {result.fitness:+.4f} m")

# %% [markdown]
# Without the direction sensor the controller cannot tell which way it is
# meant to go, so the same controller scores exactly the opposite when the
# goal flips.

# %%
flat = EnvInstance("bidirectional", 1, "none")
params = ControllerParams.random(rng)
right = run_episode(body, params, flat.with_goal(1)).fitness
left = run_episode(body, params, flat.with_goal(-1)).fitness
print(right, left, left == -right)
