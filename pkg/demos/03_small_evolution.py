# %% [markdown]
# # A desk-sized evolutionary run
#
# Eight robots, six generations, a short BO budget. The run writes its logs to
# `demo_run/` and the analysis step turns them into a smoothed CSV.

# %%
from pathlib import Path

from lamarck_vsr import analysis
from lamarck_vsr.bo import BOConfig
from lamarck_vsr.config import EvoConfig
from lamarck_vsr.environment import EnvSchedule
from lamarck_vsr.evo import run_experiment

config = EvoConfig(pop_size=8, n_offspring=8, generations=6, seed=3,
                   schedule=EnvSchedule("flat"), bo=BOConfig(budget=10, n_seeds=4))

out = Path("demo_run")
log = run_experiment(config, out, on_generation=lambda g, s: print(
    f"generation {g}: mean {s['mean']:+.3f}  best {s['max']:+.3f}"))

# %%
rows = analysis.aggregate([out], window=3)
print(analysis.rows_to_csv(rows, analysis.AGGREGATE_COLUMNS))

# %% [markdown]
# Every logged BO sample can be re-simulated from the logs alone.

# %%
print(analysis.replay(out / "evals.jsonl", robot_id=10, eval_index=0)["match"])
