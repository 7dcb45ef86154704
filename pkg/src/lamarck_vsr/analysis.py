"""Aggregation of run logs into plot-ready CSV, plus the fixed-robot and replay tools."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .config import SCHEMA_VERSION, config_from_dict
from .controller import ControllerParams, SensorMode, param_count
from .environment import EnvInstance
from .evo import GENERATION_COLUMNS
from .morphology import MorphGenome, random_init
from .sim import SimConfig, run_episode

AGGREGATE_COLUMNS = ("generation", "mean", "q25", "q75",
                     "before_mean", "before_q25", "before_q75", "n_runs")
FIXED_ROBOT_COLUMNS = ("pair_id", "morph", "param_index", "f_left", "f_right")


class MissingLog(FileNotFoundError):
    pass


class SchemaMismatch(ValueError):
    pass


class RecordNotFound(LookupError):
    pass


class MissingTheta(ValueError):
    pass


def moving_average(series, window: int) -> np.ndarray:
    """Centred moving average truncated at the ends.

    Point ``i`` averages the available points in ``[i - window // 2, i + window // 2]``,
    so ``window=1`` is the identity.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=np.float64)
    half = window // 2
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        lo, hi = max(0, i - half), min(x.shape[0], i + half + 1)
        out[i] = x[lo:hi].mean()
    return out


def _read_csv(path: Path) -> tuple[list, list]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def load_run(run_dir) -> dict:
    """Validated contents of one run directory."""
    run_dir = Path(run_dir)
    gen_path = run_dir / "generations.csv"
    cfg_path = run_dir / "config.json"
    if not gen_path.exists() or not cfg_path.exists():
        raise MissingLog(f"{run_dir} is not a run directory (missing generations.csv or config.json)")
    config = json.loads(cfg_path.read_text(encoding="utf-8"))
    if config.get("schema_version") != SCHEMA_VERSION:
        raise SchemaMismatch(f"{run_dir}: schema_version {config.get('schema_version')} "
                             f"!= {SCHEMA_VERSION}")
    header, rows = _read_csv(gen_path)
    if tuple(header) != GENERATION_COLUMNS:
        raise SchemaMismatch(f"{gen_path}: unexpected columns {header}")
    table = {col: np.array([float(r[i]) for r in rows]) for i, col in enumerate(header)}
    run = {"dir": run_dir, "config": config, "generations": table}
    lineage = run_dir / "lineage.csv"
    if lineage.exists():
        lh, lrows = _read_csv(lineage)
        run["lineage"] = [dict(zip(lh, r)) for r in lrows]
    return run


def _percentiles(values):
    values = np.asarray(values, dtype=np.float64)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return math.nan, math.nan, math.nan
    return float(values.mean()), float(np.percentile(values, 25)), float(np.percentile(values, 75))


def aggregate(run_dirs, window: int = 1, iqr_over: str = "runs") -> list[dict]:
    """Per-generation cross-run mean and interquartile band, then smoothed.

    ``iqr_over="runs"`` takes percentiles over the per-run population means;
    ``"individuals"`` pools every individual's fitness across runs.
    """
    if not run_dirs:
        raise MissingLog("no run directories given")
    if iqr_over not in ("runs", "individuals"):
        raise ValueError("iqr_over must be 'runs' or 'individuals'")
    runs = [load_run(d) for d in run_dirs]
    n_gen = min(len(r["generations"]["generation"]) for r in runs)
    cols = {c: [] for c in AGGREGATE_COLUMNS[1:-1]}
    for g in range(n_gen):
        means = [r["generations"]["mean"][g] for r in runs]
        befores = [r["generations"]["before_learning_mean"][g] for r in runs]
        mean, q25, q75 = _percentiles(means)
        bmean, bq25, bq75 = _percentiles(befores)
        if iqr_over == "individuals":
            pooled = [float(row["fitness"]) for r in runs for row in r.get("lineage", [])
                      if int(row["generation"]) == g]
            pooled_b = [float(row["before_learning"]) for r in runs for row in r.get("lineage", [])
                        if int(row["generation"]) == g]
            _, q25, q75 = _percentiles(pooled)
            _, bq25, bq75 = _percentiles(pooled_b)
        for key, val in zip(cols, (mean, q25, q75, bmean, bq25, bq75)):
            cols[key].append(val)
    smoothed = {k: moving_average(v, window) for k, v in cols.items()}
    return [{"generation": g, **{k: float(smoothed[k][g]) for k in smoothed}, "n_runs": len(runs)}
            for g in range(n_gen)]


def rows_to_csv(rows, columns) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns])
    return buf.getvalue()


def fixed_robot(morphs=None, n_morphs: int = 10, n_params: int = 10,
                sensor_mode=SensorMode.NONE, seed: int = 0,
                sim_config: SimConfig | None = None) -> list[dict]:
    """Evaluate random controllers on fixed bodies for both goal directions.

    Rows are sorted by decreasing leftward fitness (ties keep pair order).
    """
    rng = np.random.default_rng([seed, 7])
    sensor_mode = SensorMode(sensor_mode)
    if morphs is None:
        morphs = [random_init(rng) for _ in range(n_morphs)]
    morphs = [m if isinstance(m, MorphGenome) else MorphGenome.from_string(m) for m in morphs]
    env = EnvInstance("bidirectional", 1, sensor_mode)
    rows = []
    for mi, morph in enumerate(morphs):
        for pi in range(n_params):
            params = ControllerParams(rng.uniform(-1.0, 1.0, param_count(sensor_mode)), sensor_mode)
            right = run_episode(morph, params, env.with_goal(1), config=sim_config).fitness
            left = run_episode(morph, params, env.with_goal(-1), config=sim_config).fitness
            rows.append({"pair_id": mi * n_params + pi, "morph": morph.to_string(),
                         "param_index": pi, "f_left": left, "f_right": right})
    rows.sort(key=lambda r: (-r["f_left"], r["pair_id"]))
    return rows


def replay(evals_path, robot_id: int, eval_index: int) -> dict:
    """Re-simulate one logged evaluation and report recorded vs replayed fitness.

    BO samples reproduce their recorded objective exactly. RL snapshots are
    replayed without exploration noise or updates, so they generally differ
    from the recorded episode return; both values are returned.
    """
    evals_path = Path(evals_path)
    run_dir = evals_path.parent
    record = None
    with open(evals_path, encoding="utf-8") as fh:
        for line in fh:
            row = json.loads(line)
            if row["robot_id"] == robot_id and row["eval_index"] == eval_index:
                record = row
                break
    if record is None:
        raise RecordNotFound(f"no evaluation {eval_index} for robot {robot_id} in {evals_path}")
    if record.get("theta") is None:
        raise MissingTheta(f"robot {robot_id} evaluation {eval_index} has no stored parameters")
    config = config_from_dict(json.loads((run_dir / "config.json").read_text(encoding="utf-8")))
    env = None
    with open(run_dir / "environments.jsonl", encoding="utf-8") as fh:
        for line in fh:
            env_row = json.loads(line)
            if env_row["generation"] == record["generation"]:
                env = EnvInstance.from_record(env_row)
                break
    if env is None:
        raise RecordNotFound(f"no environment for generation {record['generation']}")
    params = ControllerParams(record["theta"], config.sensor_mode)
    result = run_episode(MorphGenome.from_string(record["morph"]), params, env, config=config.sim)
    return {
        "robot_id": robot_id,
        "eval_index": eval_index,
        "learner": record["learner"],
        "recorded_f": record["f"],
        "replayed_f": result.fitness,
        "match": result.fitness == record["f"],
        "com_x": result.com_x.tolist(),
    }
