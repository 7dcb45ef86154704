"""Environment instances and how they change from one generation to the next.

Two families are supported: rugged terrain whose height profile is partly
resampled each generation (change fraction ``c``), and a flat plane whose goal
direction alternates every generation. A static flat plane with a fixed
rightward goal is also available for smoke tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .controller import SensorMode
from .sim import Ground

N_POSITIONS = 100
FLAT_PREFIX = 10
MIN_HEIGHT = 1
MAX_HEIGHT = 10
FLAT_PLANE_POSITIONS = 200
DELTAS = (-1, 0, 1)


class MissingPrev(ValueError):
    pass


class InvalidTerrain(ValueError):
    pass


def terrain_violations(heights) -> list[str]:
    """Human-readable list of broken terrain constraints (empty if valid)."""
    h = np.asarray(heights)
    problems = []
    if h.shape != (N_POSITIONS,):
        return [f"expected {N_POSITIONS} heights, got shape {h.shape}"]
    if np.any(h[:FLAT_PREFIX] != 1):
        problems.append("first 10 positions must have height 1")
    if h.min() < MIN_HEIGHT or h.max() > MAX_HEIGHT:
        problems.append("heights must lie in [1, 10]")
    d = np.diff(h)
    if np.any(np.abs(d) > 1):
        problems.append("steps larger than 1")
    # d[j] = h[j+1] - h[j]; a nonzero step must follow a flat one
    if np.any((d[1:] != 0) & (d[:-1] != 0)):
        problems.append("two consecutive nonzero steps")
    return problems


@dataclass(frozen=True)
class Terrain:
    heights: tuple

    def __post_init__(self):
        problems = terrain_violations(self.heights)
        if problems:
            raise InvalidTerrain("; ".join(problems))

    @property
    def deltas(self) -> np.ndarray:
        """``d[i] = heights[i] - heights[i-1]`` for i >= 1 (``d[0] = 0``)."""
        h = np.asarray(self.heights)
        return np.concatenate([[0], np.diff(h)])

    def to_json(self) -> str:
        return json.dumps(list(self.heights))

    @classmethod
    def from_json(cls, text: str) -> "Terrain":
        return cls(tuple(int(x) for x in json.loads(text)))


def valid_deltas(height: int, prev_delta: int) -> list[int]:
    if prev_delta != 0:
        return [0]
    out = []
    for d in DELTAS:
        if MIN_HEIGHT <= height + d <= MAX_HEIGHT:
            out.append(d)
    return out


def gen_initial_terrain(rng: np.random.Generator) -> Terrain:
    heights = [1] * FLAT_PREFIX
    prev_delta = 0
    for _ in range(FLAT_PREFIX, N_POSITIONS):
        options = valid_deltas(heights[-1], prev_delta)
        d = options[rng.integers(len(options))]
        heights.append(heights[-1] + d)
        prev_delta = d
    return Terrain(tuple(heights))


def evolve_terrain_traced(prev: Terrain, c: float, rng: np.random.Generator):
    """Evolve ``prev`` and also report which positions took the preserve branch."""
    if not 0.0 <= c <= 1.0:
        raise ValueError("change fraction must be in [0, 1]")
    old = prev.deltas
    heights = [1] * FLAT_PREFIX
    prev_delta = 0
    preserved = np.zeros(N_POSITIONS - FLAT_PREFIX, dtype=bool)
    for j, i in enumerate(range(FLAT_PREFIX, N_POSITIONS)):
        options = valid_deltas(heights[-1], prev_delta)
        if rng.random() < 1.0 - c:
            preserved[j] = True
            d = int(old[i])
        else:
            d = options[rng.integers(len(options))]
        if d not in options:
            d = options[rng.integers(len(options))]
        heights.append(heights[-1] + d)
        prev_delta = d
    return Terrain(tuple(heights)), preserved


def evolve_terrain(prev: Terrain, c: float, rng: np.random.Generator) -> Terrain:
    return evolve_terrain_traced(prev, c, rng)[0]


@dataclass(frozen=True)
class EnvInstance:
    kind: str  # "rugged", "bidirectional" or "flat"
    goal_sign: int = 1
    sensor_mode: SensorMode = SensorMode.NONE
    terrain: Terrain | None = None

    def __post_init__(self):
        object.__setattr__(self, "sensor_mode", SensorMode(self.sensor_mode))
        if self.kind not in ("rugged", "bidirectional", "flat"):
            raise ValueError(f"unknown environment kind {self.kind!r}")
        if self.goal_sign not in (1, -1):
            raise ValueError("goal_sign must be +1 or -1")
        if self.kind == "rugged":
            if self.terrain is None:
                raise ValueError("rugged environment needs a terrain")
            if self.goal_sign != 1:
                raise ValueError("rugged environments always have goal_sign +1")

    @property
    def ground(self) -> Ground:
        if self.kind == "rugged":
            return Ground(np.asarray(self.terrain.heights), start_column=1.0)
        return Ground(np.ones(FLAT_PLANE_POSITIONS, dtype=np.int64),
                      start_column=FLAT_PLANE_POSITIONS / 2 - 2.5)

    def with_goal(self, goal_sign: int) -> "EnvInstance":
        return EnvInstance(self.kind, goal_sign, self.sensor_mode, self.terrain)

    def to_record(self) -> dict:
        return {
            "kind": self.kind,
            "goal_sign": self.goal_sign,
            "sensor_mode": self.sensor_mode.value,
            "heights": None if self.terrain is None else list(self.terrain.heights),
        }

    @classmethod
    def from_record(cls, record: dict) -> "EnvInstance":
        terrain = None if record.get("heights") is None else Terrain(tuple(record["heights"]))
        return cls(record["kind"], int(record["goal_sign"]), record["sensor_mode"], terrain)


@dataclass(frozen=True)
class EnvSchedule:
    kind: str = "rugged_dynamic"  # "rugged_dynamic", "bidirectional" or "flat"
    change: float = 0.0
    sensor_mode: SensorMode = SensorMode.NONE
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sensor_mode", SensorMode(self.sensor_mode))
        if self.kind not in ("rugged_dynamic", "bidirectional", "flat"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not 0.0 <= self.change <= 1.0:
            raise ValueError("change must be in [0, 1]")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "change": self.change,
                "sensor_mode": self.sensor_mode.value, "seed": self.seed}


def goal_for_generation(g: int) -> int:
    return 1 if g % 2 == 0 else -1


def env_for_generation(schedule: EnvSchedule, g: int, prev_env: EnvInstance | None = None) -> EnvInstance:
    if g < 0:
        raise ValueError("generation index must be >= 0")
    if schedule.kind == "bidirectional":
        return EnvInstance("bidirectional", goal_for_generation(g), schedule.sensor_mode)
    if schedule.kind == "flat":
        return EnvInstance("flat", 1, schedule.sensor_mode)
    rng = np.random.default_rng([schedule.seed, g])
    if g == 0:
        terrain = gen_initial_terrain(rng)
    else:
        if prev_env is None or prev_env.terrain is None:
            raise MissingPrev("rugged_dynamic needs the previous generation's environment")
        terrain = evolve_terrain(prev_env.terrain, schedule.change, rng)
    return EnvInstance("rugged", 1, schedule.sensor_mode, terrain)
