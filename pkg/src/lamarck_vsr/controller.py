"""Modular per-voxel neural controller with weights shared by all actuators.

Parameter layout (flat vector): ``W1`` row-major ``(n_in, 10)``, ``b1 (10)``,
``W2 (10)``, ``b2 (1)``. Inputs per actuated voxel are the velocities and
volume of the 3x3 Moore neighbourhood (own cell first), the cyclic time
signal, the voxel's touch flag and, with the direction sensor, the goal sign.
"""

from __future__ import annotations

import enum
import json
import math

import numpy as np

HIDDEN = 10
N_NEIGHBOR_INPUTS = 27
TIME_PERIOD = 25
# keeps 0.6 + y strictly inside (0.6, 1.6) in float64
SIGMOID_EPS = 1e-12


class SensorMode(str, enum.Enum):
    NONE = "none"
    DIRECTION = "direction"


class LengthMismatch(ValueError):
    pass


class PositionEmpty(ValueError):
    pass


def n_inputs(sensor_mode: SensorMode | str) -> int:
    return 31 if SensorMode(sensor_mode) == SensorMode.DIRECTION else 30


def param_count(sensor_mode: SensorMode | str) -> int:
    n_in = n_inputs(sensor_mode)
    return n_in * HIDDEN + HIDDEN + HIDDEN + 1


class ControllerParams:
    __slots__ = ("values", "sensor_mode")

    def __init__(self, values, sensor_mode: SensorMode | str = SensorMode.NONE):
        self.sensor_mode = SensorMode(sensor_mode)
        values = np.array(values, dtype=np.float64).reshape(-1)
        if values.shape[0] != param_count(self.sensor_mode):
            raise LengthMismatch(
                f"{self.sensor_mode.value} controller needs {param_count(self.sensor_mode)} "
                f"parameters, got {values.shape[0]}")
        self.values = values

    @classmethod
    def random(cls, rng: np.random.Generator, sensor_mode=SensorMode.NONE, low=-1.0, high=1.0):
        return cls(rng.uniform(low, high, param_count(sensor_mode)), sensor_mode)

    @classmethod
    def zeros(cls, sensor_mode=SensorMode.NONE):
        return cls(np.zeros(param_count(sensor_mode)), sensor_mode)

    @property
    def n_inputs(self) -> int:
        return n_inputs(self.sensor_mode)

    def unpack(self):
        """Views ``(W1, b1, W2, b2)`` into the flat vector."""
        n_in = self.n_inputs
        v = self.values
        w1 = v[: n_in * HIDDEN].reshape(n_in, HIDDEN)
        b1 = v[n_in * HIDDEN: n_in * HIDDEN + HIDDEN]
        w2 = v[n_in * HIDDEN + HIDDEN: n_in * HIDDEN + 2 * HIDDEN]
        b2 = v[-1]
        return w1, b1, w2, b2

    def to_json(self) -> str:
        # repr of a float round-trips exactly
        return json.dumps({"sensor_mode": self.sensor_mode.value, "values": self.values.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "ControllerParams":
        record = json.loads(text)
        return cls(record["values"], record["sensor_mode"])

    def __eq__(self, other):
        return (isinstance(other, ControllerParams) and self.sensor_mode == other.sensor_mode
                and np.array_equal(self.values, other.values))

    def __repr__(self):
        return f"ControllerParams(<{self.values.shape[0]}>, {self.sensor_mode.value})"


def time_signal(k: int) -> tuple[float, float]:
    theta = 2.0 * math.pi / TIME_PERIOD * (k % TIME_PERIOD)
    return math.sin(theta), math.cos(theta)


def assemble_observation(position, observations: dict, k: int, goal_sign=None,
                         sensor_mode=SensorMode.NONE) -> np.ndarray:
    """Input vector for the voxel at grid ``position``.

    ``observations`` maps grid cells to ``(vx, vy, volume, touch)``; cells that
    are missing or all-zero count as absent.
    """
    from .sim import moore_slots

    sensor_mode = SensorMode(sensor_mode)
    own = observations.get(tuple(position))
    if own is None or not any(own):
        raise PositionEmpty(f"no voxel at {position}")
    r, c = position
    out = np.zeros(n_inputs(sensor_mode))
    for slot, cell in enumerate(moore_slots(r, c)):
        vx, vy, vol, _ = observations.get(cell, (0.0, 0.0, 0.0, 0.0))
        out[3 * slot: 3 * slot + 3] = (vx, vy, vol)
    out[27], out[28] = time_signal(k)
    out[29] = own[3]
    if sensor_mode == SensorMode.DIRECTION:
        if goal_sign not in (1, -1):
            raise ValueError("direction sensor needs goal_sign of +1 or -1")
        out[30] = goal_sign
    return out


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                    np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def forward(params: ControllerParams, obs) -> np.ndarray | float:
    """Action(s) in (0.6, 1.6) for one observation vector or a stack of them."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape[-1] != params.n_inputs:
        raise LengthMismatch(f"observation has {obs.shape[-1]} entries, expected {params.n_inputs}")
    w1, b1, w2, b2 = params.unpack()
    hidden = np.maximum(obs @ w1 + b1, 0.0)
    u = 0.6 + np.clip(sigmoid(hidden @ w2 + b2), SIGMOID_EPS, 1.0 - SIGMOID_EPS)
    return float(u) if u.ndim == 0 else u
