"""2D mass-spring simulation of voxel soft robots on a staircase height field.

Each voxel is a quad of point masses shared with its grid neighbours, held by
four edge springs and two diagonal shear springs. Actuated voxels scale the
rest length of their two edges along the actuated axis by the command ``u``.
Integration is semi-implicit Euler with contact by projection.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .controller import ControllerParams, SensorMode
from .morphology import GRID, InvalidGenome, MorphGenome, VoxelKind, is_connected, is_valid

ACTUATION_MIN = 0.6
ACTUATION_MAX = 1.6
EPISODE_STEPS = 500

# spring axis tags
HORIZONTAL_EDGE, VERTICAL_EDGE, SHEAR = 0, 1, 2


class ActionOutOfRange(ValueError):
    pass


class ActionCountMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.001
    substeps_per_action: int = 10
    gravity: float = 9.81
    ground_friction: float = 0.5
    voxel_size: float = 0.1
    voxel_mass: float = 0.1
    stiffness_rigid: float = 10000.0
    stiffness_soft: float = 1000.0
    stiffness_horizontal: float = 1000.0
    stiffness_vertical: float = 1000.0
    damping: float = 8.0
    drag: float = 0.5
    actuation_min: float = ACTUATION_MIN
    actuation_max: float = ACTUATION_MAX

    def __post_init__(self):
        if self.actuation_min != ACTUATION_MIN or self.actuation_max != ACTUATION_MAX:
            raise ValueError("actuation range is fixed at [0.6, 1.6]")
        if self.dt <= 0 or self.substeps_per_action < 1:
            raise ValueError("dt must be > 0 and substeps_per_action >= 1")
        if min(self.stiffness_rigid, self.stiffness_soft,
               self.stiffness_horizontal, self.stiffness_vertical) <= 0:
            raise ValueError("stiffnesses must be positive")

    def stiffness(self, kind: int) -> float:
        return {
            VoxelKind.RIGID: self.stiffness_rigid,
            VoxelKind.SOFT: self.stiffness_soft,
            VoxelKind.HORIZONTAL: self.stiffness_horizontal,
            VoxelKind.VERTICAL: self.stiffness_vertical,
        }[VoxelKind(kind)]


@dataclass
class SoftBody:
    """Topology plus the mutable point-mass state of one robot."""

    pos: np.ndarray  # (n_mass, 2)
    vel: np.ndarray  # (n_mass, 2)
    mass: np.ndarray
    spring_a: np.ndarray
    spring_b: np.ndarray
    rest0: np.ndarray
    stiffness: np.ndarray
    damping: np.ndarray
    spring_axis: np.ndarray
    spring_act: np.ndarray  # index into the action vector, -1 if not actuated
    corners: np.ndarray  # (n_vox, 4) counter-clockwise from bottom-left
    rest_area: np.ndarray
    kinds: np.ndarray
    cells: list  # grid (row, col) of each voxel
    neighbors: np.ndarray  # (n_act, 9) Moore neighbourhood voxel indices, -1 if absent

    @property
    def inv_mass(self) -> np.ndarray:
        return 1.0 / self.mass

    @property
    def n_actuators(self) -> int:
        return self.neighbors.shape[0]

    def copy(self) -> "SoftBody":
        return dataclasses.replace(self, pos=self.pos.copy(), vel=self.vel.copy())


@dataclass
class Ground:
    """Staircase ground: column ``i`` spans one voxel width with top at ``heights[i]`` voxels."""

    heights: np.ndarray
    start_column: float = 1.0

    def heights_m(self, voxel_size: float) -> np.ndarray:
        return np.asarray(self.heights, dtype=np.float64) * voxel_size


@dataclass
class SimState:
    body: SoftBody
    ground: Ground
    config: SimConfig
    step_index: int = 0
    touched: np.ndarray = field(default=None)  # per point mass, contact during the last control step
    rest: np.ndarray = field(default=None)

    def touch_flags(self) -> dict:
        return {cell: bool(self.touched[self.body.corners[v]].any())
                for v, cell in enumerate(self.body.cells)}


def moore_slots(r: int, c: int) -> list[tuple[int, int]]:
    """Own cell first, then the 8 surrounding cells in row-major order."""
    ring = [(r + dr, c + dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]
    return [(r, c)] + ring


def _ground_kernel_args(ground: Ground, config: SimConfig):
    return ground.heights_m(config.voxel_size), config.voxel_size, 0.0


def build_body(genome: MorphGenome, config: SimConfig, ground: Ground,
               strict: bool = True) -> SimState:
    """Instantiate the body at rest with its lowest masses on the ground.

    ``strict=False`` skips the evolutionary size bounds and only requires a
    non-empty connected body.
    """
    if not isinstance(genome, MorphGenome):
        raise InvalidGenome(f"not a genome: {genome!r}")
    ok = is_valid(genome) if strict else (genome.n_voxels > 0 and is_connected(genome.grid))
    if not ok:
        raise InvalidGenome(f"invalid genome: {genome!r}")
    h = config.voxel_size
    grid = genome.grid
    cells = genome.occupied()
    bottom_row = max(r for r, _ in cells)
    left_col = min(c for _, c in cells)

    vertex_index = {}
    for r, c in cells:
        for vr, vc in ((r + 1, c), (r + 1, c + 1), (r, c + 1), (r, c)):
            vertex_index.setdefault((vr, vc), None)
    ordered = sorted(vertex_index)
    for i, key in enumerate(ordered):
        vertex_index[key] = i

    x0 = ground.start_column * h
    heights = ground.heights_m(h)
    base = 0.0
    for vr, vc in ordered:
        if vr == bottom_row + 1:
            x = x0 + (vc - left_col) * h
            base = max(base, K.ground_height(x, heights, h, 0.0))
    pos = np.array([[x0 + (vc - left_col) * h, base + (bottom_row + 1 - vr) * h]
                    for vr, vc in ordered], dtype=np.float64)
    mass = np.zeros(len(ordered))

    actuated = genome.actuated_cells()
    act_of = {cell: j for j, cell in enumerate(actuated)}
    voxel_of = {cell: v for v, cell in enumerate(cells)}

    sa, sb, rest0, stiff, axis, act = [], [], [], [], [], []
    corners, kinds = [], []
    for v, (r, c) in enumerate(cells):
        kind = int(grid[r, c])
        bl, br = vertex_index[(r + 1, c)], vertex_index[(r + 1, c + 1)]
        tr, tl = vertex_index[(r, c + 1)], vertex_index[(r, c)]
        corners.append((bl, br, tr, tl))
        kinds.append(kind)
        for m in (bl, br, tr, tl):
            mass[m] += config.voxel_mass / 4.0
        k = config.stiffness(kind)
        j = act_of.get((r, c), -1)
        edges = ((bl, br, HORIZONTAL_EDGE, h), (tl, tr, HORIZONTAL_EDGE, h),
                 (bl, tl, VERTICAL_EDGE, h), (br, tr, VERTICAL_EDGE, h),
                 (bl, tr, SHEAR, h * np.sqrt(2.0)), (br, tl, SHEAR, h * np.sqrt(2.0)))
        for a, b, ax, length in edges:
            sa.append(a)
            sb.append(b)
            rest0.append(length)
            stiff.append(k)
            axis.append(ax)
            drives = (kind == VoxelKind.HORIZONTAL and ax == HORIZONTAL_EDGE) or (
                kind == VoxelKind.VERTICAL and ax == VERTICAL_EDGE)
            act.append(j if drives else -1)

    neighbors = np.full((len(actuated), K.N_SLOTS), -1, dtype=np.int64)
    for j, (r, c) in enumerate(actuated):
        for slot, cell in enumerate(moore_slots(r, c)):
            neighbors[j, slot] = voxel_of.get(cell, -1)

    body = SoftBody(
        pos=pos,
        vel=np.zeros_like(pos),
        mass=mass,
        spring_a=np.array(sa, dtype=np.int64),
        spring_b=np.array(sb, dtype=np.int64),
        rest0=np.array(rest0),
        stiffness=np.array(stiff),
        damping=np.full(len(sa), config.damping),
        spring_axis=np.array(axis, dtype=np.int64),
        spring_act=np.array(act, dtype=np.int64),
        corners=np.array(corners, dtype=np.int64),
        rest_area=np.full(len(cells), h * h),
        kinds=np.array(kinds, dtype=np.int64),
        cells=cells,
        neighbors=neighbors,
    )
    touched = pos[:, 1] <= np.array([K.ground_height(x, heights, h, 0.0) for x in pos[:, 0]]) + 1e-12
    return SimState(body=body, ground=ground, config=config, step_index=0,
                    touched=touched, rest=body.rest0.copy())


def _check_actions(state: SimState, actions) -> np.ndarray:
    actions = np.asarray(actions, dtype=np.float64).reshape(-1)
    if actions.shape[0] != state.body.n_actuators:
        raise ActionCountMismatch(
            f"expected {state.body.n_actuators} actions, got {actions.shape[0]}")
    if np.any(actions < ACTUATION_MIN) or np.any(actions > ACTUATION_MAX) or np.any(np.isnan(actions)):
        raise ActionOutOfRange(f"actions must lie in [{ACTUATION_MIN}, {ACTUATION_MAX}]")
    return actions


def step(state: SimState, actions) -> SimState:
    """One control step; returns a new state and leaves ``state`` untouched."""
    actions = _check_actions(state, actions)
    new = SimState(body=state.body.copy(), ground=state.ground, config=state.config,
                   step_index=state.step_index + 1, touched=state.touched.copy(),
                   rest=state.rest.copy())
    _advance(new, actions)
    return new


def _advance(state: SimState, actions: np.ndarray) -> None:
    body, cfg = state.body, state.config
    K.set_rest_lengths(state.rest, body.rest0, body.spring_act, actions)
    heights, width, origin = _ground_kernel_args(state.ground, cfg)
    K.substeps(body.pos, body.vel, body.inv_mass, body.spring_a, body.spring_b, state.rest,
               body.stiffness, body.damping, cfg.substeps_per_action, cfg.dt, cfg.gravity,
               cfg.drag, heights, width, origin, cfg.ground_friction, state.touched)


def voxel_obs_array(state: SimState) -> np.ndarray:
    out = np.zeros((len(state.body.cells), 4))
    K.voxel_observations(state.body.pos, state.body.vel, state.body.corners,
                         state.body.rest_area, state.touched, out)
    return out


def observe(state: SimState) -> dict:
    """Per-cell (vx, vy, volume, touch) for all 25 grid cells; absent cells are zeros."""
    arr = voxel_obs_array(state)
    result = {(r, c): (0.0, 0.0, 0.0, 0.0) for r in range(GRID) for c in range(GRID)}
    for v, cell in enumerate(state.body.cells):
        result[cell] = tuple(float(x) for x in arr[v])
    return result


def center_of_mass_x(state_or_body) -> float:
    body = state_or_body.body if isinstance(state_or_body, SimState) else state_or_body
    return float(K.center_of_mass_x(body.pos, body.mass))


def ground_penetration(state: SimState) -> float:
    """Largest depth of any point mass below the ground top at its column (0 if none)."""
    heights, width, origin = _ground_kernel_args(state.ground, state.config)
    depth = 0.0
    for x, y in state.body.pos:
        depth = max(depth, K.ground_height(x, heights, width, origin) - y)
    return depth


@dataclass
class EpisodeResult:
    fitness: float
    rewards: np.ndarray
    com_x: np.ndarray
    goal_sign: int

    def to_json(self, include_com: bool = True) -> str:
        record = {"fitness": self.fitness, "goal_sign": self.goal_sign}
        if include_com:
            record["com_x"] = self.com_x.tolist()
        return json.dumps(record)


def rewards_from_com(com_x: np.ndarray, goal_sign: int) -> tuple[np.ndarray, float]:
    """Per-step goal-signed displacement and their in-order sum."""
    rewards = goal_sign * np.diff(com_x)
    total = 0.0
    for r in rewards:
        total += float(r)
    return rewards, total


def run_episode(genome: MorphGenome, controller: ControllerParams, env,
                steps: int = EPISODE_STEPS, goal_sign: int | None = None,
                config: SimConfig | None = None) -> EpisodeResult:
    """Closed-loop rollout of a fixed controller.

    ``env`` supplies ``ground``, ``goal_sign`` and ``sensor_mode``; an explicit
    ``goal_sign`` overrides the environment's. Fitness is the in-order sum of
    the per-step rewards, i.e. the goal-signed centre-of-mass displacement.
    """
    config = config or SimConfig()
    goal = env.goal_sign if goal_sign is None else goal_sign
    if goal not in (1, -1):
        raise ValueError("goal_sign must be +1 or -1")
    if controller.sensor_mode != env.sensor_mode:
        raise ValueError(
            f"controller sensor mode {controller.sensor_mode} != environment {env.sensor_mode}")
    state = build_body(genome, config, env.ground)
    body = state.body
    heights, width, origin = _ground_kernel_args(state.ground, config)
    com = np.zeros(steps + 1)
    K.rollout(body.pos, body.vel, body.mass, body.inv_mass, body.spring_a, body.spring_b,
              body.rest0, body.stiffness, body.damping, body.spring_act, body.corners,
              body.rest_area, body.neighbors, state.touched, controller.values,
              controller.n_inputs, float(goal), controller.sensor_mode == SensorMode.DIRECTION,
              steps, config.substeps_per_action, config.dt, config.gravity, config.drag,
              heights, width, origin, config.ground_friction, com)
    rewards, total = rewards_from_com(com, goal)
    return EpisodeResult(fitness=total, rewards=rewards, com_x=com, goal_sign=goal)
