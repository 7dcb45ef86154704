"""Robot body genotype: a directly encoded 5x5 voxel grid.

Cells hold ``0`` for empty or a :class:`VoxelKind` code. The grid is stored
row-major with row 0 at the top of the robot.
"""

from __future__ import annotations

import enum
import logging
from collections import deque

import numpy as np

logger = logging.getLogger(__name__)

GRID = 5
MIN_VOXELS = 5
MAX_VOXELS = 25
INIT_MIN_VOXELS = 10
INIT_MAX_VOXELS = 20
MUTATION_RETRIES = 100


class VoxelKind(enum.IntEnum):
    RIGID = 1
    SOFT = 2
    HORIZONTAL = 3
    VERTICAL = 4

    @property
    def actuated(self) -> bool:
        return self in (VoxelKind.HORIZONTAL, VoxelKind.VERTICAL)


KINDS = tuple(VoxelKind)
_CHARS = {0: ".", 1: "R", 2: "S", 3: "H", 4: "V"}
_CODES = {c: k for k, c in _CHARS.items()}


class InvalidGenome(ValueError):
    pass


class MorphGenome:
    """A 5x5 body grid. Instances are treated as immutable values."""

    __slots__ = ("grid",)

    def __init__(self, grid):
        grid = np.array(grid, dtype=np.int8)
        if grid.shape != (GRID, GRID):
            raise InvalidGenome(f"grid must be {GRID}x{GRID}, got {grid.shape}")
        if grid.min() < 0 or grid.max() > 4:
            raise InvalidGenome("cell codes must be in 0..4")
        grid.setflags(write=False)
        self.grid = grid

    @classmethod
    def from_string(cls, text: str) -> "MorphGenome":
        if len(text) != GRID * GRID or any(ch not in _CODES for ch in text):
            raise InvalidGenome(f"bad genome string {text!r}")
        codes = [_CODES[ch] for ch in text]
        return cls(np.array(codes).reshape(GRID, GRID))

    def to_string(self) -> str:
        return "".join(_CHARS[int(v)] for v in self.grid.ravel())

    @property
    def n_voxels(self) -> int:
        return int(np.count_nonzero(self.grid))

    def occupied(self) -> list[tuple[int, int]]:
        return [(int(r), int(c)) for r, c in zip(*np.nonzero(self.grid))]

    def actuated_cells(self) -> list[tuple[int, int]]:
        """Actuated cell positions in row-major order."""
        return [(r, c) for r, c in self.occupied() if self.grid[r, c] >= VoxelKind.HORIZONTAL]

    def __eq__(self, other):
        return isinstance(other, MorphGenome) and np.array_equal(self.grid, other.grid)

    def __hash__(self):
        return hash(self.grid.tobytes())

    def __repr__(self):
        return f"MorphGenome({self.to_string()!r})"


def _neighbors4(r, c):
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        rr, cc = r + dr, c + dc
        if 0 <= rr < GRID and 0 <= cc < GRID:
            yield rr, cc


def is_connected(occ: np.ndarray) -> bool:
    """True iff the nonzero cells of ``occ`` form one 4-connected component."""
    cells = list(zip(*np.nonzero(occ)))
    if not cells:
        return False
    rows, cols = occ.shape
    seen = {cells[0]}
    queue = deque([cells[0]])
    while queue:
        r, c = queue.popleft()
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < rows and 0 <= cc < cols and occ[rr, cc] and (rr, cc) not in seen:
                seen.add((rr, cc))
                queue.append((rr, cc))
    return len(seen) == len(cells)


def is_valid(genome: MorphGenome | np.ndarray) -> bool:
    grid = genome.grid if isinstance(genome, MorphGenome) else np.asarray(genome)
    n = int(np.count_nonzero(grid))
    return MIN_VOXELS <= n <= MAX_VOXELS and is_connected(grid)


def _frontier(grid: np.ndarray) -> list[tuple[int, int]]:
    """Empty cells orthogonally adjacent to an occupied cell, row-major."""
    out = []
    for r in range(GRID):
        for c in range(GRID):
            if grid[r, c] == 0 and any(grid[rr, cc] for rr, cc in _neighbors4(r, c)):
                out.append((r, c))
    return out


def _random_kind(rng: np.random.Generator) -> int:
    return int(KINDS[rng.integers(len(KINDS))])


def random_init(rng: np.random.Generator) -> MorphGenome:
    """Grow a connected body of 10 to 20 random voxels from a random seed cell."""
    target = int(rng.integers(INIT_MIN_VOXELS, INIT_MAX_VOXELS + 1))
    grid = np.zeros((GRID, GRID), dtype=np.int8)
    r, c = divmod(int(rng.integers(GRID * GRID)), GRID)
    grid[r, c] = _random_kind(rng)
    for _ in range(target - 1):
        frontier = _frontier(grid)
        r, c = frontier[rng.integers(len(frontier))]
        grid[r, c] = _random_kind(rng)
    return MorphGenome(grid)


def apply_edit(grid: np.ndarray, op: str, rng: np.random.Generator) -> bool:
    """Apply one in-place edit to ``grid``. Returns False if the edit had no target."""
    if op == "add":
        frontier = _frontier(grid)
        if not frontier:
            return False
        r, c = frontier[rng.integers(len(frontier))]
        grid[r, c] = _random_kind(rng)
        return True
    cells = list(zip(*np.nonzero(grid)))
    if not cells:
        return False
    r, c = cells[rng.integers(len(cells))]
    if op == "remove":
        grid[r, c] = 0
    elif op == "change":
        others = [int(k) for k in KINDS if k != grid[r, c]]
        grid[r, c] = others[rng.integers(len(others))]
    else:
        raise ValueError(f"unknown edit {op!r}")
    return True


EDITS = ("add", "remove", "change")


def mutate_once(parent: MorphGenome, rng: np.random.Generator, ops=None) -> MorphGenome | None:
    """One mutation attempt; returns None if the candidate is invalid.

    ``ops`` forces the edit list (used by tests); otherwise 1-3 edits are drawn
    uniformly from add/remove/change.
    """
    if ops is None:
        n_edits = int(rng.integers(1, 4))
        ops = [EDITS[rng.integers(3)] for _ in range(n_edits)]
    grid = parent.grid.copy()
    for op in ops:
        if not apply_edit(grid, op, rng):
            return None
    if not is_valid(grid):
        return None
    return MorphGenome(grid)


def mutate(parent: MorphGenome, rng: np.random.Generator, ops=None) -> MorphGenome:
    """Mutate a body by up to three edits, retrying whole mutations that break validity.

    After ``MUTATION_RETRIES`` failed attempts the parent is returned unchanged.
    """
    if not is_valid(parent):
        raise InvalidGenome(f"parent is invalid: {parent}")
    for _ in range(MUTATION_RETRIES):
        child = mutate_once(parent, rng, ops)
        if child is not None:
            return child
    logger.warning("mutation retries exhausted for %s; returning parent", parent.to_string())
    return parent
