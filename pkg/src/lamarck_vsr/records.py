"""Per-individual learning logs shared by both inner learners."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Sample:
    """One evaluated controller. For RL, ``theta`` is the actor at episode start."""

    theta: np.ndarray | None
    f: float
    inherited: bool = False


@dataclass
class LearnerRecord:
    learner: str  # "bo" or "rl"
    samples: list = field(default_factory=list)
    before_learning: float = -math.inf
    failed: bool = False
    final_theta: np.ndarray | None = None

    @property
    def best_index(self) -> int:
        """Index of the highest objective; earliest wins ties."""
        if not self.samples:
            return -1
        best = 0
        for i, s in enumerate(self.samples):
            if s.f > self.samples[best].f:
                best = i
        return best

    @property
    def best(self) -> Sample | None:
        i = self.best_index
        return None if i < 0 else self.samples[i]

    @property
    def fitness(self) -> float:
        if self.failed or not self.samples:
            return -math.inf
        return self.samples[self.best_index].f

    def top(self, n: int) -> list[Sample]:
        """The ``n`` best samples, descending by objective, earlier index first on ties."""
        order = sorted(range(len(self.samples)), key=lambda i: (-self.samples[i].f, i))
        return [self.samples[i] for i in order[:n]]

    def to_rows(self, robot_id: int, store_theta: str = "all") -> list[dict]:
        """JSON-lines rows. ``store_theta`` is "all", "best" or "none"."""
        best = self.best_index
        rows = []
        for i, s in enumerate(self.samples):
            keep = store_theta == "all" or (store_theta == "best" and i == best)
            row = {"robot_id": robot_id, "learner": self.learner, "eval_index": i,
                   "f": s.f, "inherited": s.inherited,
                   "theta": s.theta.tolist() if keep and s.theta is not None else None}
            if self.learner == "rl":
                row["episode_index"] = i
                row["return"] = s.f
                row["snapshot_stored"] = row["theta"] is not None
            rows.append(row)
        return rows
