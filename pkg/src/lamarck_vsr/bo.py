"""Bayesian optimisation of controller parameters.

Gaussian-process surrogate with a fixed Matern-5/2 kernel (zero prior mean,
unit signal variance, small diagonal jitter), upper-confidence-bound
acquisition, and multi-start L-BFGS-B maximisation of the acquisition over
the box ``[-1, 1]^d``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from .records import LearnerRecord, Sample

logger = logging.getLogger(__name__)

SQRT5 = math.sqrt(5.0)


class FactorizationFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class BOConfig:
    budget: int = 50
    kappa: float = 3.0
    n_seeds: int = 8
    lengthscale: float = 10.0
    jitter: float = 1e-6
    restarts: int = 8
    memory: int = 10
    max_iter: int = 200
    # random points screened by UCB to pick the L-BFGS-B starting points
    n_candidates: int = 512
    low: float = -1.0
    high: float = 1.0
    # when False, inherited seeds are evaluated on top of the budget
    seeds_in_budget: bool = True

    def __post_init__(self):
        if self.budget < 1 or self.n_seeds < 1 or self.restarts < 1:
            raise ValueError("budget, n_seeds and restarts must be >= 1")
        if self.seeds_in_budget and self.n_seeds > self.budget:
            raise ValueError("n_seeds cannot exceed budget when seeds count toward it")

    @property
    def total_evaluations(self) -> int:
        return self.budget if self.seeds_in_budget else self.budget + self.n_seeds


def matern52(r, lengthscale: float = 10.0):
    """Matern nu=5/2 correlation at distance ``r``."""
    a = SQRT5 * np.asarray(r, dtype=np.float64) / lengthscale
    return (1.0 + a + a * a / 3.0) * np.exp(-a)


class GPModel:
    """Exact GP regression on raw (unnormalised) inputs and targets."""

    def __init__(self, lengthscale: float = 10.0, jitter: float = 1e-6):
        self.lengthscale = lengthscale
        self.jitter = jitter
        self.X = None
        self.y = None
        self._chol = None
        self._alpha = None

    @property
    def n(self) -> int:
        return 0 if self.X is None else self.X.shape[0]

    def fit(self, X, y) -> "GPModel":
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if X.shape[0] != y.shape[0] or X.shape[0] == 0:
            raise ValueError("need matching, non-empty X and y")
        gram = matern52(cdist(X, X), self.lengthscale)
        gram[np.diag_indices_from(gram)] += self.jitter
        try:
            chol = cho_factor(gram, lower=True)
        except LinAlgError as exc:
            raise FactorizationFailure(str(exc)) from exc
        self.X, self.y = X, y
        self._chol = chol
        self._alpha = cho_solve(chol, y)
        return self

    def add(self, theta, f) -> "GPModel":
        theta = np.asarray(theta, dtype=np.float64).reshape(1, -1)
        if self.X is None:
            return self.fit(theta, [f])
        return self.fit(np.vstack([self.X, theta]), np.append(self.y, f))

    def posterior(self, theta):
        """Mean and standard deviation at one point or a batch of points."""
        Q = np.atleast_2d(np.asarray(theta, dtype=np.float64))
        k = matern52(cdist(Q, self.X), self.lengthscale)
        mu = k @ self._alpha
        v = cho_solve(self._chol, k.T)
        var = np.maximum(1.0 - np.sum(k.T * v, axis=0), 0.0)
        sigma = np.sqrt(var)
        if np.ndim(theta) == 1:
            return float(mu[0]), float(sigma[0])
        return mu, sigma

    def ucb_and_grad(self, theta, kappa: float):
        """UCB value and its gradient at a single point."""
        theta = np.asarray(theta, dtype=np.float64)
        diff = theta[None, :] - self.X
        r = np.sqrt(np.sum(diff * diff, axis=1))
        a = SQRT5 * r / self.lengthscale
        e = np.exp(-a)
        k = (1.0 + a + a * a / 3.0) * e
        # d k / d theta = -(5 / 3l^2) (1 + a) e^{-a} (theta - x)
        dk = -(5.0 / (3.0 * self.lengthscale ** 2)) * ((1.0 + a) * e)[:, None] * diff
        mu = k @ self._alpha
        dmu = self._alpha @ dk
        v = cho_solve(self._chol, k)
        var = 1.0 - k @ v
        dvar = -2.0 * (v @ dk)
        if var <= 1e-24:
            sigma, dsigma = 0.0, np.zeros_like(theta)
        else:
            sigma = math.sqrt(var)
            dsigma = dvar / (2.0 * sigma)
        return mu + kappa * sigma, dmu + kappa * dsigma


def posterior(model: GPModel, theta):
    return model.posterior(theta)


def ucb(mu, sigma, kappa: float = 3.0):
    return mu + kappa * sigma


def propose_next(model: GPModel, config: BOConfig, rng: np.random.Generator) -> np.ndarray:
    """Maximise UCB over the box from several starts; returns the best point found.

    Starts are the best observed point plus the highest-UCB members of a
    random candidate batch.
    """
    d = model.X.shape[1]
    lo, hi = config.low, config.high
    starts = [np.clip(model.X[int(np.argmax(model.y))], lo, hi)]
    if config.restarts > 1:
        cand = rng.uniform(lo, hi, (max(config.n_candidates, config.restarts - 1), d))
        scores = ucb(*model.posterior(cand), config.kappa)
        starts += list(cand[np.argsort(-scores, kind="stable")[: config.restarts - 1]])

    def negative(theta):
        value, grad = model.ucb_and_grad(theta, config.kappa)
        return -value, -grad

    best_x, best_val = None, -np.inf
    for x0 in starts:
        val0 = -negative(x0)[0]
        if val0 > best_val:
            best_x, best_val = x0, val0
        try:
            res = minimize(negative, x0, jac=True, method="L-BFGS-B",
                           bounds=[(lo, hi)] * d,
                           options={"maxcor": config.memory, "maxiter": config.max_iter})
        except (ValueError, FloatingPointError) as exc:
            logger.debug("acquisition restart failed: %s", exc)
            continue
        x = np.clip(res.x, lo, hi)
        val = -negative(x)[0]
        if np.isfinite(val) and val > best_val:
            best_x, best_val = x, val
    return np.clip(best_x, lo, hi)


def run_bo_learning(evaluate, seeds, config: BOConfig, rng: np.random.Generator,
                    inherited=None) -> LearnerRecord:
    """Run one robot's BO loop.

    ``evaluate`` maps a parameter vector to its objective. Every seed is
    evaluated fresh first (parental objective values are never reused), then
    proposals are added until the evaluation total is reached. ``inherited``
    flags which seeds came from the parent; the best of those fresh
    re-evaluations is the before-learning fitness.
    """
    seeds = [np.array(s, dtype=np.float64) for s in seeds]
    if not seeds:
        raise ValueError("BO needs at least one seed")
    if inherited is None:
        inherited = [True] * len(seeds)
    total = config.total_evaluations
    if len(seeds) > total:
        raise ValueError(f"{len(seeds)} seeds exceed the {total}-evaluation budget")
    record = LearnerRecord("bo")
    model = GPModel(config.lengthscale, config.jitter)
    X, y = [], []
    for theta, flag in zip(seeds, inherited):
        f = float(evaluate(theta))
        record.samples.append(Sample(theta, f, bool(flag)))
        X.append(theta)
        y.append(f)
    model.fit(np.array(X), np.array(y))
    inherited_f = [s.f for s in record.samples if s.inherited]
    record.before_learning = max(inherited_f) if inherited_f else -math.inf
    while len(record.samples) < total:
        theta = propose_next(model, config, rng)
        f = float(evaluate(theta))
        record.samples.append(Sample(theta, f, False))
        model.add(theta, f)
    return record
