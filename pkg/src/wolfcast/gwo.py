"""Grey wolf optimizer over box-bounded continuous search spaces.

The pack is steered by its three best members (alpha, beta, delta). Each
coordinate of every wolf is pulled toward a point sampled around each leader
and the three candidate points are averaged. The exploration coefficient ``a``
shrinks linearly from 2 to 0, moving the pack from exploration to exploitation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

Objective = Callable[[np.ndarray], float]


@dataclass(frozen=True)
class SearchSpace:
    """Axis-aligned box ``[lb, ub]``."""

    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        lb = np.atleast_1d(np.asarray(self.lb, dtype=float))
        ub = np.atleast_1d(np.asarray(self.ub, dtype=float))
        if lb.shape != ub.shape or lb.ndim != 1:
            raise ValueError(f"lb and ub must be 1-d of equal length, got {lb.shape} and {ub.shape}")
        if np.any(lb > ub):
            raise ValueError("lb must not exceed ub in any dimension")
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)

    @property
    def dim(self) -> int:
        return self.lb.shape[0]

    @classmethod
    def uniform(cls, low: float, high: float, dim: int) -> "SearchSpace":
        return cls(np.full(dim, float(low)), np.full(dim, float(high)))


@dataclass(frozen=True)
class GwoConfig:
    pack_size: int = 30
    max_iter: int = 50
    epsilon: float = 1e-8
    seed: int = 0
    # consecutive below-epsilon iterations required before stopping
    patience: int = 1

    def __post_init__(self):
        if self.pack_size < 3:
            raise ValueError("pack_size must be at least 3 (alpha, beta and delta)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")


@dataclass
class WolfPack:
    positions: np.ndarray
    fitnesses: Optional[np.ndarray]
    rng: np.random.Generator
    leaders: tuple = ()
    best_position: Optional[np.ndarray] = None
    best_fitness: float = np.inf
    a: float = 2.0
    # last distance vectors to alpha, beta, delta; shape (3, pack_size, dim)
    distances: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass
class GwoResult:
    best_position: np.ndarray
    best_fitness: float
    history: np.ndarray
    n_iter: int
    converged: bool


def sphere(x) -> float:
    """Sum of squared components; minimum 0 at the origin."""
    x = np.asarray(x, dtype=float)
    return float(np.dot(x, x))


def init_pack(space: SearchSpace, config: GwoConfig) -> WolfPack:
    rng = np.random.default_rng(config.seed)
    u = rng.random((config.pack_size, space.dim))
    positions = space.lb + (space.ub - space.lb) * u
    return WolfPack(positions=positions, fitnesses=None, rng=rng)


def _evaluate(objective: Objective, positions: np.ndarray) -> np.ndarray:
    # wolf-index order keeps runs reproducible
    out = np.empty(positions.shape[0])
    for i, x in enumerate(positions):
        f = float(objective(x.copy()))
        out[i] = f if np.isfinite(f) else np.inf
    return out


def _rank(pack: WolfPack) -> None:
    # stable sort: equal fitness goes to the lower index
    order = np.argsort(pack.fitnesses, kind="stable")
    pack.leaders = tuple(int(i) for i in order[:3])
    i = pack.leaders[0]
    if pack.fitnesses[i] < pack.best_fitness or pack.best_position is None:
        pack.best_fitness = float(pack.fitnesses[i])
        pack.best_position = pack.positions[i].copy()


def evaluate_pack(pack: WolfPack, objective: Objective) -> WolfPack:
    pack.fitnesses = _evaluate(objective, pack.positions)
    _rank(pack)
    return pack


def step(pack: WolfPack, objective: Objective, iteration: int, config: GwoConfig,
         space: SearchSpace, draws: Optional[Sequence[np.ndarray]] = None) -> WolfPack:
    """Move every wolf once and re-rank the pack.

    Parameters
    ----------
    pack : WolfPack
        Pack with evaluated fitnesses. Mutated in place and returned.
    iteration : int
        Zero-based iteration counter; sets ``a = 2 * (1 - iteration / max_iter)``.
    draws : pair of arrays, optional
        Pinned ``(r1, r2)`` uniform draws, each of shape ``(3, pack_size, dim)``.
        When omitted they are taken from the pack's generator.
    """
    if pack.fitnesses is None:
        raise ValueError("pack must be evaluated before stepping")
    n, dim = pack.positions.shape
    a = 2.0 * (1.0 - iteration / config.max_iter)
    if draws is None:
        r1 = pack.rng.random((3, n, dim))
        r2 = pack.rng.random((3, n, dim))
    else:
        r1, r2 = (np.asarray(r, dtype=float).reshape(3, n, dim) for r in draws)

    leaders = pack.positions[list(pack.leaders)]          # (3, dim)
    A = 2.0 * a * r1 - a
    C = 2.0 * r2
    X = pack.positions[None, :, :]
    L = leaders[:, None, :]
    D = np.abs(C * L - X)
    candidates = L - A * D
    new_positions = np.clip(candidates.mean(axis=0), space.lb, space.ub)

    pack.a = a
    pack.distances = D
    pack.positions = new_positions
    return evaluate_pack(pack, objective)


def _converged(f_new: float, f_old: float, eps: float) -> bool:
    if not (np.isfinite(f_new) and np.isfinite(f_old)):
        return False
    return abs(f_new - f_old) / max(abs(f_old), eps) < eps


def run(objective: Objective, space: SearchSpace, config: GwoConfig = GwoConfig()) -> GwoResult:
    """Minimise ``objective`` over ``space``.

    Iterates until ``max_iter`` steps or until the relative change of the
    archived best fitness between consecutive iterations stays below
    ``epsilon`` for ``patience`` iterations in a row. ``history[k]`` is the
    archived best after step ``k``.
    """
    pack = evaluate_pack(init_pack(space, config), objective)
    history = []
    converged = False
    quiet = 0
    for it in range(config.max_iter):
        step(pack, objective, it, config, space)
        history.append(pack.best_fitness)
        if len(history) >= 2 and _converged(history[-1], history[-2], config.epsilon):
            quiet += 1
            if quiet >= config.patience:
                converged = True
                break
        else:
            quiet = 0
    return GwoResult(best_position=pack.best_position.copy(), best_fitness=pack.best_fitness,
                     history=np.asarray(history), n_iter=len(history), converged=converged)


class GreyWolfOptimizer(BaseEstimator):
    """Estimator-style wrapper around :func:`run`.

    >>> opt = GreyWolfOptimizer(seed=1).minimize(sphere, [-5, -5], [5, 5])
    >>> opt.best_fitness_ < 1e-2
    True
    """

    def __init__(self, pack_size=30, max_iter=50, epsilon=1e-8, seed=0, patience=1):
        self.pack_size = pack_size
        self.max_iter = max_iter
        self.epsilon = epsilon
        self.seed = seed
        self.patience = patience

    def _config(self) -> GwoConfig:
        return GwoConfig(pack_size=self.pack_size, max_iter=self.max_iter,
                         epsilon=self.epsilon, seed=self.seed, patience=self.patience)

    def minimize(self, objective: Objective, lb, ub) -> "GreyWolfOptimizer":
        result = run(objective, SearchSpace(lb, ub), self._config())
        self.result_ = result
        self.best_position_ = result.best_position
        self.best_fitness_ = result.best_fitness
        self.history_ = result.history
        self.n_iter_ = result.n_iter
        return self
