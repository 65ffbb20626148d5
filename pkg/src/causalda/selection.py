"""Choosing the IVL regularisation strength alpha.

Three strategies: random hold-out cross validation (CV), hold-out by level
of the discretised augmentation parameters (LCV), and matching the norm of
the estimate to a target length (CC).  Ties always go to the smaller alpha.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from causalda.estimators import ivl_path, predict

DEFAULT_BOUNDS = (1e-4, 1.0)
DEFAULT_COUNT = 32
TIE_TOL = 1e-12


@dataclass(frozen=True)
class AlphaGrid:
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("alpha grid is empty")
        if any(not v > 0 for v in vals):
            raise ValueError("alpha grid values must be positive")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("alpha grid must be strictly ascending")
        object.__setattr__(self, "values", vals)

    @classmethod
    def log_uniform(cls, low: float = DEFAULT_BOUNDS[0], high: float = DEFAULT_BOUNDS[1],
                    count: int = DEFAULT_COUNT) -> AlphaGrid:
        return cls(tuple(np.logspace(np.log10(low), np.log10(high), count)))

    @classmethod
    def explicit(cls, values) -> AlphaGrid:
        return cls(tuple(sorted(float(v) for v in values)))

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class SelectionResult:
    chosen_alpha: float
    scores: list[float]
    strategy: str
    seed: int | None = None

    @property
    def score(self) -> float:
        return self.scores[_argmin_small_alpha(self.scores)]


def _argmin_small_alpha(scores) -> int:
    # Scores within TIE_TOL of the minimum count as ties; the grid is
    # ascending, so the first tied index is the smallest alpha.
    scores = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(scores)):
        raise ValueError("non-finite selection score")
    best = scores.min()
    return int(np.flatnonzero(scores <= best + TIE_TOL * max(1.0, abs(best)))[0])


def _holdout_scores(x, y, z, grid: AlphaGrid, test: np.ndarray) -> list[float]:
    train = ~test
    if not train.any() or not test.any():
        raise ValueError("hold-out split left one side empty")
    ests = ivl_path(x[train], y[train], z[train], grid.values)
    return [float(np.mean((y[test] - predict(est, x[test])) ** 2)) for est in ests]


def select_alpha_cv(x, y, z, grid: AlphaGrid, holdout_frac: float = 0.2, seed=None,
                    folds: int = 1) -> SelectionResult:
    """Hold-out MSE per alpha; ``folds > 1`` switches to k-fold averaging."""
    x, y, z = np.asarray(x, float), np.asarray(y, float).reshape(-1), np.asarray(z, float)
    n = y.shape[0]
    if not 0.0 < holdout_frac < 1.0:
        raise ValueError("holdout_frac must lie in (0, 1)")
    if n < 10:
        raise ValueError("cross validation needs at least 10 rows")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    if folds > 1:
        scores = np.zeros(len(grid))
        for part in np.array_split(perm, folds):
            test = np.zeros(n, dtype=bool)
            test[part] = True
            scores += np.asarray(_holdout_scores(x, y, z, grid, test)) / folds
        scores = scores.tolist()
    else:
        test = np.zeros(n, dtype=bool)
        test[perm[:int(round(holdout_frac * n))]] = True
        scores = _holdout_scores(x, y, z, grid, test)
    idx = _argmin_small_alpha(scores)
    return SelectionResult(grid.values[idx], scores, "CV", seed)


def discretize_levels(g, bins: int = 2) -> np.ndarray:
    """Joint level id after cutting every column of ``g`` at its quantiles."""
    g = np.asarray(g, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if bins < 2:
        raise ValueError("need at least 2 bins")
    codes = np.zeros(g.shape, dtype=np.int64)
    for j in range(g.shape[1]):
        edges = np.quantile(g[:, j], np.linspace(0, 1, bins + 1)[1:-1])
        codes[:, j] = np.searchsorted(edges, g[:, j], side="right")
    _, levels = np.unique(codes, axis=0, return_inverse=True)
    return levels.reshape(-1)


def select_alpha_lcv(x, y, g, grid: AlphaGrid, level_frac: float = 0.2, bins: int = 2,
                     seed=None) -> SelectionResult:
    """Hold out a fraction of the distinct levels of ``g`` (at least one)."""
    x, y, g = np.asarray(x, float), np.asarray(y, float).reshape(-1), np.asarray(g, float)
    if g.size == 0:
        raise ValueError("level cross validation needs augmentation parameters")
    levels = discretize_levels(g, bins)
    distinct = np.unique(levels)
    if distinct.size < 2:
        raise ValueError("need at least 2 distinct levels of g")
    rng = np.random.default_rng(seed)
    n_out = min(max(1, int(round(level_frac * distinct.size))), distinct.size - 1)
    held = rng.choice(distinct, size=n_out, replace=False)
    test = np.isin(levels, held)
    scores = _holdout_scores(x, y, g, grid, test)
    idx = _argmin_small_alpha(scores)
    return SelectionResult(grid.values[idx], scores, "LCV", seed)


def select_alpha_cc(x, y, z, grid: AlphaGrid, target_norm: float) -> SelectionResult:
    """Alpha whose estimate has Euclidean norm closest to ``target_norm``."""
    if target_norm < 0:
        raise ValueError("target_norm must be non-negative")
    ests = ivl_path(x, y, z, grid.values)
    scores = [abs(float(np.linalg.norm(est.h)) - target_norm) for est in ests]
    idx = _argmin_small_alpha(scores)
    return SelectionResult(grid.values[idx], scores, "CC", None)
