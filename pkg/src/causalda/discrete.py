"""Binary cyclic SEM in the style of colored MNIST.

An uncolored base image ``n_x`` receives a color ``c``; the label is a
color-invariant function of the image, flipped with probability 0.25, and
the color is the label flipped with probability ``e``.  The assignments are
iterated jointly from an all-zero start until they stop changing.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from causalda.sem import ConvergenceError, Dataset

LABEL_NOISE = 0.25
MAX_DISCRETE_ITERS = 5

LabelFn = Callable[[np.ndarray], np.ndarray]
BaseSampler = Callable[[np.random.Generator, int], np.ndarray]


def colour(c: np.ndarray, base: np.ndarray) -> np.ndarray:
    """Append the color bit as the last column of the image."""
    return np.hstack([base, np.asarray(c, dtype=np.int8).reshape(-1, 1)])


def parity_label(width: int | None = None) -> LabelFn:
    """Label = parity of the first ``width`` image bits (color ignored)."""

    def label(x: np.ndarray) -> np.ndarray:
        bits = x[:, :-1] if width is None else x[:, :width]
        return (bits.sum(axis=1) % 2).astype(np.int8)

    return label


def bit_sampler(width: int) -> BaseSampler:
    def draw(rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.integers(0, 2, size=(n, width), dtype=np.int8)

    return draw


def discrete_xor_sem_sample(label_fn: LabelFn, base_sampler: BaseSampler, e: float,
                            n: int, seed) -> Dataset:
    """Observational samples of the xor SEM.

    ``meta["iters"]`` holds, per row, the first step at which the joint state
    was a fixed point.  A row that has not settled after five steps means
    ``label_fn`` reads the color channel, and raises ``ConvergenceError``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= e <= 1.0:
        raise ValueError(f"flip probability must lie in [0, 1], got {e}")
    rng = np.random.default_rng(seed)
    base = np.asarray(base_sampler(rng, n), dtype=np.int8)
    n_y = (rng.random(n) < LABEL_NOISE).astype(np.int8)
    n_c = (rng.random(n) < e).astype(np.int8)

    x = np.zeros((n, base.shape[1] + 1), dtype=np.int8)
    y_true = np.zeros(n, dtype=np.int8)
    y = np.zeros(n, dtype=np.int8)
    c = np.zeros(n, dtype=np.int8)
    iters = np.zeros(n, dtype=np.int64)
    settled = np.zeros(n, dtype=bool)

    def step(x, y_true, y, c):
        return colour(c, base), label_fn(x).astype(np.int8), y_true ^ n_y, y ^ n_c

    for t in range(0, MAX_DISCRETE_ITERS + 1):
        nxt = step(x, y_true, y, c)
        fixed = (np.all(nxt[0] == x, axis=1) & (nxt[1] == y_true)
                 & (nxt[2] == y) & (nxt[3] == c))
        newly = fixed & ~settled
        iters[newly] = t
        settled |= fixed
        if t == MAX_DISCRETE_ITERS:
            break
        x, y_true, y, c = nxt
    if not settled.all():
        bad = int((~settled).sum())
        raise ConvergenceError(
            f"{bad} rows did not settle within {MAX_DISCRETE_ITERS} iterations; "
            "is the label function reading the color channel?",
            (x, y), MAX_DISCRETE_ITERS)
    meta = {"seed": seed, "e": e, "iters": iters, "y_true": y_true, "discrete": True}
    return Dataset(x, y, None, c, meta)


def discrete_hard_do(label_fn: LabelFn, x_values: np.ndarray, seed) -> Dataset:
    """Set the image (color included) and draw the label from its mechanism."""
    x_values = np.asarray(x_values, dtype=np.int8)
    rng = np.random.default_rng(seed)
    n_y = (rng.random(x_values.shape[0]) < LABEL_NOISE).astype(np.int8)
    y = label_fn(x_values).astype(np.int8) ^ n_y
    return Dataset(x_values, y, None, x_values[:, -1:], {"seed": seed, "intervention": "hard"})


def ate_formula(label: np.ndarray) -> np.ndarray:
    """E[Y | do(x)] = (1 - 2 p) f(x) + p for label noise p = 0.25."""
    return (1.0 - 2.0 * LABEL_NOISE) * np.asarray(label, dtype=float) + LABEL_NOISE
