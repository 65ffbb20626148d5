"""Additive, outcome-invariant data augmentation.

An operator translates every treatment row by ``strength * gamma_mat @ g``
with a fresh ``g ~ N(0, g_cov)``.  When the columns of ``gamma_mat`` span a
subspace of the null space of a linear outcome map, the outcome is unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from causalda.sem import Dataset

EIG_FLOOR = 1e-12


@dataclass
class DaOperator:
    gamma_mat: np.ndarray
    strength: float = 1.0
    g_cov: np.ndarray | None = None
    label: str = "custom"

    def __post_init__(self):
        self.gamma_mat = np.asarray(self.gamma_mat, dtype=float)
        if self.gamma_mat.ndim == 1:
            self.gamma_mat = self.gamma_mat[:, None]
        if self.strength < 0:
            raise ValueError("augmentation strength must be non-negative")
        self.strength = float(self.strength)
        if self.g_cov is not None:
            self.g_cov = np.atleast_2d(np.asarray(self.g_cov, dtype=float))

    @property
    def m(self) -> int:
        return self.gamma_mat.shape[0]

    @property
    def k(self) -> int:
        return self.gamma_mat.shape[1]

    def with_strength(self, strength: float) -> DaOperator:
        return replace(self, strength=strength)

    def draw_g(self, n: int, rng: np.random.Generator) -> np.ndarray:
        g = rng.standard_normal((n, self.k))
        if self.g_cov is not None:
            vals, vecs = np.linalg.eigh(self.g_cov)
            g = g @ (vecs * np.sqrt(np.clip(vals, 0.0, None))).T
        return g

    def shift(self, g: np.ndarray) -> np.ndarray:
        """Row-wise translation for parameters ``g`` (n x k)."""
        return self.strength * np.asarray(g, dtype=float) @ self.gamma_mat.T

    def to_dict(self) -> dict:
        out = {"gamma_mat": self.gamma_mat.tolist(), "strength": self.strength,
               "label": self.label}
        if self.g_cov is not None:
            out["g_cov"] = self.g_cov.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> DaOperator:
        return cls(np.asarray(data["gamma_mat"], dtype=float), data.get("strength", 1.0),
                   data.get("g_cov"), data.get("label", "custom"))


def _canonical_signs(basis: np.ndarray) -> np.ndarray:
    # First entry of each column that is clearly nonzero is made positive.
    out = basis.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        idx = np.flatnonzero(np.abs(col) > 1e-12)
        if idx.size and col[idx[0]] < 0:
            out[:, j] = -col
    return out


def orthogonal_complement(vectors: np.ndarray) -> np.ndarray:
    """Orthonormal basis (as columns) of the null space of ``vectors^T``.

    ``vectors`` is m x r; the result is m x (m - rank).
    """
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    m = vectors.shape[0]
    _, s, vt = np.linalg.svd(vectors.T, full_matrices=True)
    tol = max(vectors.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int((s > tol).sum())
    return _canonical_signs(vt[rank:].T.reshape(m, m - rank))


def nullspace_basis(f, strength: float = 1.0) -> DaOperator:
    """Augmentation along an orthonormal basis of the null space of ``f^T``."""
    f = np.asarray(f, dtype=float).reshape(-1)
    if not np.any(f):
        raise ValueError("null space of the zero vector is the whole space; f must be nonzero")
    return DaOperator(orthogonal_complement(f), strength, None, "nullspace")


def subset_basis(da: DaOperator, keep_prob: float, seed) -> DaOperator:
    """Keep each column independently with probability ``keep_prob``.

    Redraws until at least one column survives.
    """
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError(f"keep_prob must lie in (0, 1], got {keep_prob}")
    rng = np.random.default_rng(seed)
    while True:
        keep = rng.random(da.k) < keep_prob
        if keep.any():
            break
    g_cov = None if da.g_cov is None else da.g_cov[np.ix_(keep, keep)]
    return DaOperator(da.gamma_mat[:, keep], da.strength, g_cov, f"subset({keep_prob:g})")


def gaussian_noise_da(x_cov, scale: float = 0.1) -> DaOperator:
    """Additive noise ``N(0, scale * x_cov)``.

    ``gamma_mat`` is the symmetric PSD square root of ``scale * x_cov``;
    eigenvalues below 1e-12 are clamped to zero.
    """
    x_cov = np.atleast_2d(np.asarray(x_cov, dtype=float))
    if x_cov.shape[0] != x_cov.shape[1] or not np.allclose(x_cov, x_cov.T, atol=1e-10):
        raise ValueError("covariance must be a symmetric square matrix")
    if scale < 0:
        raise ValueError("scale must be non-negative")
    vals, vecs = np.linalg.eigh(x_cov * scale)
    if vals.min(initial=0.0) < -1e-10 * max(1.0, abs(vals).max(initial=0.0)):
        raise ValueError(f"covariance is not PSD (min eigenvalue {vals.min():.3g})")
    vals = np.where(vals < EIG_FLOOR, 0.0, vals)
    root = (vecs * np.sqrt(vals)) @ vecs.T
    return DaOperator(root, 1.0, None, f"gaussian({scale:g})")


def apply(da: DaOperator, data: Dataset, seed, multiplier: int = 1) -> Dataset:
    """Augment every row once (``multiplier`` times when > 1).

    The drawn parameters replace the dataset's z-block; y is copied through.
    """
    if data.x.shape[1] != da.m:
        raise ValueError(f"operator acts on {da.m} columns, data has {data.x.shape[1]}")
    if multiplier < 1:
        raise ValueError("multiplier must be >= 1")
    rng = np.random.default_rng(seed)
    if multiplier > 1:
        data = data.subset(np.tile(np.arange(data.n_samples), multiplier))
    g = da.draw_g(data.n_samples, rng)
    meta = dict(data.meta, z_role="da", augmentation=da.label, strength=da.strength)
    return Dataset(data.x + da.shift(g), data.y.copy(), g, data.c, meta)


def invariance_defect(da: DaOperator, f) -> float:
    """Relative size of ``f^T gamma_mat``; zero for an outcome-invariant operator."""
    f = np.asarray(f, dtype=float).reshape(-1)
    if da.k == 0 or da.strength == 0:
        return 0.0
    denom = np.linalg.norm(f) * np.linalg.norm(da.gamma_mat)
    return float(np.linalg.norm(f @ da.gamma_mat) / denom) if denom else 0.0


def check_invariance(f_fn, da: DaOperator, probe: np.ndarray, seed) -> float:
    """Largest change of ``f_fn`` over augmented probe rows."""
    probe = np.asarray(probe, dtype=float)
    rng = np.random.default_rng(seed)
    moved = probe + da.shift(da.draw_g(probe.shape[0], rng))
    return float(np.max(np.abs(f_fn(moved) - f_fn(probe)), initial=0.0))
