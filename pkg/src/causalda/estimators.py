"""Closed-form linear estimators: OLS, 2SLS and IVL regression.

IVL regression minimises ``||y - P_z X h||^2 + alpha ||y - X h||^2``.  Its
solution is ordinary least squares between the reweighted pair

    x' = a x + b P_z x,   y' = a y + b P_z y,   a = sqrt(alpha),
    b = sqrt(1 + alpha) - sqrt(alpha),

where ``P_z`` projects onto the column space of the instruments.  Rank
deficient solves always return the minimum-norm solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import comb
from typing import Any

import numpy as np

METHODS = ("ERM", "IV2SLS", "IVL", "NULL")


@dataclass
class LinearEstimate:
    h: np.ndarray
    method: str
    alpha: float | None = None
    intercept: float = 0.0
    fit_meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float).reshape(-1)
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not np.all(np.isfinite(self.h)):
            raise ValueError("coefficients must be finite")

    def to_record(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "alpha": "" if self.alpha is None else format(self.alpha, ".17g"),
            "intercept": format(self.intercept, ".17g"),
            "coef": ";".join(format(v, ".17g") for v in self.h),
            "rank": self.fit_meta.get("rank", ""),
            "cond": format(self.fit_meta.get("cond", float("nan")), ".6g"),
        }

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> LinearEstimate:
        alpha = float(rec["alpha"]) if rec.get("alpha") not in ("", None) else None
        coef = [float(v) for v in str(rec["coef"]).split(";") if v != ""]
        meta = {}
        if rec.get("rank") not in ("", None):
            meta["rank"] = int(rec["rank"])
        if rec.get("cond") not in ("", None):
            meta["cond"] = float(rec["cond"])
        return cls(np.array(coef), rec["method"], alpha, float(rec["intercept"]), meta)


@dataclass
class RiskReport:
    erm_risk: float
    iv_risk: float | None = None
    ivl_risk: float | None = None
    gmm_risk: float | None = None


def _as_2d(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def _rcond(shape) -> float:
    return max(shape) * np.finfo(float).eps


def _lstsq(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, dict]:
    h, _, rank, s = np.linalg.lstsq(x, y, rcond=_rcond(x.shape))
    s_pos = s[s > 0]
    cond = float(s_pos[0] / s_pos[-1]) if s_pos.size else float("inf")
    return h, {"rank": int(rank), "cond": cond, "rank_deficient": bool(rank < x.shape[1])}


def _centre(x, y, z=None):
    xm, ym = x.mean(axis=0), float(y.mean())
    zc = None if z is None else z - z.mean(axis=0)
    return x - xm, y - ym, zc, xm, ym


def fit_ols(x, y, center: bool = True) -> LinearEstimate:
    """Minimum-norm least squares of ``y`` on ``x``."""
    x, y = _as_2d(x), np.asarray(y, dtype=float).reshape(-1)
    if center:
        xc, yc, _, xm, ym = _centre(x, y)
    else:
        xc, yc, xm, ym = x, y, np.zeros(x.shape[1]), 0.0
    h, meta = _lstsq(xc, yc)
    meta["n"] = x.shape[0]
    return LinearEstimate(h, "ERM", None, ym - float(xm @ h), meta)


class Projector:
    """Orthogonal projector onto the column space of ``z``.

    Built once from the thin SVD so it can be applied to many blocks.
    """

    def __init__(self, z):
        z = _as_2d(z)
        self.n = z.shape[0]
        if z.shape[1] == 0:
            self.basis = np.zeros((self.n, 0))
            return
        u, s, _ = np.linalg.svd(z, full_matrices=False)
        tol = _rcond(z.shape) * (s[0] if s.size else 0.0)
        self.basis = u[:, s > tol]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def __call__(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return self.basis @ (self.basis.T @ v)


def conditional_projection(z, v) -> np.ndarray:
    """Project each column of ``v`` onto the column space of ``z``."""
    return Projector(z)(v)


def fit_2sls(x, y, z, center: bool = True) -> LinearEstimate:
    x, y, z = _as_2d(x), np.asarray(y, dtype=float).reshape(-1), _as_2d(z)
    if center:
        xc, yc, zc, xm, ym = _centre(x, y, z)
    else:
        xc, yc, zc, xm, ym = x, y, z, np.zeros(x.shape[1]), 0.0
    proj = Projector(zc)
    h, meta = _lstsq(proj(xc), yc)
    meta.update(n=x.shape[0], z_rank=proj.rank)
    return LinearEstimate(h, "IV2SLS", None, ym - float(xm @ h), meta)


def ivl_weights(alpha: float) -> tuple[float, float]:
    """(a, b) with a = sqrt(alpha) and b = sqrt(1 + alpha) - sqrt(alpha).

    ``b`` is evaluated as 1 / (sqrt(1 + alpha) + sqrt(alpha)) to avoid
    cancellation at large alpha.
    """
    a = np.sqrt(alpha)
    return float(a), float(1.0 / (np.sqrt(1.0 + alpha) + a))


def ivl_path(x, y, z, alphas, center: bool = True) -> list[LinearEstimate]:
    """IVL estimates for several alphas sharing one projection."""
    x, y, z = _as_2d(x), np.asarray(y, dtype=float).reshape(-1), _as_2d(z)
    if center:
        xc, yc, zc, xm, ym = _centre(x, y, z)
    else:
        xc, yc, zc, xm, ym = x, y, z, np.zeros(x.shape[1]), 0.0
    proj = Projector(zc)
    px, py = proj(xc), proj(yc)
    out = []
    for alpha in alphas:
        if not alpha > 0:
            raise ValueError(f"alpha must be positive, got {alpha!r}")
        a, b = ivl_weights(alpha)
        h, meta = _lstsq(a * xc + b * px, a * yc + b * py)
        meta.update(n=x.shape[0], z_rank=proj.rank)
        out.append(LinearEstimate(h, "IVL", float(alpha), ym - float(xm @ h), meta))
    return out


def fit_ivl(x, y, z, alpha: float, center: bool = True) -> LinearEstimate:
    return ivl_path(x, y, z, [alpha], center)[0]


def ivl_objective(h, x, y, z, alpha: float) -> float:
    """Empirical IV risk plus alpha times empirical ERM risk (per sample)."""
    x, y = _as_2d(x), np.asarray(y, dtype=float).reshape(-1)
    fit = x @ np.asarray(h, dtype=float)
    n = x.shape[0]
    iv = np.sum((y - conditional_projection(z, fit)) ** 2) / n
    erm = np.sum((y - fit) ** 2) / n
    return float(iv + alpha * erm)


def gmm_iv_risk(h, x, y, z) -> float:
    """``r^T Z Z^+ r / n`` for the residual ``r = y - x h``.

    Multiply by ``n`` for the unnormalised quadratic form.
    """
    x, y = _as_2d(x), np.asarray(y, dtype=float).reshape(-1)
    r = y - x @ np.asarray(h, dtype=float)
    return float(r @ conditional_projection(z, r) / x.shape[0])


def risk_report(est: LinearEstimate, x, y, z=None, alpha: float | None = None) -> RiskReport:
    x, y = _as_2d(x), np.asarray(y, dtype=float).reshape(-1)
    fit = predict(est, x)
    n = x.shape[0]
    erm = float(np.sum((y - fit) ** 2) / n)
    if z is None:
        return RiskReport(erm)
    iv = float(np.sum((y - conditional_projection(z, fit)) ** 2) / n)
    alpha = est.alpha if alpha is None else alpha
    ivl = None if alpha is None else iv + alpha * erm
    r = y - fit
    gmm = float(r @ conditional_projection(z, r) / n)
    return RiskReport(erm, iv, ivl, gmm)


def null_predictor(y, n_features: int) -> LinearEstimate:
    """Zero slope with the outcome mean as intercept."""
    y = np.asarray(y, dtype=float).reshape(-1)
    return LinearEstimate(np.zeros(n_features), "NULL", None, float(y.mean()), {"n": y.shape[0]})


def poly_features(x, degree: int) -> np.ndarray:
    """Monomials of total degree 1..degree in graded lexicographic order.

    For columns (x1, x2) and degree 2: x1, x2, x1^2, x1 x2, x2^2.
    """
    if not isinstance(degree, (int, np.integer)) or not 1 <= degree <= 5:
        raise ValueError(f"degree must be an integer in 1..5, got {degree!r}")
    x = _as_2d(x)
    m = x.shape[1]
    cols = []
    for d in range(1, degree + 1):
        for idx in combinations_with_replacement(range(m), d):
            cols.append(np.prod(x[:, list(idx)], axis=1))
    out = np.column_stack(cols) if cols else np.zeros((x.shape[0], 0))
    assert out.shape[1] == comb(m + degree, degree) - 1
    return out


def predict(est: LinearEstimate, x) -> np.ndarray:
    x = _as_2d(x)
    if x.shape[1] != est.h.shape[0]:
        raise ValueError(f"estimate has {est.h.shape[0]} coefficients, x has {x.shape[1]} columns")
    return x @ est.h + est.intercept
