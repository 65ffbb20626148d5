"""Linear Gaussian (possibly cyclic) structural equation models.

The model covers both the instrument setting and the augmentation setting::

    X = kappa * tau * Y + Gamma^T Z + T^T C + sigma * N_X
    Y = f^T X + kappa * eps^T C + sigma * N_Y

With ``kappa = 1`` and a non-empty ``Z`` block this is the instrument
example; with ``k = 0`` it is the confounded augmentation example.  Samples
are produced through the reduced form, or by iterating the structural
assignments to their fixed point for the cyclic case.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

TOL = 1e-10
MAX_ITERS = 10_000
_SOLVABLE_EPS = 1e-12


class SolvabilityError(ValueError):
    """Raised when ``I - M`` of the structural form is singular."""


class ConvergenceError(RuntimeError):
    """Raised when a fixed-point iteration does not settle.

    The last iterate is kept on ``last`` for inspection.
    """

    def __init__(self, message: str, last: Any = None, iters: int = 0):
        super().__init__(message)
        self.last = last
        self.iters = iters


def _as_matrix(value, rows: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 1 and rows == 1:
        arr = arr.reshape(1, -1)
    if arr.size == 0:
        arr = arr.reshape(rows, 0)
    if arr.ndim != 2 or arr.shape[0] != rows:
        raise ValueError(f"{name} must have {rows} rows, got shape {arr.shape}")
    return arr


@dataclass
class SemSpec:
    """Parameters of the linear SEM.

    ``gamma_mat`` is the m x k instrument loading (Gamma transposed) and
    ``conf_x`` the m x q confounder loading on X (T transposed).  ``exo_cov``
    optionally maps ``"z"`` / ``"c"`` to covariance matrices; identity when
    absent.
    """

    tau: np.ndarray
    f: np.ndarray
    gamma_mat: np.ndarray
    conf_x: np.ndarray
    conf_y: np.ndarray
    sigma: float = 1.0
    kappa: float = 1.0
    exo_cov: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.f = np.atleast_1d(np.asarray(self.f, dtype=float))
        m = self.f.shape[0]
        self.tau = np.atleast_1d(np.asarray(self.tau, dtype=float))
        self.conf_y = np.atleast_1d(np.asarray(self.conf_y, dtype=float))
        self.gamma_mat = _as_matrix(self.gamma_mat, m, "gamma_mat")
        self.conf_x = _as_matrix(self.conf_x, m, "conf_x")
        self.sigma = float(self.sigma)
        self.kappa = float(self.kappa)
        self.exo_cov = {
            key: np.atleast_2d(np.asarray(val, dtype=float))
            for key, val in (self.exo_cov or {}).items()
        }

    @property
    def m(self) -> int:
        return self.f.shape[0]

    @property
    def k(self) -> int:
        return self.gamma_mat.shape[1]

    @property
    def q(self) -> int:
        return self.conf_x.shape[1]

    @property
    def loop_gain(self) -> float:
        """kappa * f.tau, the gain of the X -> Y -> X feedback loop."""
        return self.kappa * float(self.f @ self.tau)

    def with_kappa(self, kappa: float) -> SemSpec:
        return SemSpec(self.tau, self.f, self.gamma_mat, self.conf_x, self.conf_y,
                       self.sigma, kappa, dict(self.exo_cov))

    def cov_z(self) -> np.ndarray:
        return self.exo_cov.get("z", np.eye(self.k))

    def cov_c(self) -> np.ndarray:
        return self.exo_cov.get("c", np.eye(self.q))

    def to_dict(self) -> dict:
        out = {
            "m": self.m,
            "k": self.k,
            "q": self.q,
            "tau": self.tau.tolist(),
            "f": self.f.tolist(),
            "gamma_mat": self.gamma_mat.tolist(),
            "conf_x": self.conf_x.tolist(),
            "conf_y": self.conf_y.tolist(),
            "sigma": self.sigma,
            "kappa": self.kappa,
        }
        if self.exo_cov:
            out["exo_cov"] = {key: val.tolist() for key, val in sorted(self.exo_cov.items())}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> SemSpec:
        m = len(data["f"])

        def mat(key):
            arr = np.asarray(data.get(key, []), dtype=float)
            return arr.reshape(m, -1) if arr.size else np.zeros((m, 0))

        conf_x = mat("conf_x")
        return cls(
            tau=data.get("tau", np.zeros(m)),
            f=data["f"],
            gamma_mat=mat("gamma_mat"),
            conf_x=conf_x,
            conf_y=data.get("conf_y", np.zeros(conf_x.shape[1])),
            sigma=data.get("sigma", 1.0),
            kappa=data.get("kappa", 1.0),
            exo_cov=data.get("exo_cov") or {},
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ExogenousDraw:
    """Exogenous variables (Z, C, N_X, N_Y).

    Arrays may carry a leading sample axis, in which case the object holds
    one draw per row.
    """

    z: np.ndarray
    c: np.ndarray
    n_x: np.ndarray
    n_y: np.ndarray | float

    def __len__(self) -> int:
        return np.shape(self.n_y)[0] if np.ndim(self.n_y) else 1

    def row(self, i: int) -> ExogenousDraw:
        return ExogenousDraw(self.z[i], self.c[i], self.n_x[i], float(self.n_y[i]))

    def batched(self) -> ExogenousDraw:
        if np.ndim(self.n_y):
            return self
        return ExogenousDraw(
            np.atleast_1d(self.z)[None, :], np.atleast_1d(self.c)[None, :],
            np.atleast_1d(self.n_x)[None, :], np.array([float(self.n_y)]),
        )


@dataclass
class Dataset:
    """Rows of treatment ``x``, outcome ``y`` and optional ``z`` / ``c`` blocks."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray | None = None
    c: np.ndarray | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        n = self.y.shape[0]
        if n < 1:
            raise ValueError("dataset needs at least one row")
        if self.x.shape[0] != n:
            raise ValueError(f"x has {self.x.shape[0]} rows, y has {n}")
        for name in ("z", "c"):
            block = getattr(self, name)
            if block is None:
                continue
            block = np.asarray(block, dtype=float)
            if block.ndim == 1:
                block = block[:, None]
            if block.shape[0] != n:
                raise ValueError(f"{name} has {block.shape[0]} rows, y has {n}")
            setattr(self, name, block)

    @property
    def n_samples(self) -> int:
        return self.y.shape[0]

    def centered(self) -> Dataset:
        def ctr(a):
            return None if a is None else a - a.mean(axis=0)
        meta = dict(self.meta, centered=True)
        return Dataset(ctr(self.x), self.y - self.y.mean(), ctr(self.z), ctr(self.c), meta)

    def subset(self, rows) -> Dataset:
        def take(a):
            return None if a is None else a[rows]
        return Dataset(self.x[rows], self.y[rows], take(self.z), take(self.c), dict(self.meta))

    def header(self) -> list[str]:
        cols = [f"x_{j}" for j in range(self.x.shape[1])] + ["y"]
        if self.z is not None:
            cols += [f"z_{j}" for j in range(self.z.shape[1])]
        if self.c is not None:
            cols += [f"c_{j}" for j in range(self.c.shape[1])]
        return cols

    def to_csv(self, path) -> None:
        blocks = [self.x, self.y[:, None]]
        blocks += [b for b in (self.z, self.c) if b is not None]
        table = np.hstack(blocks)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header())
            for row in table:
                writer.writerow([format(v, ".17g") for v in row])

    @classmethod
    def from_csv(cls, path, meta: dict | None = None) -> Dataset:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [[float(v) for v in row] for row in reader if row]
        table = np.asarray(rows, dtype=float).reshape(len(rows), len(header))

        def block(prefix):
            idx = [i for i, name in enumerate(header) if name.startswith(prefix + "_")]
            return table[:, idx] if idx else None

        if "y" not in header:
            raise ValueError(f"{path}: missing 'y' column")
        return cls(block("x"), table[:, header.index("y")], block("z"), block("c"),
                   dict(meta or {}, source=str(Path(path))))


@dataclass
class ValidationReport:
    checks: dict[str, bool]
    stable: bool
    loop_gain: float

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def lines(self) -> list[str]:
        out = [f"{name}: {'pass' if ok else 'FAIL'}" for name, ok in self.checks.items()]
        out.append(f"stable (|kappa f.tau| = {abs(self.loop_gain):.6g} < 1): "
                   f"{'yes' if self.stable else 'no'}")
        return out


def validate_spec(spec: SemSpec) -> ValidationReport:
    m = spec.m
    checks = {
        "dimensions": (spec.tau.shape == (m,) and spec.conf_y.shape == (spec.q,)
                       and spec.gamma_mat.shape[0] == m and spec.conf_x.shape[0] == m),
        "sigma_positive": spec.sigma > 0,
        "kappa_nonnegative": spec.kappa >= 0,
    }
    for key, size in (("z", spec.k), ("c", spec.q)):
        if key in spec.exo_cov:
            cov = spec.exo_cov[key]
            ok = cov.shape == (size, size) and np.allclose(cov, cov.T)
            if ok and size:
                ok = bool(np.linalg.eigvalsh(cov).min() >= -1e-12)
            checks[f"exo_cov_{key}"] = ok
    gain = spec.loop_gain if checks["dimensions"] else np.nan
    checks["solvable"] = bool(np.isfinite(gain) and abs(1.0 - gain) > _SOLVABLE_EPS)
    return ValidationReport(checks, bool(abs(gain) < 1.0), float(gain))


def _block_matrix(spec: SemSpec) -> np.ndarray:
    m = spec.m
    a = np.eye(m + 1)
    a[:m, m] = -spec.kappa * spec.tau
    a[m, :m] = -spec.f
    return a


def reduced_form_matrix(spec: SemSpec) -> np.ndarray:
    """Inverse of ``[[I, -kappa tau], [-f^T, 1]]``."""
    if not validate_spec(spec).checks["solvable"]:
        raise SolvabilityError(f"kappa * f.tau = {spec.loop_gain!r} makes the system singular")
    # Block inverse via the Schur complement 1 - kappa f.tau.
    m = spec.m
    s = 1.0 - spec.loop_gain
    kt = spec.kappa * spec.tau
    inv = np.empty((m + 1, m + 1))
    inv[:m, :m] = np.eye(m) + np.outer(kt, spec.f) / s
    inv[:m, m] = kt / s
    inv[m, :m] = spec.f / s
    inv[m, m] = 1.0 / s
    return inv


def _sqrt_factor(cov: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(cov)
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals)


def draw_exogenous(spec: SemSpec, n: int, seed) -> ExogenousDraw:
    """Draw ``n`` rows in the fixed per-row order Z, C, N_X, N_Y."""
    rng = np.random.default_rng(seed)
    k, q, m = spec.k, spec.q, spec.m
    raw = rng.standard_normal((n, k + q + m + 1))
    z = raw[:, :k]
    c = raw[:, k:k + q]
    if "z" in spec.exo_cov:
        z = z @ _sqrt_factor(spec.cov_z()).T
    if "c" in spec.exo_cov:
        c = c @ _sqrt_factor(spec.cov_c()).T
    return ExogenousDraw(z, c, raw[:, k + q:k + q + m], raw[:, -1])


def structural_noise(spec: SemSpec, exo: ExogenousDraw) -> tuple[np.ndarray, np.ndarray]:
    """Exogenous inputs to the X and Y assignments, per row."""
    exo = exo.batched()
    u_x = exo.z @ spec.gamma_mat.T + exo.c @ spec.conf_x.T + spec.sigma * exo.n_x
    u_y = spec.kappa * (exo.c @ spec.conf_y) + spec.sigma * exo.n_y
    return u_x, u_y


def solve_reduced(spec: SemSpec, exo: ExogenousDraw) -> tuple[np.ndarray, np.ndarray]:
    u_x, u_y = structural_noise(spec, exo)
    w = np.hstack([u_x, u_y[:, None]]) @ reduced_form_matrix(spec).T
    return w[:, :-1], w[:, -1]


def sample(spec: SemSpec, n: int, seed) -> tuple[Dataset, ExogenousDraw]:
    """Sample ``n`` i.i.d. rows through the reduced form.

    Returns the dataset together with the exogenous draws that produced it,
    so interventions can be evaluated on the same noise.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    reduced_form_matrix(spec)
    exo = draw_exogenous(spec, n, seed)
    x, y = solve_reduced(spec, exo)
    meta = {"seed": seed, "sem": spec.digest(), "centered": False, "z_role": "instrument"}
    return Dataset(x, y, exo.z if spec.k else None, exo.c, meta), exo


def _iterate(spec: SemSpec, u_x, u_y, x0, y0, max_iters, tol):
    """Gauss-Seidel sweeps (X, then Y from the new X), vectorised over rows."""
    x = np.broadcast_to(np.asarray(x0, dtype=float), u_x.shape).copy()
    y = np.broadcast_to(np.asarray(y0, dtype=float), u_y.shape).copy()
    kt = spec.kappa * spec.tau
    # Each sweep contracts the Y error by |kappa f.tau|; stop once the
    # a-posteriori bound delta * r / (1 - r) is below tol as well.
    r = abs(spec.loop_gain)
    scale = r / (1.0 - r) if r < 1.0 else np.inf
    for it in range(1, max_iters + 1):
        x_new = y[:, None] * kt + u_x
        y_new = x_new @ spec.f + u_y
        delta = max(np.abs(x_new - x).max(initial=0.0), np.abs(y_new - y).max(initial=0.0))
        x, y = x_new, y_new
        if delta < tol and delta * scale < tol:
            return x, y, it
    raise ConvergenceError(f"no fixed point after {max_iters} iterations", (x, y), max_iters)


def sample_iterative(spec: SemSpec, draw: ExogenousDraw, x0=None, y0=0.0,
                     max_iters: int = MAX_ITERS, tol: float = TOL):
    """Settle the structural assignments for one exogenous draw (or a batch).

    Returns ``(x, y, iters)``.  Requires ``|kappa f.tau| < 1``.
    """
    if not validate_spec(spec).stable:
        raise ValueError(f"iteration needs |kappa f.tau| < 1, got {spec.loop_gain!r}")
    single = not np.ndim(draw.n_y)
    u_x, u_y = structural_noise(spec, draw)
    x0 = np.zeros(spec.m) if x0 is None else x0
    x, y, iters = _iterate(spec, u_x, u_y, x0, y0, max_iters, tol)
    if single:
        return x[0], float(y[0]), iters
    return x, y, iters


def sample_soft_do(spec: SemSpec, da, g_draws: np.ndarray, exo: ExogenousDraw,
                   max_iters: int = MAX_ITERS, tol: float = TOL) -> Dataset:
    """Sample the SEM with the X mechanism replaced by its augmented version.

    Every X assignment is followed by the augmentation ``x + strength *
    gamma_mat @ g`` before it feeds back into Y.
    """
    from causalda.augmentation import invariance_defect

    if invariance_defect(da, spec.f) > 1e-10:
        raise ValueError("augmentation is not outcome invariant for this SEM")
    if not validate_spec(spec).stable:
        raise ValueError(f"iteration needs |kappa f.tau| < 1, got {spec.loop_gain!r}")
    exo = exo.batched()
    g = np.asarray(g_draws, dtype=float).reshape(len(exo), -1)
    u_x, u_y = structural_noise(spec, exo)
    u_x = u_x + da.strength * g @ da.gamma_mat.T
    x, y, iters = _iterate(spec, u_x, u_y, np.zeros(spec.m), 0.0, max_iters, tol)
    meta = {"sem": spec.digest(), "centered": False, "z_role": "da", "iters": iters}
    return Dataset(x, y, g, exo.c, meta)


def sample_hard_do(spec: SemSpec, x_values: np.ndarray, seed) -> Dataset:
    """Set X to ``x_values`` and draw Y from its own mechanism.

    Fresh (C, N_Y) come from the same stream layout as :func:`sample`, so a
    shared seed shares the confounder and outcome noise.
    """
    x_values = np.asarray(x_values, dtype=float)
    if x_values.ndim == 1:
        x_values = x_values[:, None]
    exo = draw_exogenous(spec, x_values.shape[0], seed)
    y = x_values @ spec.f + spec.kappa * (exo.c @ spec.conf_y) + spec.sigma * exo.n_y
    meta = {"seed": seed, "sem": spec.digest(), "centered": False, "intervention": "hard"}
    return Dataset(x_values, y, None, exo.c, meta)


def random_spec(m: int, rng: np.random.Generator, *, q: int | None = None, k: int = 0,
                sigma: float = 0.1, kappa: float = 1.0, cyclic: bool = False) -> SemSpec:
    """Draw SEM coefficients the way the simulation protocol does.

    f, eps and T are standard normal; with ``cyclic`` f and tau are instead
    drawn uniformly on the unit sphere.
    """
    q = m if q is None else q
    f = rng.standard_normal(m)
    conf_y = rng.standard_normal(q)
    conf_x = rng.standard_normal((q, m)).T
    gamma_mat = rng.standard_normal((k, m)).T if k else np.zeros((m, 0))
    tau = np.zeros(m)
    if cyclic:
        f = f / np.linalg.norm(f)
        tau = rng.standard_normal(m)
        tau /= np.linalg.norm(tau)
    return SemSpec(tau, f, gamma_mat, conf_x, conf_y, sigma, kappa)


def population_moments(spec: SemSpec) -> tuple[np.ndarray, np.ndarray]:
    """Population Cov(X) and Cov(X, xi) with xi = Y - f^T X."""
    inv = reduced_form_matrix(spec)
    m = spec.m
    # Loadings of (X, Y) on the stacked exogenous vector (Z, C, N_X, N_Y).
    load = np.zeros((m + 1, spec.k + spec.q + m + 1))
    load[:m, :spec.k] = spec.gamma_mat @ _sqrt_factor(spec.cov_z())
    sc = _sqrt_factor(spec.cov_c())
    load[:m, spec.k:spec.k + spec.q] = spec.conf_x @ sc
    load[m, spec.k:spec.k + spec.q] = spec.kappa * spec.conf_y @ sc
    load[:m, spec.k + spec.q:-1] = spec.sigma * np.eye(m)
    load[m, -1] = spec.sigma
    w = inv @ load
    cov = w @ w.T
    cov_x = cov[:m, :m]
    xi_load = w[m] - spec.f @ w[:m]
    return cov_x, w[:m] @ xi_load
