"""Experiment orchestration: seeded sweeps, single runs, ingestion, demos.

A sweep is a grid of data coordinates (kappa, gamma) times trials.  Every
(coordinate, trial) pair gets its own 64-bit seed derived from the master
seed, and all randomness in that trial flows from it, so the output does
not depend on how trials are spread over worker processes.  alpha is an
estimator setting: an alpha sweep reuses one dataset per trial for every
alpha value.
"""

from __future__ import annotations

import json
import logging
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
from threadpoolctl import threadpool_limits

from causalda import augmentation as aug
from causalda import discrete
from causalda.augmentation import DaOperator
from causalda.estimators import (
    LinearEstimate,
    fit_2sls,
    fit_ols,
    ivl_path,
    poly_features,
    predict,
    risk_report,
)
from causalda.evaluation import (
    EvalConfig,
    SweepResult,
    TrialRecord,
    aggregate,
    cer,
    ncer,
    write_aggregate,
    write_trials,
)
from causalda.selection import AlphaGrid, select_alpha_cc, select_alpha_cv, select_alpha_lcv
from causalda.sem import Dataset, SemSpec, population_moments, random_spec, sample, validate_spec

log = logging.getLogger(__name__)

AXES = ("kappa", "gamma", "alpha")
DATA_AXES = ("kappa", "gamma")
WORKERS_ENV = "CAUSALDA_WORKERS"

# Sub-stream ids inside a trial.
_SEM, _SAMPLE, _DA_BASIS, _DA_APPLY, _SELECT = range(5)
_FIXED_SEM_KEY = 1 << 20

_METHOD_RE = re.compile(r"^(ERM|DA_ERM|DA_IV|IV|DA_IVL|IVL)(?:\((cv|lcv|cc|fixed|[0-9.eE+-]+)\))?$")
_DA_RE = re.compile(r"^(nullspace|orthogonal|subset|gaussian)(?:\(([0-9.eE+-/]+)\))?$")


class ConfigError(ValueError):
    """Invalid experiment or ingest configuration (CLI exit code 1)."""


@dataclass(frozen=True)
class Method:
    base: str
    mode: str | None = None

    @classmethod
    def parse(cls, text: str) -> Method:
        match = _METHOD_RE.match(text.strip())
        if not match:
            raise ConfigError(f"unknown method {text!r}")
        base, mode = match.groups()
        if base in ("DA_IVL", "IVL"):
            mode = mode or "fixed"
            if mode not in ("cv", "lcv", "cc", "fixed"):
                try:
                    if not float(mode) > 0:
                        raise ValueError
                except ValueError:
                    raise ConfigError(f"alpha in {text!r} must be a positive number") from None
        elif mode is not None:
            raise ConfigError(f"method {base} takes no argument")
        return cls(base, mode)

    @property
    def label(self) -> str:
        return self.base if self.mode is None else f"{self.base}({self.mode})"

    @property
    def uses_augmentation(self) -> bool:
        return self.base.startswith("DA_")


def _parse_fraction(text: str) -> float:
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


@dataclass
class ExperimentConfig:
    methods: list[str]
    m: int = 32
    q: int | None = None
    k: int = 0
    sigma: float = 0.1
    cyclic: bool = False
    sem: SemSpec | None = None
    fixed_sem: bool = False
    kappa: float = 1.0
    gamma: float = 1.0
    alpha: float = 1.0
    da: Any = "nullspace"
    sweep_axis: str | None = None
    sweep_values: list[float] = field(default_factory=list)
    n: int = 2048
    trials: int = 25
    master_seed: int = 0
    norm: str = "euclidean"
    alpha_grid: list[float] = field(default_factory=lambda: list(AlphaGrid.log_uniform().values))
    holdout_frac: float = 0.2
    lcv_bins: int = 2
    out_dir: str = "results"
    plot: bool = True

    def validate(self) -> None:
        if not self.methods:
            raise ConfigError("methods list is empty")
        parsed = [Method.parse(m) for m in self.methods]
        if len({p.label for p in parsed}) != len(parsed):
            raise ConfigError("duplicate methods")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.n < 10:
            raise ConfigError("n must be >= 10")
        if self.kappa < 0 or self.gamma < 0 or not self.alpha > 0:
            raise ConfigError("need kappa >= 0, gamma >= 0 and alpha > 0")
        if self.sweep_axis is not None:
            if self.sweep_axis not in AXES:
                raise ConfigError(f"sweep axis must be one of {AXES}, got {self.sweep_axis!r}")
            if not self.sweep_values:
                raise ConfigError("sweep needs at least one value")
            if len(set(self.sweep_values)) != len(self.sweep_values):
                raise ConfigError("sweep values must be distinct")
            for v in self.sweep_values:
                if (self.sweep_axis == "alpha" and not v > 0) or v < 0:
                    raise ConfigError(f"invalid {self.sweep_axis} value {v!r}")
        if self.norm not in ("euclidean", "weighted_by_cov_x"):
            raise ConfigError(f"unknown norm {self.norm!r}")
        try:
            AlphaGrid.explicit(self.alpha_grid)
        except ValueError as exc:
            raise ConfigError(f"alpha grid: {exc}") from None
        if not 0 < self.holdout_frac < 1 or self.lcv_bins < 2:
            raise ConfigError("need 0 < holdout_frac < 1 and lcv_bins >= 2")
        if isinstance(self.da, str):
            match = _DA_RE.match(self.da)
            if not match:
                raise ConfigError(f"unknown augmentation directive {self.da!r}")
            name, arg = match.groups()
            if name == "subset":
                if arg is None or not 0 < _parse_fraction(arg) <= 1:
                    raise ConfigError("subset(p) needs 0 < p <= 1")
            elif name == "gaussian":
                if arg is not None and float(arg) < 0:
                    raise ConfigError("gaussian(scale) needs scale >= 0")
            elif arg is not None:
                raise ConfigError(f"{name} takes no argument")
        elif not isinstance(self.da, DaOperator):
            raise ConfigError("da must be a directive string or an operator")
        if self.sem is not None:
            report = validate_spec(self.sem.with_kappa(self.kappa))
            if not report.passed:
                raise ConfigError("SEM invalid: " + "; ".join(report.lines()))
            kappas = self.sweep_values if self.sweep_axis == "kappa" else [self.kappa]
            for kappa in kappas:
                if not validate_spec(self.sem.with_kappa(kappa)).checks["solvable"]:
                    raise ConfigError(f"SEM is not solvable at kappa={kappa}")
        if any(p.base in ("IV", "IVL") for p in parsed):
            k = self.sem.k if self.sem is not None else self.k
            if k == 0:
                raise ConfigError("IV/IVL methods need an instrument block (k > 0)")

    @property
    def parsed_methods(self) -> list[Method]:
        return [Method.parse(m) for m in self.methods]

    def to_dict(self) -> dict:
        sem: dict = {"m": self.m, "q": self.q, "k": self.k, "sigma": self.sigma,
                     "cyclic": self.cyclic}
        if self.sem is not None:
            sem = self.sem.to_dict()
        out = {
            "sem": sem,
            "fixed_sem": self.fixed_sem,
            "da": self.da.to_dict() if isinstance(self.da, DaOperator) else self.da,
            "methods": list(self.methods),
            "kappa": self.kappa,
            "gamma": self.gamma,
            "alpha": self.alpha,
            "n": self.n,
            "trials": self.trials,
            "master_seed": self.master_seed,
            "eval": {"norm": self.norm},
            "selection": {"grid": list(self.alpha_grid), "holdout_frac": self.holdout_frac,
                          "bins": self.lcv_bins},
            "output": {"dir": self.out_dir, "plot": self.plot},
        }
        if self.sweep_axis is not None:
            out["sweep"] = {"axis": self.sweep_axis, "values": list(self.sweep_values)}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        try:
            sem_block = data.get("sem", {}) or {}
            explicit = "f" in sem_block
            sweep = data.get("sweep") or {}
            sel = data.get("selection") or {}
            grid = sel.get("grid")
            if isinstance(grid, dict):
                grid = list(AlphaGrid.log_uniform(grid.get("low", 1e-4), grid.get("high", 1.0),
                                                  int(grid.get("count", 32))).values)
            da = data.get("da", "nullspace")
            if isinstance(da, dict):
                da = DaOperator.from_dict(da)
            out = data.get("output") or {}
            cfg = cls(
                methods=list(data.get("methods", [])),
                m=int(sem_block.get("m", 32)),
                q=None if explicit or sem_block.get("q") is None else int(sem_block["q"]),
                k=int(sem_block.get("k", 0)) if not explicit else 0,
                sigma=float(sem_block.get("sigma", 0.1)),
                cyclic=bool(sem_block.get("cyclic", False)),
                sem=SemSpec.from_dict(sem_block) if explicit else None,
                fixed_sem=bool(data.get("fixed_sem", False)),
                kappa=float(data.get("kappa", 1.0)),
                gamma=float(data.get("gamma", 1.0)),
                alpha=float(data.get("alpha", 1.0)),
                da=da,
                sweep_axis=sweep.get("axis"),
                sweep_values=[float(v) for v in sweep.get("values", [])],
                n=int(data.get("n", 2048)),
                trials=int(data.get("trials", 25)),
                master_seed=int(data.get("master_seed", 0)),
                norm=(data.get("eval") or {}).get("norm", "euclidean"),
                alpha_grid=list(grid) if grid is not None else list(AlphaGrid.log_uniform().values),
                holdout_frac=float(sel.get("holdout_frac", 0.2)),
                lcv_bins=int(sel.get("bins", 2)),
                out_dir=str(out.get("dir", "results")),
                plot=bool(out.get("plot", True)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        return cfg

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc


# -- seeding -----------------------------------------------------------------

def trial_seed(master_seed: int, axis: str | None, value_index: int, trial: int) -> int:
    """64-bit seed for one (data coordinate, trial) pair."""
    axis_code = DATA_AXES.index(axis) if axis in DATA_AXES else len(DATA_AXES)
    ss = np.random.SeedSequence(master_seed, spawn_key=(axis_code, value_index, trial))
    return int(ss.generate_state(1, np.uint64)[0])


def sub_seed(seed: int, purpose: int) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=(purpose,))
    return int(ss.generate_state(1, np.uint64)[0])


def sweep_points(cfg: ExperimentConfig) -> list[dict[str, Any]]:
    """Data coordinates of the sweep, each with the alphas it evaluates."""
    base = {"kappa": cfg.kappa, "gamma": cfg.gamma, "n": cfg.n}
    if cfg.sweep_axis in DATA_AXES:
        return [dict(base, **{cfg.sweep_axis: v}, index=i, alphas=[cfg.alpha])
                for i, v in enumerate(cfg.sweep_values)]
    alphas = cfg.sweep_values if cfg.sweep_axis == "alpha" else [cfg.alpha]
    return [dict(base, index=0, alphas=list(alphas))]


# -- one trial ---------------------------------------------------------------

def build_spec(cfg: ExperimentConfig, kappa: float, seed: int) -> SemSpec:
    if cfg.sem is not None:
        return cfg.sem.with_kappa(kappa)
    if cfg.fixed_sem:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.master_seed,
                                                           spawn_key=(_FIXED_SEM_KEY,)))
    else:
        rng = np.random.default_rng(sub_seed(seed, _SEM))
    return random_spec(cfg.m, rng, q=cfg.q, k=cfg.k, sigma=cfg.sigma, kappa=kappa,
                       cyclic=cfg.cyclic)


def orthogonal_operator(spec: SemSpec) -> DaOperator:
    """Null-space augmentation that also avoids the confounded direction.

    Columns span the orthogonal complement of both f and Cov_R(X)^{-1}
    Cov(X, xi), where Cov_R(X) is the covariance of X without the
    instrument contribution.  For this operator augmentation leaves the
    population regression coefficient unchanged.
    """
    bare = replace(spec, gamma_mat=np.zeros((spec.m, 0)), exo_cov={})
    cov_x, cross = population_moments(bare)
    u = np.linalg.solve(cov_x, cross)
    return DaOperator(aug.orthogonal_complement(np.column_stack([spec.f, u])), 1.0, None,
                      "orthogonal")


def build_operator(cfg: ExperimentConfig, spec: SemSpec, data: Dataset, seed: int) -> DaOperator:
    if isinstance(cfg.da, DaOperator):
        return cfg.da
    name, arg = _DA_RE.match(cfg.da).groups()
    if name == "nullspace":
        return aug.nullspace_basis(spec.f)
    if name == "subset":
        return aug.subset_basis(aug.nullspace_basis(spec.f), _parse_fraction(arg),
                                sub_seed(seed, _DA_BASIS))
    if name == "gaussian":
        return aug.gaussian_noise_da(np.cov(data.x, rowvar=False),
                                     0.1 if arg is None else float(arg))
    return orthogonal_operator(spec)


@dataclass
class MethodOutcome:
    method: str
    estimate: LinearEstimate
    cer: float
    ncer: float
    risks: Any = None
    selection: Any = None


def _fit_method(method: Method, cfg: ExperimentConfig, spec: SemSpec, data: Dataset,
                augmented: Dataset, alphas: list[float], seed: int):
    """Estimates for one method, one per alpha (shared unless alpha matters)."""
    if method.base == "ERM":
        return [fit_ols(data.x, data.y)] * len(alphas), None, data
    d = augmented if method.uses_augmentation else data
    if d.z is None:
        raise ValueError(f"{method.label} needs an instrument block")
    if method.base == "DA_ERM":
        return [fit_ols(d.x, d.y)] * len(alphas), None, d
    if method.base in ("DA_IV", "IV"):
        return [fit_2sls(d.x, d.y, d.z)] * len(alphas), None, d
    grid = AlphaGrid.explicit(cfg.alpha_grid)
    if method.mode == "fixed":
        return ivl_path(d.x, d.y, d.z, alphas), None, d
    if method.mode == "cv":
        sel = select_alpha_cv(d.x, d.y, d.z, grid, cfg.holdout_frac, sub_seed(seed, _SELECT))
    elif method.mode == "lcv":
        sel = select_alpha_lcv(d.x, d.y, d.z, grid, cfg.holdout_frac, cfg.lcv_bins,
                               sub_seed(seed, _SELECT))
    elif method.mode == "cc":
        sel = select_alpha_cc(d.x, d.y, d.z, grid, float(np.linalg.norm(spec.f)))
    else:
        sel = None
    alpha = sel.chosen_alpha if sel is not None else float(method.mode)
    return ivl_path(d.x, d.y, d.z, [alpha]) * len(alphas), sel, d


def run_trial(cfg: ExperimentConfig, point: dict[str, Any], trial: int,
              keep_outcomes: bool = False):
    """All method rows for one data coordinate and one trial.

    Failures inside a method become rows with an ``error`` entry.
    """
    seed = trial_seed(cfg.master_seed, cfg.sweep_axis, point["index"], trial)
    alphas = point["alphas"]
    coords = {"kappa": point["kappa"], "gamma": point["gamma"], "n": point["n"], "seed": seed}
    records: list[TrialRecord] = []
    outcomes: dict[str, MethodOutcome] = {}
    methods = [Method.parse(m) for m in cfg.methods]
    try:
        spec = build_spec(cfg, point["kappa"], seed)
        data, _ = sample(spec, point["n"], sub_seed(seed, _SAMPLE))
        augmented = None
        if any(m.uses_augmentation for m in methods):
            op = build_operator(cfg, spec, data, seed).with_strength(point["gamma"])
            augmented = aug.apply(op, data, sub_seed(seed, _DA_APPLY))
        sigma_x = population_moments(spec)[0] if cfg.norm == "weighted_by_cov_x" else None
        ecfg = EvalConfig(spec.f, cfg.norm, sigma_x)
    except Exception as exc:  # whole trial failed before any fit
        msg = _err(exc)
        for a in alphas:
            for m in methods:
                records.append(TrialRecord(dict(coords, alpha=a), m.label, np.nan, np.nan,
                                           trial, {"error": msg}))
        return (records, outcomes) if keep_outcomes else records
    h0 = np.zeros(spec.m)
    per_method = {}
    for m in methods:
        try:
            per_method[m.label] = _fit_method(m, cfg, spec, data, augmented, alphas, seed)
        except Exception as exc:
            per_method[m.label] = exc
    for i, a in enumerate(alphas):
        for m in methods:
            res = per_method[m.label]
            row_coords = dict(coords, alpha=a)
            if isinstance(res, Exception):
                records.append(TrialRecord(row_coords, m.label, np.nan, np.nan, trial,
                                           {"error": _err(res)}))
                continue
            ests, sel, used = res
            est = ests[i]
            extra = {}
            if sel is not None:
                extra = {"strategy": sel.strategy, "chosen_alpha": sel.chosen_alpha,
                         "score": sel.score}
            c, nc = cer(est.h, ecfg), ncer(est.h, h0, ecfg)
            records.append(TrialRecord(row_coords, m.label, c, nc, trial, extra))
            if keep_outcomes and i == 0:
                risks = risk_report(est, used.x, used.y, used.z)
                outcomes[m.label] = MethodOutcome(m.label, est, c, nc, risks, sel)
    return (records, outcomes) if keep_outcomes else records


def _err(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}".replace("\n", " ")


def _run_task(args):
    cfg, point, trial = args
    with threadpool_limits(limits=1):
        return point["index"], trial, run_trial(cfg, point, trial)


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    return max(1, workers)


def run_sweep(cfg: ExperimentConfig, workers: int | None = None, out_dir=None,
              plot: bool | None = None) -> tuple[list[TrialRecord], SweepResult]:
    """Run every (coordinate, trial) task and write the result files.

    Writes ``trials.csv``, ``aggregate.csv``, ``config.json`` and, when
    plotting is on, ``plot.svg`` into ``out_dir`` (skipped when None and the
    config has no output directory).
    """
    cfg.validate()
    points = sweep_points(cfg)
    seeds = {trial_seed(cfg.master_seed, cfg.sweep_axis, p["index"], t)
             for p in points for t in range(cfg.trials)}
    if len(seeds) != len(points) * cfg.trials:
        raise RuntimeError("trial seed collision")
    tasks = [(cfg, p, t) for p in points for t in range(cfg.trials)]
    workers = resolve_workers(workers)
    if workers == 1:
        results = [_run_task(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    order = {m: i for i, m in enumerate(cfg.methods)}
    alpha_order = {a: i for p in points for i, a in enumerate(p["alphas"])}
    records = [rec for _, _, recs in sorted(results, key=lambda r: (r[0], r[1])) for rec in recs]
    records.sort(key=lambda r: (_point_index(cfg, r), alpha_order[r.coords["alpha"]],
                                r.trial, order[Method.parse(r.method).label]))
    failed = sum(r.failed for r in records)
    if failed:
        log.warning("%d of %d rows failed", failed, len(records))
    result = aggregate(records)
    result.meta.update(config=cfg.to_dict(), failed_rows=failed)
    out_dir = cfg.out_dir if out_dir is None else out_dir
    if out_dir:
        write_outputs(cfg, records, result, Path(out_dir), cfg.plot if plot is None else plot)
    return records, result


def _point_index(cfg: ExperimentConfig, rec: TrialRecord) -> int:
    if cfg.sweep_axis in DATA_AXES:
        return cfg.sweep_values.index(rec.coords[cfg.sweep_axis])
    return 0


def write_outputs(cfg: ExperimentConfig, records, result: SweepResult, out: Path,
                  plot: bool) -> None:
    from causalda.plotting import emit_plot

    out.mkdir(parents=True, exist_ok=True)
    write_trials(out / "trials.csv", records)
    write_aggregate(out / "aggregate.csv", result)
    meta = {"config": cfg.to_dict(), "ci": result.meta.get("ci"),
            "failed_rows": result.meta.get("failed_rows", 0)}
    (out / "config.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    if plot:
        emit_plot(out / "aggregate.csv", out / "plot.svg", axis=cfg.sweep_axis or "kappa")


def run_single(cfg: ExperimentConfig, echo: bool = True) -> dict[str, MethodOutcome]:
    """One trial at the configured coordinates with full risk reports."""
    cfg = replace(cfg, sweep_axis=None, sweep_values=[], trials=1)
    cfg.validate()
    point = sweep_points(cfg)[0]
    records, outcomes = run_trial(cfg, point, 0, keep_outcomes=True)
    if echo:
        for rec in records:
            if rec.failed:
                print(f"{rec.method:>14}  FAILED  {rec.extra['error']}")
                continue
            out = outcomes[rec.method]
            r = out.risks
            line = (f"{rec.method:>14}  nCER={rec.ncer:.4f}  CER={rec.cer:.4g}  "
                    f"ERM-risk={r.erm_risk:.4g}")
            if r.gmm_risk is not None:
                line += f"  IV-risk={r.iv_risk:.4g}  GMM-risk={r.gmm_risk:.4g}"
            if out.selection is not None:
                line += f"  alpha={out.selection.chosen_alpha:.4g} ({out.selection.strategy})"
            print(line)
    for rec in records:
        if rec.failed:
            outcomes[rec.method] = MethodOutcome(rec.method, None, np.nan, np.nan)
    outcomes["_records"] = records
    return outcomes


# -- ingestion of external data ----------------------------------------------

@dataclass
class IngestSpec:
    path: str
    x_cols: list[str]
    y_col: str
    c_cols: list[str]
    degree: int | None = None
    da: str = "gaussian(0.1)"
    seed: int = 0

    def validate(self, header: list[str]) -> None:
        if not self.c_cols:
            raise ConfigError("ingest needs confounder columns (role 'c') to extract the truth")
        if not self.x_cols:
            raise ConfigError("ingest needs treatment columns (role 'x')")
        roles = list(self.x_cols) + [self.y_col] + list(self.c_cols)
        if len(set(roles)) != len(roles):
            raise ConfigError("column roles overlap")
        missing = [c for c in roles if c not in header]
        if missing:
            raise ConfigError(f"columns not in CSV: {missing}")
        if self.degree is not None and not 1 <= self.degree <= 5:
            raise ConfigError("degree must lie in 1..5")

    @classmethod
    def from_dict(cls, data: dict) -> IngestSpec:
        roles = data.get("roles", data)
        return cls(str(data["path"]), list(roles.get("x", [])), str(roles.get("y", "y")),
                   list(roles.get("c", [])), data.get("degree"),
                   data.get("da", "gaussian(0.1)"), int(data.get("seed", 0)))


def _read_table(path) -> tuple[list[str], np.ndarray]:
    import csv

    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            rows = [row for row in reader if row]
    except (OSError, StopIteration) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        table = np.array([[float(v) for v in row] for row in rows], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric cell ({exc})") from exc
    if table.ndim != 2 or table.shape[1] != len(header):
        raise ConfigError(f"{path}: ragged rows")
    return header, table


def _holdout_mse(design: np.ndarray, y: np.ndarray, seed) -> tuple[float, float]:
    """Hold-out MSE on a 20% split and its standard error."""
    rng = np.random.default_rng(seed)
    n = y.shape[0]
    test = np.zeros(n, dtype=bool)
    test[rng.permutation(n)[:max(2, int(round(0.2 * n)))]] = True
    est = fit_ols(design[~test], y[~test])
    sq = (y[test] - predict(est, design[test])) ** 2
    return float(sq.mean()), float(sq.std(ddof=1) / np.sqrt(sq.size))


def ingest_and_extract_truth(spec: IngestSpec) -> tuple[Dataset, np.ndarray]:
    """Ground-truth coefficients from a regression that includes the confounder.

    y is regressed on ``[phi(X), C]``; the phi(X) block of that fit is the
    truth.  Without a fixed degree, the smallest degree in 1..5 whose 20%
    hold-out error is within one standard error of the best is used.
    """
    header, table = _read_table(spec.path)
    spec.validate(header)
    col = {name: i for i, name in enumerate(header)}
    x = table[:, [col[c] for c in spec.x_cols]]
    y = table[:, col[spec.y_col]]
    c = table[:, [col[name] for name in spec.c_cols]]
    degrees = [spec.degree] if spec.degree is not None else list(range(1, 6))
    scores, errs = [], []
    for d in degrees:
        design = np.hstack([poly_features(x, d), c])
        mse, se = _holdout_mse(design, y, spec.seed) if len(degrees) > 1 else (0.0, 0.0)
        scores.append(mse)
        errs.append(se)
    low = int(np.argmin(scores))
    best = degrees[int(np.flatnonzero(np.asarray(scores) <= scores[low] + errs[low])[0])]
    phi = poly_features(x, best)
    full = fit_ols(np.hstack([phi, c]), y)
    truth = full.h[:phi.shape[1]]
    meta = {"source": spec.path, "degree": best, "degree_scores": scores, "raw_x": x,
            "confounder_coef": full.h[phi.shape[1]:]}
    return Dataset(phi, y, None, None, meta), truth


def evaluate_ingested(data: Dataset, truth: np.ndarray, da: str = "gaussian(0.1)",
                      methods=("ERM", "DA_ERM", "DA_IV", "DA_IVL(cv)", "DA_IVL(lcv)", "DA_IVL(cc)"),
                      seed: int = 0, alpha_grid=None) -> list[TrialRecord]:
    """Fit methods on features of augmented raw treatments and score them."""
    raw = data.meta["raw_x"]
    degree = data.meta["degree"]
    match = _DA_RE.match(da)
    if not match or match.group(1) != "gaussian":
        raise ConfigError("ingested data supports only gaussian(scale) augmentation")
    scale = 0.1 if match.group(2) is None else float(match.group(2))
    op = aug.gaussian_noise_da(np.cov(raw, rowvar=False), scale)
    moved = aug.apply(op, Dataset(raw, data.y), sub_seed(seed, _DA_APPLY))
    augmented = Dataset(poly_features(moved.x, degree), data.y, moved.z)
    cfg = ExperimentConfig(methods=list(methods), m=truth.size)
    if alpha_grid is not None:
        cfg.alpha_grid = list(alpha_grid)
    spec = SemSpec(np.zeros(truth.size), truth, np.zeros((truth.size, 0)),
                   np.zeros((truth.size, 1)), [0.0], 1.0, 0.0)
    ecfg = EvalConfig(truth)
    h0 = np.zeros(truth.size)
    coords = {"kappa": np.nan, "gamma": scale, "alpha": np.nan, "n": data.n_samples, "seed": seed}
    out = []
    for label in methods:
        m = Method.parse(label)
        try:
            ests, sel, _ = _fit_method(m, cfg, spec, data, augmented, [1.0], seed)
        except Exception as exc:
            out.append(TrialRecord(coords, m.label, np.nan, np.nan, 0, {"error": _err(exc)}))
            continue
        extra = {} if sel is None else {"strategy": sel.strategy,
                                        "chosen_alpha": sel.chosen_alpha, "score": sel.score}
        out.append(TrialRecord(coords, m.label, cer(ests[0].h, ecfg), ncer(ests[0].h, h0, ecfg),
                               0, extra))
    return out


def synthetic_optical_csv(path, m: int = 9, n: int = 1000, degree: int = 2, seed: int = 0,
                          confounding: float = 2.0) -> np.ndarray:
    """Write a confounded stand-in for pixel/voltage data; returns the true coefficients."""
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(n)
    x = rng.standard_normal((n, m)) + confounding * np.outer(c, rng.standard_normal(m)) / np.sqrt(m)
    phi = poly_features(x, degree)
    f = rng.standard_normal(phi.shape[1]) / np.sqrt(phi.shape[1])
    y = phi @ f + confounding * c + 0.1 * rng.standard_normal(n)
    ds = Dataset(x, y, None, c[:, None])
    ds.to_csv(path)
    return f


# -- discrete demo -----------------------------------------------------------

def _row_codes(x: np.ndarray) -> np.ndarray:
    weights = 1 << np.arange(x.shape[1], dtype=np.int64)
    return x.astype(np.int64) @ weights


def demo_discrete(e_train: float = 0.1, e_test: float = 0.9, n: int = 20_000, seed: int = 0,
                  width: int = 3) -> dict[str, Any]:
    """Observational vs do-based predictors on the xor SEM.

    The observational predictor is the training majority label per image
    (color included).  The causal predictor rounds the interventional mean
    label per image, estimated from hard-intervention samples.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    for e in (e_train, e_test):
        if not 0.0 <= e <= 1.0:
            raise ValueError("flip probabilities must lie in [0, 1]")
    label = discrete.parity_label(width)
    base = discrete.bit_sampler(width)
    ss = np.random.SeedSequence(seed)
    s_train, s_test, s_do_x, s_do_y = (int(s.generate_state(1, np.uint64)[0]) for s in ss.spawn(4))
    train = discrete.discrete_xor_sem_sample(label, base, e_train, n, s_train)
    test = discrete.discrete_xor_sem_sample(label, base, e_test, n, s_test)
    n_cells = 1 << (width + 1)

    def table(x, y):
        codes = _row_codes(x)
        counts = np.bincount(codes, minlength=n_cells).astype(float)
        ones = np.bincount(codes, weights=y.astype(float), minlength=n_cells)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(counts > 0, ones / counts, np.nan)

    obs_mean = table(train.x, train.y)
    obs_rule = np.where(np.isnan(obs_mean), 0, (obs_mean > 0.5).astype(int))
    rng = np.random.default_rng(s_do_x)
    x_do = rng.integers(0, 2, size=(n, width + 1), dtype=np.int8)
    do = discrete.discrete_hard_do(label, x_do, s_do_y)
    ate = table(do.x, do.y)
    ate_rule = np.where(np.isnan(ate), 0, (ate >= 0.5).astype(int))
    test_codes = _row_codes(test.x)
    cells = np.arange(n_cells)
    cell_x = ((cells[:, None] >> np.arange(width + 1)) & 1).astype(np.int8)
    return {
        "e_train": e_train,
        "e_test": e_test,
        "n": n,
        "obs_accuracy": float(np.mean(obs_rule[test_codes] == test.y)),
        "ate_accuracy": float(np.mean(ate_rule[test_codes] == test.y)),
        "ate_estimate": ate.tolist(),
        "ate_formula": discrete.ate_formula(label(cell_x)).tolist(),
        "max_iters": int(np.max(train.meta["iters"])),
    }
