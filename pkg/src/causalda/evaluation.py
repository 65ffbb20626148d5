"""Causal excess risk, its normalised form, and trial aggregation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

Z95 = 1.96
CI_METHOD = "normal"

TRIAL_FIELDS = ["kappa", "gamma", "alpha", "n", "seed", "method", "cer", "ncer",
                "trial", "strategy", "chosen_alpha", "score", "error"]
AGGREGATE_FIELDS = ["kappa", "gamma", "alpha", "n", "method", "mean_ncer", "stderr",
                    "ci_low", "ci_high", "trials"]
GROUP_COORDS = ("kappa", "gamma", "alpha", "n")


@dataclass
class EvalConfig:
    ground_truth_f: np.ndarray
    norm: str = "euclidean"
    sigma_x: np.ndarray | None = None

    def __post_init__(self):
        self.ground_truth_f = np.asarray(self.ground_truth_f, dtype=float).reshape(-1)
        if self.norm not in ("euclidean", "weighted_by_cov_x"):
            raise ValueError(f"unknown norm {self.norm!r}")
        if self.sigma_x is not None:
            self.sigma_x = np.atleast_2d(np.asarray(self.sigma_x, dtype=float))
            if not np.allclose(self.sigma_x, self.sigma_x.T, atol=1e-10):
                raise ValueError("sigma_x must be symmetric")
            if np.linalg.eigvalsh(self.sigma_x).min() < -1e-10:
                raise ValueError("sigma_x must be positive semi-definite")


def cer(h, cfg: EvalConfig) -> float:
    """Squared distance to the causal coefficients, optionally Cov(X)-weighted."""
    d = np.asarray(h, dtype=float).reshape(-1) - cfg.ground_truth_f
    if cfg.norm == "euclidean":
        return float(d @ d)
    if cfg.sigma_x is None:
        raise ValueError("weighted CER needs sigma_x")
    if cfg.sigma_x.shape != (d.size, d.size):
        raise ValueError("sigma_x does not match the coefficient dimension")
    return float(d @ cfg.sigma_x @ d)


def ncer(h, h0, cfg: EvalConfig) -> float:
    """CER(h) / (CER(h) + CER(h0)); 0 when both vanish."""
    num = cer(h, cfg)
    den = num + cer(h0, cfg)
    return 0.0 if den == 0.0 else num / den


@dataclass
class TrialRecord:
    coords: dict[str, float]
    method: str
    cer: float
    ncer: float
    trial: int = 0
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if np.isfinite(self.ncer) and not -1e-12 <= self.ncer <= 1 + 1e-12:
            raise ValueError(f"nCER outside [0, 1]: {self.ncer}")

    @property
    def failed(self) -> bool:
        return bool(self.extra.get("error"))

    def group_key(self) -> tuple:
        return tuple(float(self.coords[c]) for c in GROUP_COORDS) + (self.method,)

    def to_row(self) -> dict[str, str]:
        row = {c: _fmt(self.coords[c]) for c in GROUP_COORDS}
        row["n"] = str(int(self.coords["n"]))
        row.update(seed=str(int(self.coords["seed"])), method=self.method,
                   cer=_fmt(self.cer), ncer=_fmt(self.ncer), trial=str(self.trial))
        for key in ("strategy", "chosen_alpha", "score", "error"):
            val = self.extra.get(key, "")
            row[key] = _fmt(val) if isinstance(val, float) else str(val)
        return row

    @classmethod
    def from_row(cls, row: dict[str, str]) -> TrialRecord:
        coords = {c: float(row[c]) for c in GROUP_COORDS}
        coords["n"] = int(row["n"])
        coords["seed"] = int(row["seed"])
        extra: dict[str, Any] = {}
        for key in ("strategy", "error"):
            if row.get(key):
                extra[key] = row[key]
        for key in ("chosen_alpha", "score"):
            if row.get(key):
                extra[key] = float(row[key])
        return cls(coords, row["method"], float(row["cer"]), float(row["ncer"]),
                   int(row.get("trial") or 0), extra)


@dataclass
class GroupSummary:
    key: tuple
    mean_ncer: float
    stderr: float
    ci_low: float
    ci_high: float
    n_trials: int

    @property
    def method(self) -> str:
        return self.key[-1]

    def coord(self, name: str) -> float:
        return self.key[GROUP_COORDS.index(name)]

    def to_row(self) -> dict[str, str]:
        row = {c: _fmt(v) for c, v in zip(GROUP_COORDS, self.key)}
        row["n"] = str(int(self.key[3]))
        row.update(method=self.method, mean_ncer=_fmt(self.mean_ncer), stderr=_fmt(self.stderr),
                   ci_low=_fmt(self.ci_low), ci_high=_fmt(self.ci_high),
                   trials=str(self.n_trials))
        return row


@dataclass
class SweepResult:
    groups: list[GroupSummary]
    meta: dict[str, Any] = field(default_factory=lambda: {"ci": CI_METHOD})

    def lookup(self, method: str, **coords) -> list[GroupSummary]:
        return [g for g in self.groups if g.method == method
                and all(math.isclose(g.coord(c), v) for c, v in coords.items())]

    def series(self, method: str, axis: str, **fixed) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(axis values, means, stderrs) for one method, sorted by axis."""
        rows = sorted(self.lookup(method, **fixed), key=lambda g: g.coord(axis))
        return (np.array([g.coord(axis) for g in rows]), np.array([g.mean_ncer for g in rows]),
                np.array([g.stderr for g in rows]))


def aggregate(records: Iterable[TrialRecord]) -> SweepResult:
    """Mean nCER per coordinate group with a normal-approximation 95% CI.

    Failed trials are skipped.  The standard error uses the ddof=1 sample
    deviation and is reported as 0 for single-trial groups.
    """
    records = list(records)
    if not records:
        raise ValueError("nothing to aggregate")
    grouped: dict[tuple, list[float]] = {}
    for rec in records:
        if rec.failed or not np.isfinite(rec.ncer):
            continue
        grouped.setdefault(rec.group_key(), []).append(rec.ncer)
    groups = []
    for key in sorted(grouped):
        vals = np.asarray(grouped[key])
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
        groups.append(GroupSummary(key, mean, se, mean - Z95 * se, mean + Z95 * se, vals.size))
    return SweepResult(groups)


def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_trials(path, records: Iterable[TrialRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, TRIAL_FIELDS, lineterminator="\n")
        writer.writeheader()
        for rec in records:
            writer.writerow(rec.to_row())


def read_trials(path) -> list[TrialRecord]:
    with open(path, newline="") as fh:
        return [TrialRecord.from_row(row) for row in csv.DictReader(fh)]


def write_aggregate(path, result: SweepResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, AGGREGATE_FIELDS, lineterminator="\n")
        writer.writeheader()
        for group in result.groups:
            writer.writerow(group.to_row())


def read_aggregate(path) -> SweepResult:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(AGGREGATE_FIELDS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: aggregate CSV lacks columns {sorted(missing)}")
        groups = []
        for row in reader:
            key = tuple(float(row[c]) for c in GROUP_COORDS) + (row["method"],)
            groups.append(GroupSummary(key, float(row["mean_ncer"]), float(row["stderr"]),
                                       float(row["ci_low"]), float(row["ci_high"]),
                                       int(row["trials"])))
    return SweepResult(groups)
