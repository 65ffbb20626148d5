"""Command line entry point.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from causalda import harness
from causalda.evaluation import write_trials
from causalda.harness import ConfigError, ExperimentConfig, IngestSpec
from causalda.plotting import emit_plot
from causalda.sem import SemSpec, validate_spec

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _InvalidInput(Exception):
    pass


def _values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad value list {text!r}") from exc


def _load_config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required")
    try:
        cfg = ExperimentConfig.load(args.config)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        changes["trials"] = args.trials
    if getattr(args, "n", None) is not None:
        changes["n"] = args.n
    if getattr(args, "axis", None) is not None:
        changes["sweep_axis"] = args.axis
    if getattr(args, "values", None) is not None:
        changes["sweep_values"] = args.values
    if getattr(args, "out", None) is not None:
        changes["out_dir"] = args.out
    cfg = replace(cfg, **changes)
    cfg.validate()
    return cfg


def cmd_validate(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if "f" in raw:
        # bare SEM specification
        try:
            report = validate_spec(SemSpec.from_dict(raw))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"malformed SEM: {exc}") from exc
        print("\n".join(report.lines()))
        return EXIT_OK if report.passed else EXIT_INVALID
    _load_config(args)
    print("config ok")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load_config(args)
    outcomes = harness.run_single(cfg)
    records = outcomes.pop("_records")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_trials(Path(args.out) / "run.csv", records)
    return EXIT_RUNTIME if any(r.failed for r in records) else EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    records, result = harness.run_sweep(cfg, workers=args.workers)
    failed = sum(r.failed for r in records)
    print(f"{len(records)} rows, {len(result.groups)} groups, {failed} failed -> {cfg.out_dir}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    out = Path(args.out or "ingest_out")
    if args.synthetic:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "synthetic.csv"
        seed = 0 if args.seed is None else args.seed
        harness.synthetic_optical_csv(csv_path, seed=seed)
        spec = IngestSpec(str(csv_path), [f"x_{j}" for j in range(9)], "y", ["c_0"], seed=seed)
    else:
        if not args.config:
            raise ConfigError("ingest needs --config or --synthetic")
        try:
            spec = IngestSpec.from_dict(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"bad ingest config: {exc}") from exc
        if args.seed is not None:
            spec.seed = args.seed
    data, truth = harness.ingest_and_extract_truth(spec)
    print(f"degree {data.meta['degree']}, design width {data.x.shape[1]}, n {data.n_samples}")
    records = harness.evaluate_ingested(data, truth, spec.da, seed=spec.seed)
    for rec in records:
        status = rec.extra.get("error") or f"nCER={rec.ncer:.4f}"
        print(f"{rec.method:>14}  {status}")
    out.mkdir(parents=True, exist_ok=True)
    write_trials(out / "ingest.csv", records)
    (out / "truth.json").write_text(json.dumps({"degree": data.meta["degree"],
                                                "coef": truth.tolist()}) + "\n")
    return EXIT_OK


def cmd_demo_discrete(args) -> int:
    n = 20_000 if args.n is None else args.n
    if n < 1:
        raise ConfigError("n must be >= 1")
    for e in (args.e_train, args.e_test):
        if not 0.0 <= e <= 1.0:
            raise ConfigError("flip probabilities must lie in [0, 1]")
    rep = harness.demo_discrete(args.e_train, args.e_test, n, 0 if args.seed is None else args.seed)
    print(f"e_train={rep['e_train']} e_test={rep['e_test']} n={rep['n']}")
    print(f"observational predictor accuracy: {rep['obs_accuracy']:.4f}")
    print(f"ATE predictor accuracy:           {rep['ate_accuracy']:.4f}")
    return EXIT_OK


def cmd_plot(args) -> int:
    out = Path(args.out) if args.out else Path(args.aggregate).with_suffix(".svg")
    try:
        emit_plot(args.aggregate, out, axis=args.axis or "kappa")
    except (OSError, ValueError, KeyError) as exc:
        raise _InvalidInput(str(exc)) from exc
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="causalda",
                                     description="Augmentation as soft intervention: experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sweep=False):
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--trials", type=int)
        p.add_argument("--n", type=int)
        if sweep:
            p.add_argument("--workers", type=int)
            p.add_argument("--axis", choices=harness.AXES)
            p.add_argument("--values", type=_values)
        return p

    common(sub.add_parser("validate", help="check a config or SEM file")).set_defaults(func=cmd_validate)
    common(sub.add_parser("run", help="one trial with risk reports")).set_defaults(func=cmd_run)
    common(sub.add_parser("sweep", help="seeded sweep over kappa, alpha or gamma"),
           sweep=True).set_defaults(func=cmd_sweep)
    p = common(sub.add_parser("ingest", help="extract ground truth from a confounded CSV"))
    p.add_argument("--synthetic", action="store_true", help="generate a stand-in dataset first")
    p.set_defaults(func=cmd_ingest)
    p = common(sub.add_parser("demo-discrete", help="xor SEM flipped-environment demo"))
    p.add_argument("--e-train", type=float, default=0.1)
    p.add_argument("--e-test", type=float, default=0.9)
    p.set_defaults(func=cmd_demo_discrete)
    p = sub.add_parser("plot", help="render an aggregate CSV to SVG")
    p.add_argument("aggregate")
    p.add_argument("--axis", choices=("kappa", "gamma", "alpha", "n"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, _InvalidInput) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
