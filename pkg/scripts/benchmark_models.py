#!/usr/bin/env python3
"""Paired benchmark of every estimator on one synthetic data family.

All models share the master seed, so repetition r of each model sees the
identical dataset realization and train/test split. Prints a mean +/- SE
table plus paired win rates against the first model listed.
"""

import argparse
from pathlib import Path

from dcnpd.data import SyntheticConfig
from dcnpd.experiment import ExperimentConfig, emit_report, run_experiment
from dcnpd.training import TrainConfig

DEFAULT_MODELS = ("dcn-pd", "dcn-fixed:0.2", "dcn-fixed:0.5", "nn4", "knn:5")


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--models", nargs="+", default=list(DEFAULT_MODELS))
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--reps", type=int, default=20)
    parser.add_argument("--n", type=int, default=750)
    parser.add_argument("--d", type=int, default=25)
    parser.add_argument("--bias-strength", type=float, default=3.0)
    parser.add_argument("--noise-std", type=float, default=1.0)
    parser.add_argument("--surface", default="ExpSurface")
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--gamma", type=float, default=1.0)
    parser.add_argument("--learning-rate", type=float, default=1e-3)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--propensity-epochs", type=int, default=300)
    parser.add_argument("--n-samples", type=int, default=100)
    parser.add_argument("--out-dir", help="write per-model report JSON/CSV here")
    return parser.parse_args()


def main() -> int:
    args = parse_args()
    synthetic = SyntheticConfig(
        n=args.n,
        d=args.d,
        bias_strength=args.bias_strength,
        noise_std=args.noise_std,
        surface=args.surface,
    )
    train = TrainConfig(
        epochs=args.epochs,
        gamma=args.gamma,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
    )
    reports = {}
    for model in args.models:
        config = ExperimentConfig(
            model=model,
            seed=args.seed,
            synthetic=synthetic,
            train=train,
            repetitions=args.reps,
            propensity_epochs=args.propensity_epochs,
            n_samples=args.n_samples,
        )
        report = run_experiment(config)
        reports[model] = report
        print(
            f"{model:<16} mean_ite_mse={report.mean_mse:8.4f} "
            f"+/- {report.std_error:6.4f}   ({report.duration_seconds:6.1f}s)",
            flush=True,
        )
        if args.out_dir:
            stem = model.replace(":", "_").replace(".", "p")
            emit_report(report, Path(args.out_dir) / f"{stem}.json")

    reference = args.models[0]
    if len(args.models) > 1:
        print(f"\npaired win rate of {reference} (lower per-repetition MSE):")
        base = reports[reference].per_rep_mse
        for model in args.models[1:]:
            other = reports[model].per_rep_mse
            wins = sum(b < o for b, o in zip(base, other))
            print(f"  vs {model:<16} {wins}/{len(base)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
