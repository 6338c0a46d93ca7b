#!/usr/bin/env python3
"""Score models across a directory of real-data realization CSVs.

Each CSV must follow the package dataset schema (feature columns, then
`w`, `y`, `mu0`, `mu1`) — one file per realization. Every model sees the
same per-file seed, so the comparison is paired file by file.
"""

import argparse
import json
from pathlib import Path

import numpy as np

from dcnpd.experiment import ExperimentConfig, run_experiment
from dcnpd.training import TrainConfig

DEFAULT_MODELS = ("dcn-pd", "nn4", "knn:5")


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dir", required=True, help="directory of realization CSVs")
    parser.add_argument("--models", nargs="+", default=list(DEFAULT_MODELS))
    parser.add_argument("--seed-base", type=int, default=1000)
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--propensity-epochs", type=int, default=300)
    parser.add_argument("--limit", type=int, help="use only the first N files")
    parser.add_argument("--out", help="write the per-file MSE table as JSON")
    return parser.parse_args()


def main() -> int:
    args = parse_args()
    files = sorted(Path(args.dir).glob("*.csv"))
    if args.limit:
        files = files[: args.limit]
    if not files:
        print(f"no CSV files found in {args.dir}")
        return 2
    train = TrainConfig(epochs=args.epochs)

    table: dict[str, list[float]] = {model: [] for model in args.models}
    for i, path in enumerate(files):
        for model in args.models:
            config = ExperimentConfig(
                model=model,
                seed=args.seed_base + i,
                csv_path=str(path),
                train=train,
                repetitions=1,
                propensity_epochs=args.propensity_epochs,
            )
            table[model].append(run_experiment(config).per_rep_mse[0])
        row = "  ".join(f"{model}={table[model][-1]:8.4f}" for model in args.models)
        print(f"{path.name:<24} {row}", flush=True)

    print(f"\nmeans over {len(files)} realizations:")
    for model in args.models:
        values = np.array(table[model])
        se = values.std(ddof=1) / np.sqrt(len(values)) if len(values) > 1 else 0.0
        print(f"  {model:<16} {values.mean():8.4f} +/- {se:6.4f}")

    if args.out:
        payload = {
            "schema_version": 1,
            "files": [p.name for p in files],
            "per_file_mse": table,
        }
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        print(f"\nwrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
