"""Command-line interface: generate, train, evaluate, benchmark.

Exit codes: 0 on success, 2 when the configuration is invalid (including
bad flags), 1 when a valid run fails at runtime.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .data import SyntheticConfig, generate_synthetic, load_csv, save_csv
from .experiment import (
    SCHEMA_VERSION,
    ConfigError,
    ExperimentConfig,
    emit_report,
    ite_mse,
    predict_from_bundle,
    run_experiment,
    train_model_bundle,
)


def _add_common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file; flags below override its fields")
    sub.add_argument("--seed", type=int, help="master seed (required here or in the config)")
    sub.add_argument("--model", help="dcn-pd | dcn-fixed:<p> | nn4 | knn:<k>")
    sub.add_argument("--reps", type=int, help="number of repetitions")
    sub.add_argument("--out", help="output path")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dcnpd",
        description="Treatment-effect estimation with propensity-guided dropout.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    generate = commands.add_parser(
        "generate", help="draw a synthetic observational dataset and save it as CSV"
    )
    _add_common_flags(generate)
    generate.set_defaults(func=_cmd_generate)

    train = commands.add_parser(
        "train", help="fit one model on the full dataset and save a model bundle"
    )
    _add_common_flags(train)
    train.set_defaults(func=_cmd_train)

    evaluate = commands.add_parser(
        "evaluate", help="score a saved model bundle against a ground-truth dataset"
    )
    _add_common_flags(evaluate)
    evaluate.add_argument("--model-file", required=True, help="bundle written by `train`")
    evaluate.set_defaults(func=_cmd_evaluate)

    benchmark = commands.add_parser(
        "benchmark", help="run the repeated-realization experiment and emit a report"
    )
    _add_common_flags(benchmark)
    benchmark.set_defaults(func=_cmd_benchmark)

    return parser


def _load_config_dict(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}") from None
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file is not valid JSON: {e}") from None
    if not isinstance(payload, dict):
        raise ConfigError("config file must contain a JSON object")
    return payload


def _overlay_flags(payload: dict, args: argparse.Namespace) -> dict:
    if args.seed is not None:
        payload["seed"] = args.seed
    if args.model is not None:
        payload["model"] = args.model
    if args.reps is not None:
        payload["repetitions"] = args.reps
    if args.out is not None:
        payload["out"] = args.out
    return payload


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    payload = _overlay_flags(_load_config_dict(args.config), args)
    if payload.get("synthetic") is None and payload.get("csv_path") is None:
        payload["synthetic"] = {}
    if "model" not in payload:
        raise ConfigError("a model is required: pass --model or set it in the config")
    if "seed" not in payload:
        raise ConfigError("a seed is required: pass --seed or set it in the config")
    return ExperimentConfig.from_dict(payload)


def _require_seed(payload: dict, args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else payload.get("seed")
    if seed is None:
        raise ConfigError("a seed is required: pass --seed or set it in the config")
    return int(seed)


def _synthetic_from(payload: dict) -> SyntheticConfig:
    block = payload.get("synthetic") or {}
    try:
        return SyntheticConfig(**block)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad synthetic block: {e}") from None


def _synthetic_echo(config: SyntheticConfig) -> dict:
    return {
        "n": config.n,
        "d": config.d,
        "bias_strength": config.bias_strength,
        "noise_std": config.noise_std,
        "surface": config.surface,
        "seed": config.seed,
    }


def _cmd_generate(args: argparse.Namespace) -> int:
    payload = _load_config_dict(args.config)
    seed = _require_seed(payload, args)
    config = _synthetic_from(payload)
    out = Path(args.out or payload.get("out") or "dataset.csv")
    dataset = generate_synthetic(config, np.random.default_rng(seed))
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(dataset, out)
    sidecar = out.with_suffix(".json")
    sidecar.write_text(
        json.dumps(
            {
                "schema_version": SCHEMA_VERSION,
                "seed": seed,
                "synthetic": _synthetic_echo(config),
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    print(f"wrote {dataset.n} rows x {dataset.d} features to {out} (sidecar {sidecar})")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    config = _experiment_config(args)
    bundle = train_model_bundle(config)
    out = Path(args.out or config.out or "model.json")
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(bundle, sort_keys=True) + "\n", encoding="utf-8")
    print(f"trained {config.model} and saved the bundle to {out}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    payload = _load_config_dict(args.config)
    seed = _require_seed(payload, args)
    try:
        with open(args.model_file, encoding="utf-8") as fh:
            bundle = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read model file: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"model file is not valid JSON: {e}") from None
    if not isinstance(bundle, dict) or "kind" not in bundle:
        raise ConfigError("model file is not a model bundle (missing 'kind')")
    rng = np.random.default_rng(seed)
    if payload.get("csv_path") is not None:
        dataset = load_csv(payload["csv_path"])
    else:
        dataset = generate_synthetic(_synthetic_from(payload), rng)
    if dataset.true_ite is None:
        raise ConfigError(
            "evaluation needs ground truth: the dataset must carry mu0 and mu1"
        )
    predictions = predict_from_bundle(bundle, dataset.X, rng=rng)
    result = {
        "schema_version": SCHEMA_VERSION,
        "kind": bundle["kind"],
        "n": dataset.n,
        "ite_mse": ite_mse(predictions, dataset.true_ite),
    }
    text = json.dumps(result, indent=2, sort_keys=True)
    print(text)
    if args.out is not None:
        out = Path(args.out)
        if out.parent != Path(""):
            out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n", encoding="utf-8")
    return 0


def _cmd_benchmark(args: argparse.Namespace) -> int:
    config = _experiment_config(args)
    report = run_experiment(config)
    out = Path(config.out or "report.json")
    emit_report(report, out)
    print(
        f"model={report.model} reps={report.repetitions} "
        f"mean_ite_mse={report.mean_mse:.6g} std_error={report.std_error:.6g}"
    )
    print(f"report: {out} (per-repetition CSV: {out.with_suffix('.csv')})")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - CLI boundary maps failures to exit 1
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
