"""Command-line interface for dataset generation, training, evaluation and experiments."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import adversarial, elm, harness, metrics
from .data import (
    AffineShift,
    Dataset,
    Domain,
    SyntheticSpec,
    load_dataset,
    load_signal,
    preprocess_signal,
    save_dataset,
    split_train_val,
    synth_generate,
)


def _default_synth_spec(seed: int) -> SyntheticSpec:
    return SyntheticSpec(
        n_modes=5,
        modes_in_target_training=frozenset({2}),
        dim=8,
        shift=AffineShift(
            scale=(1.5,) * 8,
            angles=(0.03, -0.02, 0.025, -0.015),
            translation=(0.0,) * 8,
            noise_std=0.04,
        ),
        anomaly_offset=20.0,
        samples_per_mode=200,
        seed=seed,
        cluster_std=0.2,
        mode_spacing=2.5,
    )


def _default_architecture() -> harness.Architecture:
    return harness.Architecture(
        n_ae=20,
        n_oc=200,
        extractor_width=30,
        alpha=0.3,
        epochs=500,
        learning_rate=3e-3,
        ridge_lambda=1e-3,
        input_gain=0.15,
        feature_gain=0.8,
        n_committee=7,
    )


def _cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.config:
        payload = json.loads(Path(args.config).read_text())["synthetic"]
        shift = AffineShift(**{k: tuple(v) if isinstance(v, list) else v for k, v in payload.pop("shift", {}).items()})
        payload["modes_in_target_training"] = frozenset(payload["modes_in_target_training"])
        if args.seed is not None:
            payload["seed"] = args.seed
        spec = SyntheticSpec(shift=shift, **payload)
    else:
        spec = _default_synth_spec(args.seed if args.seed is not None else 0)
    source, target_train, test_healthy, test_anomalous = synth_generate(spec)
    save_dataset(source, out / "source.csv", seed=spec.seed)
    save_dataset(target_train, out / "target_train.csv", seed=spec.seed)
    save_dataset(test_healthy, out / "target_test_healthy.csv", seed=spec.seed)
    save_dataset(test_anomalous, out / "target_test_anomalous.csv", seed=spec.seed)
    print(f"wrote 4 datasets to {out}")
    return 0


def _cmd_preprocess(args) -> int:
    signal = load_signal(args.input)
    dataset = preprocess_signal(
        signal,
        factor=args.factor,
        window_length=args.window_length,
        window_count=args.windows,
        domain=Domain(args.domain),
    )
    save_dataset(dataset, args.out)
    print(f"wrote {dataset.n_samples}x{dataset.n_features} feature matrix to {args.out}")
    return 0


def _cmd_train(args) -> int:
    target = load_dataset(args.target)
    arch = harness.Architecture(
        n_ae=args.n_ae,
        n_oc=args.n_oc,
        extractor_width=args.width,
        alpha=args.alpha,
        epochs=args.epochs,
        ridge_lambda=args.ridge_lambda,
    )
    if args.model == "helm":
        scaler = harness.Standardizer(target.samples)
        train, val = split_train_val(target, args.seed)
        model = elm.helm_train(scaler(train), scaler(val), arch.n_ae, arch.n_oc, arch.ridge_lambda, args.seed)
        elm.save_helm(model, args.out)
    elif args.model == "mixed-helm":
        if not args.source:
            print("mixed-helm requires --source", file=sys.stderr)
            return 2
        source = load_dataset(args.source)
        scaler = harness.Standardizer(source.samples)
        pool = Dataset(
            np.vstack([source.samples, target.samples]),
            domain=target.domain,
            feature_kind=target.feature_kind,
        )
        train, val = split_train_val(pool, args.seed)
        model = elm.helm_train(scaler(train), scaler(val), arch.n_ae, arch.n_oc, arch.ridge_lambda, args.seed)
        elm.save_helm(model, args.out)
    elif args.model == "adau":
        if not args.source:
            print("adau requires --source", file=sys.stderr)
            return 2
        source = load_dataset(args.source)
        scaler = harness.Standardizer(source.samples)
        config = adversarial.AdauConfig(
            extractor_width=arch.extractor_width,
            n_oneclass=arch.n_oc,
            alpha=arch.alpha,
            epochs=arch.epochs,
            learning_rate=arch.learning_rate,
            ridge_lambda=arch.ridge_lambda,
            seed=args.seed,
        )
        model = adversarial.train_adau(scaler(source), scaler(target), config)
        adversarial.save_adau(model, args.out)
        if args.log:
            model.history.to_csv(args.log)
    print(f"saved {args.model} model to {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    test = load_dataset(args.data)
    if test.labels is None:
        print("evaluation data must carry labels", file=sys.stderr)
        return 2
    payload = json.loads(Path(args.model_file).read_text())
    if payload.get("kind") == "helm":
        model = elm.helm_from_dict(payload)
    else:
        model = adversarial.adau_from_dict(payload)
    X = test.samples
    if args.scaler_ref:
        ref = load_dataset(args.scaler_ref)
        X = harness.Standardizer(ref.samples)(X)
    pred = model.detect(X)
    counts = metrics.confusion(test.labels, pred)
    out = {
        "ba": metrics.balanced_accuracy(counts),
        "fpr": metrics.fpr(counts),
        "tpr": metrics.tpr(counts),
        "tp": counts.tp,
        "fp": counts.fp,
        "tn": counts.tn,
        "fn": counts.fn,
    }
    print(json.dumps(out, indent=2))
    return 0


def _load_experiment_config(args) -> harness.ExperimentConfig:
    if args.config:
        config = harness.ExperimentConfig.from_json(args.config)
    else:
        config = harness.ExperimentConfig(
            synthetic=_default_synth_spec(0), architecture=_default_architecture()
        )
    overrides = {}
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.source_fraction:
        overrides["source_fractions"] = tuple(float(v) for v in args.source_fraction.split(","))
    if args.target_fraction is not None:
        overrides["target_fraction"] = args.target_fraction
    arch = config.architecture
    if args.epochs is not None:
        arch.epochs = args.epochs
    if args.alpha is not None:
        arch.alpha = args.alpha
    if overrides:
        config = harness.ExperimentConfig(
            synthetic=config.synthetic,
            target_fraction=overrides.get("target_fraction", config.target_fraction),
            source_fractions=overrides.get("source_fractions", config.source_fractions),
            architecture=arch,
            repetitions=config.repetitions,
            base_seed=overrides.get("base_seed", config.base_seed),
            models=config.models,
        )
    return config


def _cmd_experiment(args) -> int:
    config = _load_experiment_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = harness.run_experiment(config, out_dir=out)
    rows = harness.aggregate(results)
    (out / "summary.csv").write_text(harness.summary_to_csv(rows))
    (out / "plotdata.csv").write_text(harness.emit_plotdata(rows))
    report = harness.significance_report(results)
    (out / "significance.json").write_text(json.dumps(report, indent=2) + "\n")
    n_failed = sum(r.failed for r in results)
    print(f"{len(results)} runs ({n_failed} failed); outputs in {out}")
    return 0


def _cmd_stats(args) -> int:
    results = harness.load_runs(args.runs)
    report = harness.significance_report(results)
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _cmd_report(args) -> int:
    print(Path(args.summary).read_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adau", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate synthetic domain-shift datasets")
    p.add_argument("--config", help="experiment JSON with a 'synthetic' section")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("preprocess", help="raw signal to FFT feature CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--factor", type=int, default=4)
    p.add_argument("--windows", type=int, default=200)
    p.add_argument("--window-length", type=int, default=1024)
    p.add_argument("--domain", choices=["source", "target"], default="target")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("train", help="train a detector")
    p.add_argument("--model", choices=["helm", "mixed-helm", "adau"], required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--source")
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="training-curve CSV (adau only)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-ae", type=int, default=10)
    p.add_argument("--n-oc", type=int, default=50)
    p.add_argument("--width", type=int, default=10)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--ridge-lambda", type=float, default=1e-3)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a saved model on labeled data")
    p.add_argument("--model-file", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--scaler-ref", help="dataset whose statistics standardize the inputs")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("experiment", help="full seeded experiment sweep")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--source-fraction", help="comma-separated list")
    p.add_argument("--target-fraction", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("stats", help="significance tests over saved runs")
    p.add_argument("--runs", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("report", help="print an aggregated summary table")
    p.add_argument("--summary", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
