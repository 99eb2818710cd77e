"""Experiment orchestration: seeded repetitions, aggregation, significance tables."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import adversarial, elm, metrics
from .data import (
    ANOMALOUS,
    AffineShift,
    Dataset,
    HEALTHY,
    SyntheticSpec,
    concat_datasets,
    split_train_val,
    synth_generate,
)

MODEL_TARGET_ONLY = "target-helm"
MODEL_MIXED = "mixed-helm"
MODEL_ADAU = "adau"
ALL_MODELS = (MODEL_TARGET_ONLY, MODEL_MIXED, MODEL_ADAU)


@dataclass
class Architecture:
    n_ae: int = 10
    n_oc: int = 50
    extractor_width: int = 10
    alpha: float = 0.1
    epochs: int = 2000
    learning_rate: float = 1e-3
    ridge_lambda: float = 1e-3
    # keeps sigmoid layers in their graded regime on in-distribution data
    input_gain: float = 1.0
    # z-score gain on aligned features before the one-class stage
    feature_gain: float = 1.0
    # one-class committee size for the adversarial model (majority vote)
    n_committee: int = 7


@dataclass
class ExperimentConfig:
    synthetic: SyntheticSpec
    target_fraction: float = 1.0
    source_fractions: tuple = (1.0,)
    architecture: Architecture = field(default_factory=Architecture)
    repetitions: int = 5
    base_seed: int = 0
    models: tuple = ALL_MODELS

    def __post_init__(self):
        if not (0 < self.target_fraction <= 1):
            raise ValueError("target_fraction must be in (0, 1]")
        if any(not (0 < f <= 1) for f in self.source_fractions):
            raise ValueError("source fractions must be in (0, 1]")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        unknown = set(self.models) - set(ALL_MODELS)
        if unknown:
            raise ValueError(f"unknown models: {sorted(unknown)}")

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentConfig":
        synth = dict(payload["synthetic"])
        shift = AffineShift(**{k: tuple(v) if isinstance(v, list) else v for k, v in synth.pop("shift", {}).items()})
        spec = SyntheticSpec(shift=shift, **{**synth, "modes_in_target_training": frozenset(synth.pop("modes_in_target_training"))})
        arch = Architecture(**payload.get("architecture", {}))
        return cls(
            synthetic=spec,
            target_fraction=payload.get("target_fraction", 1.0),
            source_fractions=tuple(payload.get("source_fractions", (1.0,))),
            architecture=arch,
            repetitions=payload.get("repetitions", 5),
            base_seed=payload.get("base_seed", 0),
            models=tuple(payload.get("models", ALL_MODELS)),
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class RunResult:
    model: str
    source_fraction: float
    seed: int
    ba: float | None
    fpr: float | None
    per_mode: dict  # mode -> {"ba":, "fpr":, "tp":, "fp":, "tn":, "fn":}
    outcomes: np.ndarray | None  # per-sample success indicators on the shared test set
    duration: float
    failed: bool = False
    error: str = ""


class Standardizer:
    """Z-score scaler with an optional overall gain; fitted once on reference data."""

    def __init__(self, X: np.ndarray, gain: float = 1.0):
        X = np.asarray(X, dtype=np.float64)
        self.mean = X.mean(axis=0)
        self.std = X.std(axis=0)
        self.std[self.std == 0] = 1.0
        self.gain = gain

    def __call__(self, X) -> np.ndarray:
        X = X.samples if isinstance(X, Dataset) else np.asarray(X, dtype=np.float64)
        return (X - self.mean) / self.std * self.gain


def _subsample(dataset: Dataset, fraction: float, rng: np.random.Generator) -> Dataset:
    n = dataset.n_samples
    keep = max(2, int(round(fraction * n)))
    idx = rng.choice(n, size=min(keep, n), replace=False)
    return dataset.take(np.sort(idx))


def _evaluate(detect_fn, test: Dataset) -> tuple[float, float, dict, np.ndarray]:
    pred = detect_fn(test.samples)
    counts = metrics.confusion(test.labels, pred)
    ba = metrics.balanced_accuracy(counts)
    fp_rate = metrics.fpr(counts)
    per_mode = {}
    if test.groups is not None:
        for mode in np.unique(test.groups):
            sel = test.groups == mode
            c = metrics.confusion(test.labels[sel], pred[sel])
            per_mode[int(mode)] = {
                "ba": metrics.balanced_accuracy(c),
                "fpr": metrics.fpr(c),
                "tp": c.tp,
                "fp": c.fp,
                "tn": c.tn,
                "fn": c.fn,
            }
    outcomes = (pred == test.labels).astype(bool)
    return ba, fp_rate, per_mode, outcomes


def _train_model(model_name: str, source: Dataset, target: Dataset, arch: Architecture, seed: int):
    """Returns (detect_fn, scaler) for the requested model."""
    if model_name == MODEL_TARGET_ONLY:
        scaler = Standardizer(target.samples, arch.input_gain)
        train, val = split_train_val(target, seed)
        helm = elm.helm_train(
            scaler(train), scaler(val), arch.n_ae, arch.n_oc, arch.ridge_lambda, seed
        )
        return (lambda X: helm.detect(scaler(X))), scaler
    if model_name == MODEL_MIXED:
        scaler = Standardizer(source.samples, arch.input_gain)
        pool = Dataset(
            np.vstack([source.samples, target.samples]),
            domain=target.domain,
            feature_kind=target.feature_kind,
        )
        train, val = split_train_val(pool, seed)
        helm = elm.helm_train(
            scaler(train), scaler(val), arch.n_ae, arch.n_oc, arch.ridge_lambda, seed
        )
        return (lambda X: helm.detect(scaler(X))), scaler
    if model_name == MODEL_ADAU:
        scaler = Standardizer(source.samples, arch.input_gain)
        config = adversarial.AdauConfig(
            extractor_width=arch.extractor_width,
            n_oneclass=arch.n_oc,
            alpha=arch.alpha,
            epochs=arch.epochs,
            learning_rate=arch.learning_rate,
            ridge_lambda=arch.ridge_lambda,
            seed=seed,
            feature_gain=arch.feature_gain,
            n_committee=arch.n_committee,
        )
        model = adversarial.train_adau(scaler(source), scaler(target), config)
        return (lambda X: model.detect(scaler(X))), scaler
    raise ValueError(f"unknown model {model_name!r}")


def run_experiment(config: ExperimentConfig, out_dir: str | Path | None = None) -> list[RunResult]:
    """Seeded repetitions of every (model, source_fraction) cell on shared test sets."""
    results: list[RunResult] = []
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        (out_dir / "runs").mkdir(parents=True, exist_ok=True)
        (out_dir / "logs").mkdir(parents=True, exist_ok=True)

    for rep in range(config.repetitions):
        seed = config.base_seed + rep
        spec = SyntheticSpec(
            n_modes=config.synthetic.n_modes,
            modes_in_target_training=config.synthetic.modes_in_target_training,
            dim=config.synthetic.dim,
            shift=config.synthetic.shift,
            anomaly_offset=config.synthetic.anomaly_offset,
            samples_per_mode=config.synthetic.samples_per_mode,
            seed=seed,
            cluster_std=config.synthetic.cluster_std,
            mode_spacing=config.synthetic.mode_spacing,
        )
        source, target_pool, test_healthy, test_anomalous = synth_generate(spec)
        test = concat_datasets([test_healthy, test_anomalous])

        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x73616D70]))
        target_train = _subsample(target_pool, config.target_fraction, rng)

        for frac in config.source_fractions:
            source_sub = _subsample(source, frac, rng)
            for model_name in config.models:
                start = time.perf_counter()
                try:
                    detect_fn, _ = _train_model(
                        model_name, source_sub, target_train, config.architecture, seed
                    )
                    ba, fp_rate, per_mode, outcomes = _evaluate(detect_fn, test)
                    result = RunResult(
                        model=model_name,
                        source_fraction=frac,
                        seed=seed,
                        ba=ba,
                        fpr=fp_rate,
                        per_mode=per_mode,
                        outcomes=outcomes,
                        duration=time.perf_counter() - start,
                    )
                except Exception as exc:  # keep partial tables comparable
                    result = RunResult(
                        model=model_name,
                        source_fraction=frac,
                        seed=seed,
                        ba=None,
                        fpr=None,
                        per_mode={},
                        outcomes=None,
                        duration=time.perf_counter() - start,
                        failed=True,
                        error=str(exc),
                    )
                results.append(result)
                if out_dir is not None:
                    _save_run(result, out_dir / "runs")
    return results


def _save_run(result: RunResult, runs_dir: Path) -> None:
    payload = {
        "model": result.model,
        "source_fraction": result.source_fraction,
        "seed": result.seed,
        "ba": result.ba,
        "fpr": result.fpr,
        "per_mode": result.per_mode,
        "outcomes": None if result.outcomes is None else result.outcomes.astype(int).tolist(),
        "duration": result.duration,
        "failed": result.failed,
        "error": result.error,
    }
    name = f"{result.model}_f{result.source_fraction:g}_{result.seed}.json"
    (runs_dir / name).write_text(json.dumps(payload) + "\n")


def load_runs(runs_dir: str | Path) -> list[RunResult]:
    results = []
    for path in sorted(Path(runs_dir).glob("*.json")):
        payload = json.loads(path.read_text())
        results.append(
            RunResult(
                model=payload["model"],
                source_fraction=payload["source_fraction"],
                seed=payload["seed"],
                ba=payload["ba"],
                fpr=payload["fpr"],
                per_mode={int(k): v for k, v in payload["per_mode"].items()},
                outcomes=None if payload["outcomes"] is None else np.asarray(payload["outcomes"], dtype=bool),
                duration=payload["duration"],
                failed=payload["failed"],
                error=payload.get("error", ""),
            )
        )
    return results


# ---------------------------------------------------------------------------
# Aggregation


def aggregate(results: list[RunResult]) -> list[dict]:
    """Mean and population std of BA and FPR (percent, 2 decimals) per cell and mode."""
    if not results:
        raise ValueError("no results to aggregate")
    cells: dict[tuple, dict[str, list]] = {}
    for r in sorted(results, key=lambda r: (r.model, r.source_fraction, r.seed)):
        if r.failed:
            continue
        for mode_key, ba, fp_rate in _iter_mode_metrics(r):
            key = (r.model, r.source_fraction, mode_key)
            cell = cells.setdefault(key, {"ba": [], "fpr": []})
            cell["ba"].append(ba)
            cell["fpr"].append(fp_rate)
    rows = []
    for (model, frac, mode_key) in sorted(cells, key=lambda k: (k[0], k[1], str(k[2]))):
        cell = cells[(model, frac, mode_key)]
        ba = np.asarray(cell["ba"]) * 100.0
        fp = np.asarray(cell["fpr"]) * 100.0
        rows.append(
            {
                "model": model,
                "source_fraction": frac,
                "mode": mode_key,
                "ba_mean": round(float(ba.mean()), 2),
                "ba_std": round(float(ba.std()), 2),
                "fpr_mean": round(float(fp.mean()), 2),
                "fpr_std": round(float(fp.std()), 2),
                "n_runs": len(cell["ba"]),
            }
        )
    return rows


def _iter_mode_metrics(r: RunResult):
    yield "all", r.ba, r.fpr
    for mode, entry in sorted(r.per_mode.items()):
        yield mode, entry["ba"], entry["fpr"]


def summary_to_csv(rows: list[dict]) -> str:
    header = "model,source_fraction,mode,ba_mean,ba_std,fpr_mean,fpr_std,n_runs"
    lines = [header]
    for row in rows:
        lines.append(
            f"{row['model']},{row['source_fraction']:g},{row['mode']},"
            f"{row['ba_mean']:.2f},{row['ba_std']:.2f},"
            f"{row['fpr_mean']:.2f},{row['fpr_std']:.2f},{row['n_runs']}"
        )
    return "\n".join(lines) + "\n"


def emit_plotdata(rows: list[dict]) -> str:
    """Long-format CSV: one line per (cell, metric), ready for any plotting tool."""
    lines = ["model,source_fraction,mode,metric,mean,std"]
    for row in rows:
        for metric in ("ba", "fpr"):
            lines.append(
                f"{row['model']},{row['source_fraction']:g},{row['mode']},"
                f"{metric},{row[f'{metric}_mean']:.2f},{row[f'{metric}_std']:.2f}"
            )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Significance


def significance_report(results: list[RunResult]) -> list[dict]:
    """Pairwise McNemar + GLM per model pair, plus pooled aligned-vs-unaligned."""
    pooled: dict[tuple, list[np.ndarray]] = {}
    for r in results:
        if r.failed or r.outcomes is None:
            continue
        pooled.setdefault((r.model, r.source_fraction), []).append(r.outcomes)
    if len(pooled) < 2:
        raise ValueError("need at least two models with paired outcomes")
    vectors = {key: np.concatenate(chunks) for key, chunks in pooled.items()}
    lengths = {v.size for v in vectors.values()}
    if len(lengths) != 1:
        raise ValueError("paired tests require identical test sets across models")

    report = []
    keys = sorted(vectors)
    for i, key_a in enumerate(keys):
        for key_b in keys[i + 1 :]:
            pairs = metrics.PairedOutcomes(vectors[key_a], vectors[key_b])
            mc = metrics.mcnemar(pairs, mode="exact")
            glm = metrics.glm_model_factor([vectors[key_a], vectors[key_b]])
            report.append(
                {
                    "model_a": f"{key_a[0]}@{key_a[1]:g}",
                    "model_b": f"{key_b[0]}@{key_b[1]:g}",
                    "mcnemar_statistic": mc.statistic,
                    "mcnemar_p": mc.p_value,
                    "glm_statistic": glm.statistic,
                    "glm_p": glm.p_value,
                    "n": mc.n,
                    "flags": list(mc.flags) + list(glm.flags),
                }
            )

    aligned = [vectors[k] for k in keys if k[0] == MODEL_ADAU]
    unaligned = [vectors[k] for k in keys if k[0] != MODEL_ADAU]
    if aligned and unaligned:
        glm = metrics.glm_model_factor([np.concatenate(unaligned), np.concatenate(aligned)])
        report.append(
            {
                "model_a": "all-unaligned",
                "model_b": "all-adau",
                "mcnemar_statistic": None,
                "mcnemar_p": None,
                "glm_statistic": glm.statistic,
                "glm_p": glm.p_value,
                "n": glm.n,
                "flags": list(glm.flags),
            }
        )
    return report
