"""Dataset contracts, vibration-signal preprocessing, and synthetic domain-shift generation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np


class Domain(str, Enum):
    SOURCE = "source"
    TARGET = "target"


class FeatureKind(str, Enum):
    RAW_WINDOW = "raw_window"
    FFT_MAGNITUDE = "fft_magnitude"
    IMAGE_VECTOR = "image_vector"
    SYNTHETIC = "synthetic"


HEALTHY = 0
ANOMALOUS = 1

_LABEL_NAMES = {HEALTHY: "healthy", ANOMALOUS: "anomalous"}
_LABEL_VALUES = {v: k for k, v in _LABEL_NAMES.items()}


@dataclass
class Dataset:
    """Sample matrix with a domain tag and optional evaluation-only health labels.

    ``groups`` optionally records an operating-mode index per row; it is carried
    through splits so results can be broken down per mode.
    """

    samples: np.ndarray
    domain: Domain
    feature_kind: FeatureKind
    labels: np.ndarray | None = None
    groups: np.ndarray | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ValueError("samples must be a 2-D matrix")
        if self.samples.shape[1] < 1:
            raise ValueError("samples must have at least one feature")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples contain non-finite values")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.samples.shape[0],):
                raise ValueError("labels length must equal sample count")
        if self.groups is not None:
            self.groups = np.asarray(self.groups, dtype=np.int64)
            if self.groups.shape != (self.samples.shape[0],):
                raise ValueError("groups length must equal sample count")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_features(self) -> int:
        return self.samples.shape[1]

    def is_healthy_only(self) -> bool:
        return self.labels is None or bool(np.all(self.labels == HEALTHY))

    def take(self, indices: np.ndarray) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(
            samples=self.samples[indices],
            domain=self.domain,
            feature_kind=self.feature_kind,
            labels=None if self.labels is None else self.labels[indices],
            groups=None if self.groups is None else self.groups[indices],
        )


def concat_datasets(parts: list[Dataset]) -> Dataset:
    if not parts:
        raise ValueError("nothing to concatenate")
    kinds = {p.feature_kind for p in parts}
    if len(kinds) != 1:
        raise ValueError("mixed feature kinds")
    labels = None
    if all(p.labels is not None for p in parts):
        labels = np.concatenate([p.labels for p in parts])
    groups = None
    if all(p.groups is not None for p in parts):
        groups = np.concatenate([p.groups for p in parts])
    return Dataset(
        samples=np.vstack([p.samples for p in parts]),
        domain=parts[0].domain,
        feature_kind=parts[0].feature_kind,
        labels=labels,
        groups=groups,
    )


# ---------------------------------------------------------------------------
# Signal preprocessing


def downsample(signal: np.ndarray, factor: int) -> np.ndarray:
    """Keep every ``factor``-th sample (plain decimation, no anti-alias filter)."""
    signal = np.asarray(signal)
    if signal.size == 0:
        raise ValueError("empty signal")
    if factor < 1:
        raise ValueError("factor must be >= 1")
    return signal[::factor]


def compute_stride(signal_len: int, window_length: int, window_count: int) -> int:
    """Stride that spreads ``window_count`` windows evenly over the signal.

    Rounded half away from zero; the two published worked examples
    (60985, 1024, 200) -> 300 and (121411, 1024, 200) -> 602 pin the formula.
    """
    if window_length < 1:
        raise ValueError("window_length must be >= 1")
    if signal_len < window_length:
        raise ValueError("signal shorter than one window")
    if window_count < 2:
        raise ValueError("window_count must be >= 2")
    stride = int(np.floor((signal_len - window_length) / window_count + 0.5))
    # rounding up may overflow very short signals
    if (window_count - 1) * stride + window_length > signal_len:
        stride -= 1
    if stride < 1:
        raise ValueError(
            f"window_count {window_count} incompatible with signal of length {signal_len}"
        )
    return stride


@dataclass(frozen=True)
class WindowSpec:
    window_length: int
    window_count: int
    stride: int

    def __post_init__(self):
        if self.window_length < 1 or self.window_count < 1 or self.stride < 1:
            raise ValueError("window_length, window_count and stride must be >= 1")

    @classmethod
    def for_signal(cls, signal_len: int, window_length: int, window_count: int) -> "WindowSpec":
        stride = compute_stride(signal_len, window_length, window_count)
        return cls(window_length=window_length, window_count=window_count, stride=stride)

    def required_length(self) -> int:
        return (self.window_count - 1) * self.stride + self.window_length


def window(signal: np.ndarray, spec: WindowSpec) -> np.ndarray:
    """Cut ``spec.window_count`` strided windows out of the signal, one per row."""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1:
        raise ValueError("signal must be 1-D")
    if spec.required_length() > signal.size:
        raise ValueError("window spec exceeds signal length")
    rows = np.empty((spec.window_count, spec.window_length))
    for k in range(spec.window_count):
        start = k * spec.stride
        rows[k] = signal[start : start + spec.window_length]
    return rows


def fft_features(win: np.ndarray) -> np.ndarray:
    """Magnitudes of the first L/2 DFT bins of an even-length window."""
    win = np.asarray(win, dtype=np.float64)
    length = win.shape[-1]
    if length < 2 or length % 2 != 0:
        raise ValueError("window length must be even and >= 2")
    return np.abs(np.fft.rfft(win, axis=-1))[..., : length // 2]


def preprocess_signal(
    signal: np.ndarray,
    factor: int,
    window_length: int,
    window_count: int,
    domain: Domain = Domain.TARGET,
) -> Dataset:
    """Full raw-signal pipeline: decimate, window, FFT-magnitude features."""
    sig = downsample(signal, factor)
    spec = WindowSpec.for_signal(sig.size, window_length, window_count)
    wins = window(sig, spec)
    return Dataset(fft_features(wins), domain=domain, feature_kind=FeatureKind.FFT_MAGNITUDE)


# ---------------------------------------------------------------------------
# Train/validation split


def split_train_val(dataset: Dataset, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded 80/20 split; the validation set is 25% the size of the train set."""
    if not dataset.is_healthy_only():
        raise ValueError("split requires healthy-only data")
    n = dataset.n_samples
    if n < 5:
        raise ValueError("need at least 5 samples to split")
    n_val = int(round(n / 5.0))
    perm = np.random.default_rng(seed).permutation(n)
    return dataset.take(perm[n_val:]), dataset.take(perm[:n_val])


# ---------------------------------------------------------------------------
# Synthetic domain-shift generation


@dataclass(frozen=True)
class AffineShift:
    """Affine domain shift: per-feature scaling, planar rotations, translation, noise."""

    scale: tuple[float, ...] = ()
    angles: tuple[float, ...] = ()
    translation: tuple[float, ...] = ()
    noise_std: float = 0.0

    def __post_init__(self):
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")

    @classmethod
    def identity(cls) -> "AffineShift":
        return cls()


@dataclass(frozen=True)
class SyntheticSpec:
    n_modes: int
    modes_in_target_training: frozenset
    dim: int
    shift: AffineShift
    anomaly_offset: float
    samples_per_mode: int
    seed: int
    cluster_std: float = 0.1
    mode_spacing: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "modes_in_target_training", frozenset(self.modes_in_target_training))
        if self.n_modes < 1 or self.dim < 1 or self.samples_per_mode < 1:
            raise ValueError("n_modes, dim and samples_per_mode must be >= 1")
        if not self.modes_in_target_training <= set(range(1, self.n_modes + 1)):
            raise ValueError("modes_in_target_training must be a subset of 1..n_modes")
        if not self.modes_in_target_training:
            raise ValueError("modes_in_target_training must be non-empty")
        if self.cluster_std <= 0 or self.mode_spacing <= 0:
            raise ValueError("cluster_std and mode_spacing must be > 0")


def rotation_matrix(dim: int, angles: tuple[float, ...]) -> np.ndarray:
    """Product of Givens rotations over consecutive coordinate pairs (0,1), (2,3), ..."""
    rot = np.eye(dim)
    for k, theta in enumerate(angles):
        i, j = 2 * k, 2 * k + 1
        if j >= dim:
            break
        giv = np.eye(dim)
        c, s = np.cos(theta), np.sin(theta)
        giv[i, i] = c
        giv[j, j] = c
        giv[i, j] = -s
        giv[j, i] = s
        rot = giv @ rot
    return rot


def mode_centers(spec: SyntheticSpec) -> np.ndarray:
    """Seeded mode centers, rescaled so the closest pair sits ``mode_spacing`` apart."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x6D6F6465]))
    centers = rng.standard_normal((spec.n_modes, spec.dim))
    if spec.n_modes > 1:
        dmin = np.inf
        for i in range(spec.n_modes):
            for j in range(i + 1, spec.n_modes):
                dmin = min(dmin, float(np.linalg.norm(centers[i] - centers[j])))
        centers *= spec.mode_spacing / dmin
    return centers


def apply_shift(x: np.ndarray, shift: AffineShift, rng: np.random.Generator | None = None) -> np.ndarray:
    dim = x.shape[1]
    scale = np.ones(dim) if not shift.scale else np.asarray(shift.scale, dtype=np.float64)
    if scale.shape != (dim,):
        raise ValueError("scale length must equal dim")
    translation = np.zeros(dim) if not shift.translation else np.asarray(shift.translation, dtype=np.float64)
    if translation.shape != (dim,):
        raise ValueError("translation length must equal dim")
    rot = rotation_matrix(dim, shift.angles)
    out = (x * scale) @ rot.T + translation
    if shift.noise_std > 0 and rng is not None:
        out = out + shift.noise_std * rng.standard_normal(out.shape)
    return out


def synth_generate(spec: SyntheticSpec) -> tuple[Dataset, Dataset, Dataset, Dataset]:
    """Generate (source, target_train, target_test_healthy, target_test_anomalous).

    Source holds all healthy modes; target data are the source distributions
    pushed through the affine shift plus noise. Target training data cover only
    ``modes_in_target_training``; anomalies are healthy target samples displaced
    by ``anomaly_offset`` along per-sample random directions.
    """
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x64617461]))
    centers = mode_centers(spec)

    def draw(mode_idx: int, n: int) -> np.ndarray:
        return centers[mode_idx] + spec.cluster_std * rng.standard_normal((n, spec.dim))

    modes = list(range(1, spec.n_modes + 1))
    n_per = spec.samples_per_mode

    src_parts, src_groups = [], []
    for m in modes:
        src_parts.append(draw(m - 1, n_per))
        src_groups.append(np.full(n_per, m))
    source = Dataset(
        np.vstack(src_parts),
        domain=Domain.SOURCE,
        feature_kind=FeatureKind.SYNTHETIC,
        labels=np.zeros(n_per * spec.n_modes, dtype=np.int64),
        groups=np.concatenate(src_groups),
    )

    train_modes = sorted(spec.modes_in_target_training)
    tt_parts, tt_groups = [], []
    for m in train_modes:
        tt_parts.append(apply_shift(draw(m - 1, n_per), spec.shift, rng))
        tt_groups.append(np.full(n_per, m))
    target_train = Dataset(
        np.vstack(tt_parts),
        domain=Domain.TARGET,
        feature_kind=FeatureKind.SYNTHETIC,
        labels=np.zeros(n_per * len(train_modes), dtype=np.int64),
        groups=np.concatenate(tt_groups),
    )

    th_parts, th_groups = [], []
    for m in modes:
        th_parts.append(apply_shift(draw(m - 1, n_per), spec.shift, rng))
        th_groups.append(np.full(n_per, m))
    healthy_mat = np.vstack(th_parts)
    target_test_healthy = Dataset(
        healthy_mat,
        domain=Domain.TARGET,
        feature_kind=FeatureKind.SYNTHETIC,
        labels=np.zeros(healthy_mat.shape[0], dtype=np.int64),
        groups=np.concatenate(th_groups),
    )

    anom_base_parts, anom_groups = [], []
    for m in modes:
        anom_base_parts.append(apply_shift(draw(m - 1, n_per), spec.shift, rng))
        anom_groups.append(np.full(n_per, m))
    anom_mat = np.vstack(anom_base_parts)
    directions = rng.standard_normal(anom_mat.shape)
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    anom_mat = anom_mat + spec.anomaly_offset * directions
    target_test_anomalous = Dataset(
        anom_mat,
        domain=Domain.TARGET,
        feature_kind=FeatureKind.SYNTHETIC,
        labels=np.ones(anom_mat.shape[0], dtype=np.int64),
        groups=np.concatenate(anom_groups),
    )

    return source, target_train, target_test_healthy, target_test_anomalous


# ---------------------------------------------------------------------------
# Persistence: CSV with a JSON sidecar manifest


def save_dataset(dataset: Dataset, path: str | Path, seed: int | None = None) -> None:
    path = Path(path)
    n, d = dataset.samples.shape
    header = ",".join(f"f{i}" for i in range(d))
    columns = [dataset.samples]
    if dataset.labels is not None:
        header += ",label"
    with path.open("w") as fh:
        fh.write(header + "\n")
        for i in range(n):
            row = ",".join(repr(float(v)) for v in dataset.samples[i])
            if dataset.labels is not None:
                row += "," + _LABEL_NAMES[int(dataset.labels[i])]
            fh.write(row + "\n")
    manifest = {
        "domain": dataset.domain.value,
        "feature_kind": dataset.feature_kind.value,
        "n_samples": n,
        "n_features": d,
        "seed": seed,
    }
    manifest_path = path.with_name(path.name + ".manifest.json")
    if path.suffix == ".csv":
        manifest_path = path.with_suffix(".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    manifest_path = path.with_suffix(".manifest.json") if path.suffix == ".csv" else Path(str(path) + ".manifest.json")
    manifest = json.loads(manifest_path.read_text())
    with path.open() as fh:
        header = fh.readline().strip().split(",")
        has_labels = header[-1] == "label"
        rows, labels = [], []
        for line in fh:
            parts = line.strip().split(",")
            if not parts or parts == [""]:
                continue
            if has_labels:
                rows.append([float(v) for v in parts[:-1]])
                labels.append(_LABEL_VALUES[parts[-1]])
            else:
                rows.append([float(v) for v in parts])
    return Dataset(
        np.asarray(rows),
        domain=Domain(manifest["domain"]),
        feature_kind=FeatureKind(manifest["feature_kind"]),
        labels=np.asarray(labels, dtype=np.int64) if has_labels else None,
    )


def load_signal(path: str | Path) -> np.ndarray:
    """Read a raw signal from single-column CSV or whitespace-separated text."""
    text = Path(path).read_text()
    values = [float(tok) for tok in text.replace(",", " ").split()]
    if not values:
        raise ValueError(f"no samples found in {path}")
    return np.asarray(values)
