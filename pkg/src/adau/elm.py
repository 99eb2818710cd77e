"""Extreme Learning Machine building blocks and the stacked HELM detector."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .data import ANOMALOUS, HEALTHY, Dataset

_FORMAT_VERSION = 1


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500, 500)))


def _as_matrix(data) -> np.ndarray:
    if isinstance(data, Dataset):
        return data.samples
    return np.asarray(data, dtype=np.float64)


@dataclass
class ElmLayer:
    """Random fixed input weights plus ridge-solved output weights."""

    input_weights: np.ndarray  # [n_hidden x n_in]
    bias: np.ndarray  # [n_hidden]
    output_weights: np.ndarray | None = None  # [n_hidden x n_out]

    def hidden(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.input_weights.shape[1]:
            raise ValueError("feature count does not match layer input size")
        return sigmoid(X @ self.input_weights.T + self.bias)

    def predict(self, X: np.ndarray) -> np.ndarray:
        if self.output_weights is None:
            raise ValueError("layer is untrained")
        return self.hidden(X) @ self.output_weights


def elm_init(n_in: int, n_hidden: int, seed: int) -> ElmLayer:
    """Untrained layer with weights and bias i.i.d. uniform on [-1, 1]."""
    if n_in < 1 or n_hidden < 1:
        raise ValueError("layer sizes must be >= 1")
    rng = np.random.default_rng(seed)
    return ElmLayer(
        input_weights=rng.uniform(-1.0, 1.0, size=(n_hidden, n_in)),
        bias=rng.uniform(-1.0, 1.0, size=n_hidden),
    )


def ridge_solve(H: np.ndarray, T: np.ndarray, lam: float) -> np.ndarray:
    """argmin_B ||H B - T||^2 + lam ||B||^2 via the SPD normal equations."""
    H = np.asarray(H, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    h = H.shape[1]
    A = H.T @ H + lam * np.eye(h)
    rhs = H.T @ T
    try:
        factor = scipy.linalg.cho_factor(A)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular system; use lambda > 0") from exc
    except scipy.linalg.LinAlgError as exc:  # raised by cho_factor on non-PD input
        raise ValueError("singular system; use lambda > 0") from exc
    return scipy.linalg.cho_solve(factor, rhs)


@dataclass
class ElmAutoencoder:
    """Single-layer ELM autoencoder; features are the solved weights re-used as a projection."""

    layer: ElmLayer

    def transform(self, X) -> np.ndarray:
        X = _as_matrix(X)
        # projection through the transposed ridge-solved output weights
        return sigmoid(X @ self.layer.output_weights.T)

    def reconstruct(self, X) -> np.ndarray:
        return self.layer.predict(_as_matrix(X))


def train_ae(X, n_hidden: int, lam: float, seed: int) -> ElmAutoencoder:
    X = _as_matrix(X)
    if X.shape[0] < 1:
        raise ValueError("empty training set")
    layer = elm_init(X.shape[1], n_hidden, seed)
    H = layer.hidden(X)
    layer.output_weights = ridge_solve(H, X, lam)
    return ElmAutoencoder(layer=layer)


def train_oneclass(F, n_hidden: int, lam: float, seed: int) -> ElmLayer:
    """One-class ELM: random expansion ridge-regressed onto the constant target 1."""
    F = _as_matrix(F)
    if F.shape[0] < 1:
        raise ValueError("empty training set")
    layer = elm_init(F.shape[1], n_hidden, seed)
    H = layer.hidden(F)
    layer.output_weights = ridge_solve(H, np.ones((F.shape[0], 1)), lam)
    return layer


def detection_threshold(residuals: np.ndarray) -> float:
    """1.2 times the 99.5th percentile (linear interpolation) of healthy residuals."""
    residuals = np.asarray(residuals, dtype=np.float64)
    if residuals.size == 0:
        raise ValueError("empty validation residuals")
    return 1.2 * float(np.percentile(residuals, 99.5))


@dataclass
class HelmModel:
    """Stacked ELM autoencoder + one-class ELM with a healthy-validation threshold."""

    ae: ElmAutoencoder
    oc_layer: ElmLayer
    threshold: float
    ridge_lambda: float

    def score(self, X) -> np.ndarray:
        return self.oc_layer.predict(self.ae.transform(X)).ravel()

    def residual(self, X) -> np.ndarray:
        return np.abs(1.0 - self.score(X))

    def detect(self, X) -> np.ndarray:
        return np.where(self.residual(X) > self.threshold, ANOMALOUS, HEALTHY)


def helm_train(train, val, n_ae: int, n_oc: int, lam: float, seed: int) -> HelmModel:
    train_X = _as_matrix(train)
    val_X = _as_matrix(val)
    if isinstance(train, Dataset) and not train.is_healthy_only():
        raise ValueError("training data must be healthy-only")
    if isinstance(val, Dataset) and not val.is_healthy_only():
        raise ValueError("validation data must be healthy-only")
    if val_X.shape[0] < 1:
        raise ValueError("empty validation set")
    ae = train_ae(train_X, n_ae, lam, seed)
    features = ae.transform(train_X)
    oc = train_oneclass(features, n_oc, lam, seed + 1)
    model = HelmModel(ae=ae, oc_layer=oc, threshold=np.inf, ridge_lambda=lam)
    model.threshold = detection_threshold(model.residual(val_X))
    return model


def helm_detect(model: HelmModel, X) -> np.ndarray:
    return model.detect(_as_matrix(X))


def elbow_select(sizes, losses) -> int:
    """Size at maximum perpendicular distance to the chord of the normalized curve."""
    sizes = np.asarray(sizes, dtype=np.float64)
    losses = np.asarray(losses, dtype=np.float64)
    if sizes.size < 3 or sizes.size != losses.size:
        raise ValueError("need at least 3 (size, loss) points")
    if np.any(np.diff(sizes) <= 0):
        raise ValueError("sizes must be strictly increasing")
    x = (sizes - sizes[0]) / (sizes[-1] - sizes[0])
    span = losses[-1] - losses[0]
    y = (losses - losses[0]) / span if span != 0 else np.zeros_like(losses)
    # distance from (x, y) to the chord joining (0, y0) and (1, y1)
    cx, cy = 1.0, y[-1] - y[0]
    norm = np.hypot(cx, cy)
    dist = np.abs(cx * (y - y[0]) - cy * x) / norm
    best = int(np.argmax(dist > dist.max() - 1e-12))
    return int(sizes[best])


# ---------------------------------------------------------------------------
# Serialization


def helm_to_dict(model: HelmModel) -> dict:
    return {
        "format_version": _FORMAT_VERSION,
        "kind": "helm",
        "ridge_lambda": model.ridge_lambda,
        "threshold": model.threshold,
        "ae": _layer_to_dict(model.ae.layer),
        "oc": _layer_to_dict(model.oc_layer),
    }


def helm_from_dict(payload: dict) -> HelmModel:
    if payload.get("kind") != "helm":
        raise ValueError("not a HELM model payload")
    return HelmModel(
        ae=ElmAutoencoder(layer=_layer_from_dict(payload["ae"])),
        oc_layer=_layer_from_dict(payload["oc"]),
        threshold=float(payload["threshold"]),
        ridge_lambda=float(payload["ridge_lambda"]),
    )


def save_helm(model: HelmModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(helm_to_dict(model)) + "\n")


def load_helm(path: str | Path) -> HelmModel:
    return helm_from_dict(json.loads(Path(path).read_text()))


def _layer_to_dict(layer: ElmLayer) -> dict:
    return {
        "input_weights": layer.input_weights.tolist(),
        "bias": layer.bias.tolist(),
        "output_weights": None if layer.output_weights is None else layer.output_weights.tolist(),
    }


def _layer_from_dict(payload: dict) -> ElmLayer:
    out = payload["output_weights"]
    return ElmLayer(
        input_weights=np.asarray(payload["input_weights"]),
        bias=np.asarray(payload["bias"]),
        output_weights=None if out is None else np.asarray(out),
    )
