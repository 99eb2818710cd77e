"""Adversarial alignment: dense feature extractor vs. domain discriminator,
trained with a multidimensional-scaling loss and a gradient reversal layer."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import ANOMALOUS, Dataset, Domain, HEALTHY
from .elm import ElmLayer, _as_matrix, detection_threshold, train_oneclass

_FORMAT_VERSION = 1
_BCE_CLAMP = 1e-7


# ---------------------------------------------------------------------------
# Dense networks with manual reverse-mode gradients


def _tanh(x):
    return np.tanh(x)


def _tanh_grad(out):
    return 1.0 - out**2


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500, 500)))


def _sigmoid_grad(out):
    return out * (1.0 - out)


def _identity(x):
    return x


def _identity_grad(out):
    return np.ones_like(out)


_ACTIVATIONS = {
    "tanh": (_tanh, _tanh_grad),
    "sigmoid": (_sigmoid, _sigmoid_grad),
    "identity": (_identity, _identity_grad),
}


@dataclass
class DenseLayer:
    weights: np.ndarray  # [n_out x n_in]
    bias: np.ndarray  # [n_out]
    activation: str

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class DenseNet:
    layers: list[DenseLayer]

    @classmethod
    def build(cls, sizes: list[int], activations: list[str], seed) -> "DenseNet":
        """Uniform init scaled by 1/sqrt(fan_in), deterministic per seed."""
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        rng = np.random.default_rng(seed)
        layers = []
        for n_in, n_out, act in zip(sizes[:-1], sizes[1:], activations):
            bound = 1.0 / np.sqrt(n_in)
            layers.append(
                DenseLayer(
                    weights=rng.uniform(-bound, bound, size=(n_out, n_in)),
                    bias=rng.uniform(-bound, bound, size=n_out),
                    activation=act,
                )
            )
        return cls(layers=layers)

    def forward(self, X: np.ndarray) -> list[np.ndarray]:
        """Activations of every layer; index 0 is the input itself."""
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.layers[0].weights.shape[1]:
            raise ValueError("input dimension does not match first layer")
        acts = [X]
        for layer in self.layers:
            fn, _ = _ACTIVATIONS[layer.activation]
            acts.append(fn(acts[-1] @ layer.weights.T + layer.bias))
        return acts

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return self.forward(X)[-1]

    def backward(self, acts: list[np.ndarray], upstream: np.ndarray):
        """Gradients of sum(upstream * output) w.r.t. parameters and input."""
        grads = [None] * len(self.layers)
        delta = np.asarray(upstream, dtype=np.float64)
        for k in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[k]
            _, gfn = _ACTIVATIONS[layer.activation]
            delta = delta * gfn(acts[k + 1])
            grads[k] = (delta.T @ acts[k], delta.sum(axis=0))
            delta = delta @ layer.weights
        return grads, delta

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend([layer.weights, layer.bias])
        return out


def flatten_grads(grads) -> list[np.ndarray]:
    out = []
    for dw, db in grads:
        out.extend([dw, db])
    return out


class Adam:
    """Adam with the standard bias-corrected moment estimates."""

    def __init__(self, params: list[np.ndarray], lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g**2
            mhat = m / (1 - self.beta1**self.t)
            vhat = v / (1 - self.beta2**self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


# ---------------------------------------------------------------------------
# Losses


def _domain_mask(domain) -> np.ndarray:
    """True where the sample belongs to the source domain."""
    return np.asarray(
        [(d if isinstance(d, Domain) else Domain(str(d))) == Domain.SOURCE for d in domain]
    )


def mds_loss(X: np.ndarray, F: np.ndarray, domain) -> tuple[float, float, np.ndarray]:
    """Distance-preservation loss, per domain, with closed-form target scaling.

    Per domain S: (1/|S|) * sum_{i<j} (dX_ij - eta_S * dF_ij)^2, with
    eta_source = 1 and eta_target the least-squares optimum
    sum(dX*dF)/sum(dF^2). Returns (loss, eta_target, dloss/dF) with eta_target
    held constant within the step.
    """
    X = np.asarray(X, dtype=np.float64)
    F = np.asarray(F, dtype=np.float64)
    if X.shape[0] != F.shape[0]:
        raise ValueError("X and F row counts differ")
    is_source = _domain_mask(domain)
    loss = 0.0
    eta_target = 1.0
    grad = np.zeros_like(F)
    for source_side in (True, False):
        idx = np.flatnonzero(is_source == source_side)
        if idx.size < 2:
            raise ValueError("each represented domain needs at least 2 samples")
        Xs, Fs = X[idx], F[idx]
        dX = _dense_distances(Xs)
        dF = _dense_distances(Fs)
        iu = np.triu_indices(idx.size, k=1)
        if source_side:
            eta = 1.0
        else:
            denom = float(np.sum(dF[iu] ** 2))
            if denom == 0.0:
                raise ValueError("all target feature distances are zero; eta undefined")
            eta = float(np.sum(dX[iu] * dF[iu]) / denom)
            eta_target = eta
        n_s = idx.size
        resid = dX - eta * dF
        loss += float(np.sum(resid[iu] ** 2)) / n_s
        # d/dF_i of (dX-eta*dF)^2 is -2*eta*resid * (F_i-F_j)/dF
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(dF > 0, (-2.0 * eta / n_s) * resid / dF, 0.0)
        grad[idx] = coef.sum(axis=1)[:, None] * Fs - coef @ Fs
    return loss, eta_target, grad


def _dense_distances(A: np.ndarray) -> np.ndarray:
    sq = np.einsum("ij,ij->i", A, A)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (A @ A.T)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(np.maximum(d2, 0.0))


def discriminator_loss(d_out: np.ndarray, domain, weights: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy (source label 1, target 0) and its gradient."""
    d_out = np.asarray(d_out, dtype=np.float64).ravel()
    if d_out.size == 0:
        raise ValueError("empty batch")
    y = _domain_mask(domain).astype(np.float64)
    if y.size != d_out.size:
        raise ValueError("domain vector length mismatch")
    p = np.clip(d_out, _BCE_CLAMP, 1.0 - _BCE_CLAMP)
    w = np.ones_like(p) if weights is None else np.asarray(weights, dtype=np.float64)
    n = p.size
    loss = float(-np.sum(w * (y * np.log(p) + (1 - y) * np.log1p(-p))) / n)
    grad = w * (p - y) / (p * (1 - p)) / n
    grad[(d_out < _BCE_CLAMP) | (d_out > 1.0 - _BCE_CLAMP)] = 0.0
    return loss, grad


def balance_weights(domain) -> np.ndarray:
    """Per-sample weights making both domains contribute equally to the BCE."""
    is_source = _domain_mask(domain)
    n = is_source.size
    n_src = int(is_source.sum())
    n_tgt = n - n_src
    if n_src == 0 or n_tgt == 0:
        return np.ones(n)
    w = np.where(is_source, n / (2.0 * n_src), n / (2.0 * n_tgt))
    return w


def grl_backward(grad: np.ndarray, alpha: float) -> np.ndarray:
    """Gradient reversal: identity forward, -alpha scaling backward."""
    return -alpha * np.asarray(grad)


# ---------------------------------------------------------------------------
# Training


@dataclass
class AdauConfig:
    extractor_width: int = 10
    n_oneclass: int = 50
    alpha: float = 0.1
    epochs: int = 2000
    learning_rate: float = 1e-3
    ridge_lambda: float = 1e-3
    seed: int = 0
    balance_domains: bool = True
    max_pairs_per_domain: int = 2048
    full_batch_limit: int = 2048
    # z-score gain applied to aligned features before the one-class stage;
    # < 1 keeps the one-class sigmoids graded further from the healthy cloud
    feature_gain: float = 1.0
    # independently initialized one-class layers, each with its own threshold;
    # detection is their majority vote, which averages out the draw-to-draw
    # variance of a single random hidden layer
    n_committee: int = 7


@dataclass
class TrainingHistory:
    epochs: np.ndarray
    mds_loss: np.ndarray
    disc_loss: np.ndarray
    eta_target: np.ndarray

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w") as fh:
            fh.write("epoch,mds_loss,disc_loss,eta_target\n")
            for row in zip(self.epochs, self.mds_loss, self.disc_loss, self.eta_target):
                fh.write(f"{int(row[0])},{float(row[1])!r},{float(row[2])!r},{float(row[3])!r}\n")


@dataclass
class OneClassMember:
    layer: ElmLayer
    threshold: float


@dataclass
class AdauModel:
    extractor: DenseNet
    discriminator: DenseNet
    members: list  # of OneClassMember
    alpha: float
    config: AdauConfig
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None
    history: TrainingHistory | None = None

    @property
    def oneclass(self) -> ElmLayer:
        return self.members[0].layer

    @property
    def threshold(self) -> float:
        return self.members[0].threshold

    def extract(self, X) -> np.ndarray:
        return self.extractor(_as_matrix(X))

    def _oc_features(self, X) -> np.ndarray:
        F = self.extract(X)
        if self.feature_mean is None:
            return F
        return (F - self.feature_mean) / self.feature_std * self.config.feature_gain

    def score(self, X) -> np.ndarray:
        F = self._oc_features(X)
        return np.mean([m.layer.predict(F).ravel() for m in self.members], axis=0)

    def residual(self, X) -> np.ndarray:
        F = self._oc_features(X)
        return np.mean(
            [np.abs(1.0 - m.layer.predict(F).ravel()) for m in self.members], axis=0
        )

    def detect(self, X) -> np.ndarray:
        F = self._oc_features(X)
        votes = np.sum(
            [
                np.abs(1.0 - m.layer.predict(F).ravel()) > m.threshold
                for m in self.members
            ],
            axis=0,
        )
        return np.where(2 * votes > len(self.members), ANOMALOUS, HEALTHY)


def extract(model: AdauModel, X) -> np.ndarray:
    return model.extract(X)


def build_extractor(n_in: int, width: int, seed) -> DenseNet:
    """Two tanh hidden layers of ``width`` neurons plus an identity output of the same width."""
    return DenseNet.build([n_in, width, width, width], ["tanh", "tanh", "identity"], seed)


def build_discriminator(n_in: int, seed) -> DenseNet:
    """Two 5-neuron tanh layers plus a single sigmoid output."""
    return DenseNet.build([n_in, 5, 5, 1], ["tanh", "tanh", "sigmoid"], seed)


def train_adau(
    source,
    target,
    config: AdauConfig,
    discriminator_trainable: bool = True,
) -> AdauModel:
    """Adversarially align source and target healthy data, then fit the one-class stage.

    Each epoch the extractor receives the gradient of the MDS loss plus the
    reversed discriminator gradient; the discriminator descends its own BCE.
    Afterwards a committee of one-class ELMs is trained on the aligned
    features of source + target; each member's detection threshold comes from
    target validation features only and detection is the committee's majority
    vote.
    """
    if config.n_committee < 1:
        raise ValueError("n_committee must be >= 1")
    X_s = _as_matrix(source)
    X_t = _as_matrix(target)
    if isinstance(source, Dataset) and not source.is_healthy_only():
        raise ValueError("source data must be healthy-only")
    if isinstance(target, Dataset) and not target.is_healthy_only():
        raise ValueError("target data must be healthy-only")
    if X_s.shape[1] != X_t.shape[1]:
        raise ValueError("source and target feature counts differ")
    if X_s.shape[0] < 2 or X_t.shape[0] < 2:
        raise ValueError("need at least 2 samples per domain")

    n_s, n_t = X_s.shape[0], X_t.shape[0]
    X = np.vstack([X_s, X_t])
    domain = np.array([Domain.SOURCE.value] * n_s + [Domain.TARGET.value] * n_t)
    is_source = np.arange(n_s + n_t) < n_s

    seeds = np.random.SeedSequence(config.seed).spawn(4)
    extractor = build_extractor(X.shape[1], config.extractor_width, seeds[0])
    discriminator = build_discriminator(config.extractor_width, seeds[1])
    rng = np.random.default_rng(seeds[2])

    opt_ext = Adam(extractor.parameters(), lr=config.learning_rate)
    opt_disc = Adam(discriminator.parameters(), lr=config.learning_rate)

    bce_weights = balance_weights(domain) if config.balance_domains else None
    subsample = n_s + n_t > config.full_batch_limit
    # pair count n*(n-1)/2 <= max_pairs_per_domain
    cap = int((1 + np.sqrt(1 + 8 * config.max_pairs_per_domain)) / 2)

    hist = np.empty((config.epochs, 4))
    for epoch in range(config.epochs):
        acts_ext = extractor.forward(X)
        F = acts_ext[-1]

        if subsample:
            src_idx = rng.choice(n_s, size=min(n_s, cap), replace=False)
            tgt_idx = n_s + rng.choice(n_t, size=min(n_t, cap), replace=False)
            mds_idx = np.concatenate([src_idx, tgt_idx])
        else:
            mds_idx = np.arange(n_s + n_t)
        loss_mds, eta_t, grad_F_sub = mds_loss(X[mds_idx], F[mds_idx], domain[mds_idx])
        grad_F = np.zeros_like(F)
        grad_F[mds_idx] = grad_F_sub

        acts_disc = discriminator.forward(F)
        d_out = acts_disc[-1]
        loss_d, grad_dout = discriminator_loss(d_out, domain, weights=bce_weights)
        grads_disc, grad_F_disc = discriminator.backward(acts_disc, grad_dout.reshape(-1, 1))

        if not (np.isfinite(loss_mds) and np.isfinite(loss_d)):
            raise RuntimeError(
                f"non-finite loss at epoch {epoch}: mds={loss_mds}, disc={loss_d}"
            )

        upstream_ext = grad_F + grl_backward(grad_F_disc, config.alpha)
        grads_ext, _ = extractor.backward(acts_ext, upstream_ext)

        opt_ext.step(flatten_grads(grads_ext))
        if discriminator_trainable:
            opt_disc.step(flatten_grads(grads_disc))

        hist[epoch] = (epoch, loss_mds, loss_d, eta_t)

    history = TrainingHistory(
        epochs=hist[:, 0], mds_loss=hist[:, 1], disc_loss=hist[:, 2], eta_target=hist[:, 3]
    )

    # one-class stage on standardized aligned features; threshold from target
    # validation only
    F_all = extractor(X)
    feature_mean = F_all.mean(axis=0)
    feature_std = F_all.std(axis=0)
    feature_std[feature_std == 0] = 1.0
    F_oc = (F_all - feature_mean) / feature_std * config.feature_gain

    tgt_rows = np.flatnonzero(~is_source)
    rng_oc = np.random.default_rng(seeds[3])
    perm = rng_oc.permutation(tgt_rows.size)
    n_val = max(1, int(round(tgt_rows.size / 5.0)))
    val_rows = tgt_rows[perm[:n_val]]
    train_rows = np.concatenate([np.flatnonzero(is_source), tgt_rows[perm[n_val:]]])

    members = []
    for _ in range(config.n_committee):
        oc_seed = int(rng_oc.integers(2**31))
        oc = train_oneclass(F_oc[train_rows], config.n_oneclass, config.ridge_lambda, oc_seed)
        resid = np.abs(1.0 - oc.predict(F_oc[val_rows]).ravel())
        members.append(OneClassMember(layer=oc, threshold=detection_threshold(resid)))

    return AdauModel(
        extractor=extractor,
        discriminator=discriminator,
        members=members,
        alpha=config.alpha,
        config=config,
        feature_mean=feature_mean,
        feature_std=feature_std,
        history=history,
    )


def discriminator_accuracy(model: AdauModel, X, domain) -> float:
    """Fraction of samples whose domain the discriminator recovers at the 0.5 cut."""
    F = model.extract(X)
    p = model.discriminator(F).ravel()
    y = _domain_mask(domain)
    return float(np.mean((p > 0.5) == y))


# ---------------------------------------------------------------------------
# Serialization


def _net_to_dict(net: DenseNet) -> list[dict]:
    return [
        {"weights": l.weights.tolist(), "bias": l.bias.tolist(), "activation": l.activation}
        for l in net.layers
    ]


def _net_from_dict(payload: list[dict]) -> DenseNet:
    return DenseNet(
        layers=[
            DenseLayer(
                weights=np.asarray(l["weights"]),
                bias=np.asarray(l["bias"]),
                activation=l["activation"],
            )
            for l in payload
        ]
    )


def adau_to_dict(model: AdauModel) -> dict:
    from .elm import _layer_to_dict

    return {
        "format_version": _FORMAT_VERSION,
        "kind": "adau",
        "alpha": model.alpha,
        "extractor": _net_to_dict(model.extractor),
        "discriminator": _net_to_dict(model.discriminator),
        "committee": [
            {"layer": _layer_to_dict(m.layer), "threshold": m.threshold}
            for m in model.members
        ],
        "feature_mean": None if model.feature_mean is None else model.feature_mean.tolist(),
        "feature_std": None if model.feature_std is None else model.feature_std.tolist(),
        "config": {
            "extractor_width": model.config.extractor_width,
            "n_oneclass": model.config.n_oneclass,
            "alpha": model.config.alpha,
            "epochs": model.config.epochs,
            "learning_rate": model.config.learning_rate,
            "ridge_lambda": model.config.ridge_lambda,
            "seed": model.config.seed,
            "balance_domains": model.config.balance_domains,
            "feature_gain": model.config.feature_gain,
            "n_committee": model.config.n_committee,
        },
    }


def adau_from_dict(payload: dict) -> AdauModel:
    from .elm import _layer_from_dict

    if payload.get("kind") != "adau":
        raise ValueError("not an ADAU model payload")
    cfg = AdauConfig(**payload["config"])
    fmean = payload.get("feature_mean")
    fstd = payload.get("feature_std")
    return AdauModel(
        extractor=_net_from_dict(payload["extractor"]),
        discriminator=_net_from_dict(payload["discriminator"]),
        members=[
            OneClassMember(
                layer=_layer_from_dict(entry["layer"]),
                threshold=float(entry["threshold"]),
            )
            for entry in payload["committee"]
        ],
        alpha=float(payload["alpha"]),
        config=cfg,
        feature_mean=None if fmean is None else np.asarray(fmean),
        feature_std=None if fstd is None else np.asarray(fstd),
    )


def save_adau(model: AdauModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(adau_to_dict(model)) + "\n")


def load_adau(path: str | Path) -> AdauModel:
    return adau_from_dict(json.loads(Path(path).read_text()))
