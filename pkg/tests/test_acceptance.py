"""Acceptance suite for the full pipeline.

Each criterion prints one ``[PASS]``/``[FAIL]`` line; the project's pytest
capture mode (tee-sys) passes the lines through to the terminal.
"""
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import optimize, stats

from adau import adversarial, metrics
from adau.adversarial import (
    AdauConfig,
    DenseNet,
    balance_weights,
    discriminator_accuracy,
    discriminator_loss,
    flatten_grads,
    mds_loss,
    train_adau,
)
from adau.cli import main as cli_main
from adau.data import compute_stride, downsample
from adau.distance import imed_distance, imed_kernel
from adau.elm import detection_threshold, ridge_solve
from adau.harness import (
    MODEL_ADAU,
    MODEL_MIXED,
    MODEL_TARGET_ONLY,
    ExperimentConfig,
    run_experiment,
)

CONFIG_PATH = Path(__file__).resolve().parent.parent / "configs" / "acceptance.json"


def _criterion(number: int, description: str, passed: bool) -> None:
    print(f"\n[{'PASS' if passed else 'FAIL'}] criterion {number}: {description}", flush=True)
    assert passed, f"criterion {number}: {description}"


# ---------------------------------------------------------------------------
# 1. Window stride on the reference signal lengths


def test_criterion_1_stride():
    ok = compute_stride(60985, 1024, 200) == 300 and compute_stride(121411, 1024, 200) == 602
    _criterion(1, "stride is 300 for 60985 samples and 602 for 121411 samples", ok)


# ---------------------------------------------------------------------------
# 2. Decimation counts


def test_criterion_2_downsample():
    a = downsample(np.zeros(243938), 4).size
    b = downsample(np.zeros(485643), 4).size
    ok = a == 60985 and b == 121411
    _criterion(2, "factor-4 decimation yields 60985 and 121411 samples", ok)


# ---------------------------------------------------------------------------
# 3. Closed-form target scale factor


def _target_loss_curve(X, F, idx):
    dX = np.sqrt(((X[idx][:, None] - X[idx][None]) ** 2).sum(-1))
    dF = np.sqrt(((F[idx][:, None] - F[idx][None]) ** 2).sum(-1))
    iu = np.triu_indices(idx.size, k=1)

    def loss(eta):
        return float(np.sum((dX[iu] - eta * dF[iu]) ** 2)) / idx.size

    return loss


def test_criterion_3_eta_target():
    rng = np.random.default_rng(0)
    domain = ["source"] * 6 + ["target"] * 6
    idx_target = np.arange(6, 12)
    ok = True
    for _ in range(50):
        X = rng.standard_normal((12, 5))
        F = rng.standard_normal((12, 7))
        _, eta, _ = mds_loss(X, F, domain)
        loss = _target_loss_curve(X, F, idx_target)
        res = optimize.minimize_scalar(
            loss, bounds=(0.0, 100.0), method="bounded", options={"xatol": 1e-10}
        )
        ok &= abs(eta - res.x) <= 1e-6 * max(abs(res.x), 1e-12)
        ok &= loss(eta) <= loss(eta * 1.01) and loss(eta) <= loss(eta * 0.99)
    _criterion(3, "closed-form eta_target matches the 1-D optimizer to 1e-6", ok)


# ---------------------------------------------------------------------------
# 4. Analytic gradients against central finite differences


def _fd_param_grads(params, loss_fn, eps=1e-6):
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.ravel(), g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss_fn()
            flat[i] = orig - eps
            lo = loss_fn()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * eps)
        grads.append(g)
    return grads


def _grads_match(a, b):
    # the absolute floor keeps exactly-zero gradients (translation-invariant
    # losses) from turning finite-difference noise into a spurious mismatch
    return np.allclose(a, b, rtol=1e-4, atol=1e-6)


def test_criterion_4_gradients():
    domain = ["source"] * 5 + ["target"] * 5
    ok = True
    for seed in range(3):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((10, 4))

        # extractor parameters through the distance-preservation loss
        net = DenseNet.build([4, 6, 3], ["tanh", "identity"], seed)
        acts = net.forward(X)
        loss, _, grad_F = mds_loss(X, acts[-1], domain)
        analytic, grad_in = net.backward(acts, grad_F)
        fd = _fd_param_grads(net.parameters(), lambda: mds_loss(X, net(X), domain)[0])
        for a, b in zip(flatten_grads(analytic), fd):
            ok &= _grads_match(a, b)

        # feature gradient of the distance-preservation loss
        F = acts[-1].copy()
        fd_F = np.zeros_like(F)
        eps = 1e-6
        for i in range(F.size):
            orig = F.flat[i]
            F.flat[i] = orig + eps
            hi = mds_loss(X, F, domain)[0]
            F.flat[i] = orig - eps
            lo = mds_loss(X, F, domain)[0]
            F.flat[i] = orig
            fd_F.flat[i] = (hi - lo) / (2 * eps)
        ok &= _grads_match(grad_F, fd_F)

        # discriminator parameters and input through the balanced BCE
        disc = DenseNet.build([3, 5, 1], ["tanh", "sigmoid"], seed + 100)
        w = balance_weights(domain)

        def disc_loss_fn(feats):
            return discriminator_loss(disc(feats), domain, w)[0]

        d_acts = disc.forward(F)
        _, d_grad = discriminator_loss(d_acts[-1], domain, w)
        d_analytic, d_in = disc.backward(d_acts, d_grad.reshape(-1, 1))
        d_fd = _fd_param_grads(disc.parameters(), lambda: disc_loss_fn(F))
        for a, b in zip(flatten_grads(d_analytic), d_fd):
            ok &= _grads_match(a, b)
        fd_in = np.zeros_like(F)
        for i in range(F.size):
            orig = F.flat[i]
            F.flat[i] = orig + eps
            hi = disc_loss_fn(F)
            F.flat[i] = orig - eps
            lo = disc_loss_fn(F)
            F.flat[i] = orig
            fd_in.flat[i] = (hi - lo) / (2 * eps)
        ok &= _grads_match(d_in, fd_in)
    _criterion(4, "analytic gradients match central differences to 1e-4", ok)


# ---------------------------------------------------------------------------
# 5. Ridge solver against explicit normal equations


def test_criterion_5_ridge():
    rng = np.random.default_rng(0)
    ok = True
    for _ in range(100):
        n = int(rng.integers(5, 51))
        h = int(rng.integers(2, 21))
        k = int(rng.integers(1, 4))
        H = rng.standard_normal((n, h))
        T = rng.standard_normal((n, k))
        lam = float(rng.uniform(1e-4, 1.0))
        B = ridge_solve(H, T, lam)
        ref = np.linalg.inv(H.T @ H + lam * np.eye(h)) @ H.T @ T
        ok &= np.allclose(B, ref, rtol=1e-8, atol=1e-10)
    _criterion(5, "ridge solutions match normal-equation inversion to 1e-8", ok)


# ---------------------------------------------------------------------------
# 6. Image euclidean distance: double sum vs quadratic form


def test_criterion_6_imed():
    kernel = imed_kernel(8, 8)
    rng = np.random.default_rng(0)
    ok = True
    for _ in range(100):
        x = rng.uniform(size=64)
        y = rng.uniform(size=64)
        diff = x - y
        double_sum = sum(
            kernel.gram[i, j] * diff[i] * diff[j] for i in range(64) for j in range(64)
        )
        ok &= abs(double_sum - imed_distance(x, y, kernel) ** 2) <= 1e-10
    z = rng.uniform(size=64)
    ok &= imed_distance(z, z, kernel) == 0.0
    _criterion(6, "pixel double sum equals the quadratic form to 1e-10", ok)


# ---------------------------------------------------------------------------
# 7. Detection threshold calibration


def test_criterion_7_threshold():
    r = np.random.default_rng(0).uniform(size=1_000_000)
    t = detection_threshold(r)
    ok = abs(t - 1.194) <= 0.01 * 1.194
    _criterion(7, f"threshold {t:.4f} on uniform residuals within 1% of 1.194", ok)


# ---------------------------------------------------------------------------
# 8. Statistical tests


def _paired(b, c):
    a_succ = np.array([True] * 10 + [True] * b + [False] * c)
    b_succ = np.array([True] * 10 + [False] * b + [True] * c)
    return metrics.PairedOutcomes(a_succ, b_succ)


def test_criterion_8_statistics():
    ok = abs(metrics.mcnemar(_paired(15, 0), mode="exact").p_value - 6.103515625e-05) < 1e-12
    ok &= metrics.mcnemar(_paired(7, 7), mode="exact").p_value == pytest.approx(1.0)

    rng = np.random.default_rng(0)
    g1 = (rng.uniform(size=80) < 0.85).astype(float)
    g2 = (rng.uniform(size=80) < 0.6).astype(float)

    def ll(k, n):
        if k == 0 or k == n:
            return 0.0
        p = k / n
        return k * np.log(p) + (n - k) * np.log(1 - p)

    oracle = 2.0 * (
        ll(int(g1.sum()), g1.size)
        + ll(int(g2.sum()), g2.size)
        - ll(int(g1.sum() + g2.sum()), g1.size + g2.size)
    )
    res = metrics.glm_model_factor([g1, g2])
    ok &= abs(res.statistic - oracle) <= 1e-6
    ok &= abs(res.p_value - float(stats.chi2.sf(oracle, 1))) <= 1e-6
    _criterion(8, "exact McNemar and logistic likelihood-ratio tests match oracles", ok)


# ---------------------------------------------------------------------------
# 9. End-to-end ordering on the multi-mode benchmark


def _unseen_mean(results, model, key):
    unseen = [1, 3, 4, 5]
    per_run = [
        float(np.mean([r.per_mode[m][key] for m in unseen]))
        for r in results
        if r.model == model and not r.failed
    ]
    return float(np.mean(per_run))


def test_criterion_9_benchmark_ordering():
    config = ExperimentConfig.from_json(CONFIG_PATH)
    start = time.perf_counter()
    results = run_experiment(config)
    elapsed = time.perf_counter() - start

    tgt_ba = _unseen_mean(results, MODEL_TARGET_ONLY, "ba")
    tgt_fpr = _unseen_mean(results, MODEL_TARGET_ONLY, "fpr")
    mix_ba = _unseen_mean(results, MODEL_MIXED, "ba")
    adau_ba = _unseen_mean(results, MODEL_ADAU, "ba")

    ok = (
        tgt_ba <= 0.60
        and tgt_fpr >= 0.9
        and adau_ba >= 0.90
        and tgt_ba < mix_ba < adau_ba
        and elapsed <= 600.0
    )
    _criterion(
        9,
        "unseen-mode means: target-only BA "
        f"{tgt_ba:.3f} (FPR {tgt_fpr:.3f}) < mixed {mix_ba:.3f} < adau {adau_ba:.3f} "
        f">= 0.90 in {elapsed:.0f}s",
        ok,
    )


# ---------------------------------------------------------------------------
# 10. No spurious domain signal when source equals target


def test_criterion_10_identical_domains():
    ok = True
    accs = []
    for seed in range(3):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((150, 8)) * 0.15
        config = AdauConfig(
            extractor_width=10, n_oneclass=40, epochs=200, seed=seed,
            learning_rate=3e-3, alpha=0.3,
        )
        model = train_adau(X, X.copy(), config)
        stacked = np.vstack([X, X])
        domain = ["source"] * len(X) + ["target"] * len(X)
        acc = discriminator_accuracy(model, stacked, domain)
        accs.append(acc)
        ok &= 0.4 <= acc <= 0.6
    _criterion(
        10,
        "discriminator accuracy with source == target stays in [0.4, 0.6]: "
        + ", ".join(f"{a:.3f}" for a in accs),
        ok,
    )


# ---------------------------------------------------------------------------
# 11. Byte-identical repeated experiment runs


def test_criterion_11_repeatable_experiment(tmp_path):
    import json

    config = json.loads(CONFIG_PATH.read_text())
    # reduced copy of the benchmark config: same structure, quick to run twice
    config["synthetic"]["samples_per_mode"] = 40
    config["architecture"]["epochs"] = 60
    config["repetitions"] = 2
    cfg_file = tmp_path / "config.json"
    cfg_file.write_text(json.dumps(config))
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    cli_main(["experiment", "--config", str(cfg_file), "--out", str(out_a)])
    cli_main(["experiment", "--config", str(cfg_file), "--out", str(out_b)])
    ok = (out_a / "summary.csv").read_bytes() == (out_b / "summary.csv").read_bytes()
    _criterion(11, "repeated experiment command produces byte-identical summary.csv", ok)
