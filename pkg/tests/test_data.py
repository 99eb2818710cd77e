"""Tests for dataset handling, preprocessing, and synthetic generation."""
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adau.data import (
    ANOMALOUS,
    HEALTHY,
    AffineShift,
    Dataset,
    Domain,
    FeatureKind,
    SyntheticSpec,
    WindowSpec,
    compute_stride,
    concat_datasets,
    downsample,
    fft_features,
    load_dataset,
    load_signal,
    mode_centers,
    preprocess_signal,
    rotation_matrix,
    save_dataset,
    split_train_val,
    synth_generate,
    window,
)


# ---------------------------------------------------------------------------
# Stride and windowing


def test_stride_published_values():
    assert compute_stride(60985, 1024, 200) == 300
    assert compute_stride(121411, 1024, 200) == 602


def test_stride_windows_fit_signal():
    for n, wl, wc in [(60985, 1024, 200), (121411, 1024, 200), (5000, 128, 37)]:
        stride = compute_stride(n, wl, wc)
        assert (wc - 1) * stride + wl <= n


def test_stride_rejects_short_signal():
    with pytest.raises(ValueError):
        compute_stride(100, 1024, 200)


def test_stride_rejects_excessive_window_count():
    with pytest.raises(ValueError):
        compute_stride(1030, 1024, 100)


@given(
    n=st.integers(2000, 300000),
    wl=st.sampled_from([128, 256, 1024]),
    wc=st.integers(2, 250),
)
@settings(max_examples=200, deadline=None)
def test_stride_property_windows_always_fit(n, wl, wc):
    try:
        stride = compute_stride(n, wl, wc)
    except ValueError:
        return
    assert stride >= 1
    assert (wc - 1) * stride + wl <= n


def test_window_rows_are_signal_slices():
    sig = np.arange(100.0)
    spec = WindowSpec(window_length=10, window_count=5, stride=20)
    rows = window(sig, spec)
    assert rows.shape == (5, 10)
    for k in range(5):
        np.testing.assert_array_equal(rows[k], sig[20 * k : 20 * k + 10])


def test_window_spec_for_signal_round_trip():
    sig = np.random.default_rng(0).standard_normal(60985)
    spec = WindowSpec.for_signal(sig.size, 1024, 200)
    assert spec.stride == 300
    assert window(sig, spec).shape == (200, 1024)


# ---------------------------------------------------------------------------
# Downsampling


def test_downsample_published_counts():
    assert downsample(np.zeros(243938), 4).size == 60985
    assert downsample(np.zeros(485643), 4).size == 121411


def test_downsample_keeps_every_kth():
    sig = np.arange(20)
    np.testing.assert_array_equal(downsample(sig, 4), [0, 4, 8, 12, 16])


@given(
    n=st.integers(1, 5000),
    a=st.integers(1, 6),
    b=st.integers(1, 6),
)
@settings(max_examples=100, deadline=None)
def test_downsample_composition(n, a, b):
    sig = np.arange(n)
    np.testing.assert_array_equal(
        downsample(downsample(sig, a), b), downsample(sig, a * b)
    )


def test_downsample_rejects_empty_and_bad_factor():
    with pytest.raises(ValueError):
        downsample(np.array([]), 2)
    with pytest.raises(ValueError):
        downsample(np.arange(5), 0)


# ---------------------------------------------------------------------------
# FFT features


def test_fft_features_shape_and_first_bin():
    win = np.random.default_rng(1).standard_normal((7, 64))
    feats = fft_features(win)
    assert feats.shape == (7, 32)
    np.testing.assert_allclose(feats[:, 0], np.abs(win.sum(axis=1)))


def test_fft_features_pure_tone():
    t = np.arange(64)
    win = np.cos(2 * np.pi * 4 * t / 64)
    feats = fft_features(win)
    assert np.argmax(feats) == 4


def test_fft_features_rejects_odd_length():
    with pytest.raises(ValueError):
        fft_features(np.zeros((3, 63)))


def test_preprocess_signal_pipeline_shape():
    sig = np.random.default_rng(2).standard_normal(4096 * 4)
    ds = preprocess_signal(sig, factor=4, window_length=256, window_count=10)
    assert ds.samples.shape == (10, 128)
    assert ds.feature_kind == FeatureKind.FFT_MAGNITUDE
    assert ds.domain == Domain.TARGET


# ---------------------------------------------------------------------------
# Dataset container and splits


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros(5), Domain.SOURCE, FeatureKind.SYNTHETIC)
    with pytest.raises(ValueError):
        Dataset(np.full((3, 2), np.nan), Domain.SOURCE, FeatureKind.SYNTHETIC)
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), Domain.SOURCE, FeatureKind.SYNTHETIC, labels=np.zeros(4))


def test_split_train_val_sizes_and_disjoint():
    ds = Dataset(
        np.arange(100.0).reshape(50, 2), Domain.TARGET, FeatureKind.SYNTHETIC
    )
    train, val = split_train_val(ds, seed=3)
    assert train.n_samples == 40 and val.n_samples == 10
    joined = np.vstack([train.samples, val.samples])
    assert np.unique(joined[:, 0]).size == 50


def test_split_train_val_deterministic():
    ds = Dataset(np.random.default_rng(4).standard_normal((37, 3)), Domain.TARGET, FeatureKind.SYNTHETIC)
    a1, b1 = split_train_val(ds, seed=9)
    a2, b2 = split_train_val(ds, seed=9)
    np.testing.assert_array_equal(a1.samples, a2.samples)
    np.testing.assert_array_equal(b1.samples, b2.samples)


def test_split_rejects_anomalous_rows():
    ds = Dataset(
        np.zeros((10, 2)),
        Domain.TARGET,
        FeatureKind.SYNTHETIC,
        labels=np.array([HEALTHY] * 9 + [ANOMALOUS]),
    )
    with pytest.raises(ValueError):
        split_train_val(ds, seed=0)


def test_concat_datasets_carries_labels_and_groups():
    a = Dataset(np.zeros((3, 2)), Domain.TARGET, FeatureKind.SYNTHETIC,
                labels=np.zeros(3, dtype=int), groups=np.ones(3, dtype=int))
    b = Dataset(np.ones((2, 2)), Domain.TARGET, FeatureKind.SYNTHETIC,
                labels=np.ones(2, dtype=int), groups=np.full(2, 2))
    c = concat_datasets([a, b])
    assert c.n_samples == 5
    np.testing.assert_array_equal(c.labels, [0, 0, 0, 1, 1])
    np.testing.assert_array_equal(c.groups, [1, 1, 1, 2, 2])


# ---------------------------------------------------------------------------
# Synthetic generation


def _small_spec(seed=0, **kw):
    defaults = dict(
        n_modes=3,
        modes_in_target_training=frozenset({1}),
        dim=4,
        shift=AffineShift(scale=(1.2, 1.2, 1.2, 1.2), angles=(0.3,), translation=(0.5, 0.0, -0.5, 0.2), noise_std=0.01),
        anomaly_offset=5.0,
        samples_per_mode=30,
        seed=seed,
    )
    defaults.update(kw)
    return SyntheticSpec(**defaults)


def test_rotation_matrix_is_orthogonal():
    rot = rotation_matrix(6, (0.4, -0.7, 1.1))
    np.testing.assert_allclose(rot @ rot.T, np.eye(6), atol=1e-12)


def test_mode_centers_minimum_spacing():
    spec = _small_spec(mode_spacing=3.0)
    centers = mode_centers(spec)
    dists = [
        np.linalg.norm(centers[i] - centers[j])
        for i in range(3)
        for j in range(i + 1, 3)
    ]
    assert min(dists) == pytest.approx(3.0)


def test_synth_generate_shapes_and_labels():
    spec = _small_spec()
    source, target_train, test_h, test_a = synth_generate(spec)
    assert source.n_samples == 90 and source.domain == Domain.SOURCE
    assert target_train.n_samples == 30
    assert test_h.n_samples == 90 and test_a.n_samples == 90
    assert np.all(test_h.labels == HEALTHY)
    assert np.all(test_a.labels == ANOMALOUS)
    assert set(np.unique(source.groups)) == {1, 2, 3}
    assert set(np.unique(target_train.groups)) == {1}


def test_synth_generate_deterministic():
    a = synth_generate(_small_spec(seed=7))
    b = synth_generate(_small_spec(seed=7))
    for da, db in zip(a, b):
        np.testing.assert_array_equal(da.samples, db.samples)


def test_synth_generate_seed_changes_data():
    a = synth_generate(_small_spec(seed=7))[0]
    b = synth_generate(_small_spec(seed=8))[0]
    assert not np.array_equal(a.samples, b.samples)


def test_synth_anomaly_offset_magnitude():
    # with zero noise, anomalies sit exactly anomaly_offset from their healthy base
    spec = _small_spec(
        shift=AffineShift.identity(), anomaly_offset=5.0
    )
    _, _, test_h, test_a = synth_generate(spec)
    # healthy and anomalous draws differ, but anomaly displacement dominates:
    # every anomaly must be at least offset - cluster diameter from its mode center
    centers = mode_centers(spec)
    for m in (1, 2, 3):
        rows = test_a.samples[test_a.groups == m]
        d = np.linalg.norm(rows - centers[m - 1], axis=1)
        assert np.all(d > 5.0 - 1.5)


def test_spec_rejects_bad_mode_subset():
    with pytest.raises(ValueError):
        _small_spec(modes_in_target_training=frozenset({9}))
    with pytest.raises(ValueError):
        _small_spec(modes_in_target_training=frozenset())


# ---------------------------------------------------------------------------
# Persistence


def test_save_load_round_trip(tmp_path):
    ds = Dataset(
        np.random.default_rng(5).standard_normal((12, 3)),
        Domain.SOURCE,
        FeatureKind.SYNTHETIC,
        labels=np.array([HEALTHY] * 6 + [ANOMALOUS] * 6),
    )
    path = tmp_path / "data.csv"
    save_dataset(ds, path, seed=42)
    loaded = load_dataset(path)
    np.testing.assert_allclose(loaded.samples, ds.samples)
    np.testing.assert_array_equal(loaded.labels, ds.labels)
    assert loaded.domain == Domain.SOURCE
    manifest = json.loads((tmp_path / "data.manifest.json").read_text())
    assert manifest["n_samples"] == 12 and manifest["seed"] == 42


def test_save_load_without_labels(tmp_path):
    ds = Dataset(np.eye(4), Domain.TARGET, FeatureKind.SYNTHETIC)
    path = tmp_path / "plain.csv"
    save_dataset(ds, path)
    loaded = load_dataset(path)
    assert loaded.labels is None
    np.testing.assert_allclose(loaded.samples, np.eye(4))


def test_load_signal_formats(tmp_path):
    p1 = tmp_path / "sig.csv"
    p1.write_text("1.0\n2.0\n-3.5\n")
    np.testing.assert_allclose(load_signal(p1), [1.0, 2.0, -3.5])
    p2 = tmp_path / "sig.txt"
    p2.write_text("1 2 3\n4 5")
    np.testing.assert_allclose(load_signal(p2), [1, 2, 3, 4, 5])
