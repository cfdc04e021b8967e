import numpy as np
import pytest

from ecgbench.baseline import (
    WaveletConfig,
    extract_features,
    naive_fit,
    naive_predict,
    predict_wavelet_baseline,
    train_wavelet_baseline,
)
from ecgbench.metrics import macro_auc
from ecgbench.records import LabelMatrix, PredictionMatrix
from ecgbench.shallow import TrainConfig


def label_matrix(values):
    values = np.array(values, dtype=float)
    ids = tuple(f"r{i}" for i in range(values.shape[0]))
    codes = tuple(f"c{j}" for j in range(values.shape[1]))
    return LabelMatrix(ids, codes, values)


class TestNaive:
    def test_frequency_counting(self):
        labels = label_matrix([[1, 0], [1, 1]])
        freqs = naive_fit(labels)
        assert freqs.tolist() == [1.0, 0.5]
        preds = naive_predict(freqs, ("t1", "t2", "t3"), labels.class_codes)
        assert np.array_equal(preds.scores, np.tile([1.0, 0.5], (3, 1)))

    def test_rows_identical(self):
        labels = label_matrix((np.random.default_rng(0).random((20, 4)) < 0.3).astype(float))
        preds = naive_predict(naive_fit(labels), tuple(f"t{i}" for i in range(7)),
                              labels.class_codes)
        assert (preds.scores == preds.scores[0]).all()

    def test_macro_auc_exactly_half(self):
        rng = np.random.default_rng(1)
        train = label_matrix((rng.random((50, 5)) < 0.4).astype(float))
        test_values = (rng.random((40, 5)) < 0.4).astype(float)
        test_values[0] = 1.0
        test_values[1] = 0.0
        test = label_matrix(test_values)
        preds = naive_predict(naive_fit(train), test.record_ids, test.class_codes)
        _, macro = macro_auc(preds, test)
        assert macro == 0.5  # constant scores tie every pair

    def test_empty_training_error(self):
        with pytest.raises(ValueError, match="empty"):
            naive_fit(label_matrix(np.zeros((0, 2))))


def synthetic_signals(labels, n_leads=2, t=256, seed=0):
    """Signals whose per-lead oscillation frequency encodes the class labels,
    so wavelet band energies are informative."""
    rng = np.random.default_rng(seed)
    out = []
    for row in labels.values:
        signal = rng.normal(scale=0.05, size=(n_leads, t))
        ticks = np.arange(t)
        if row[0] == 1.0:  # fast oscillation -> detail-band energy
            signal += 0.8 * np.sin(ticks * np.pi * 0.9)
        if row.shape[0] > 1 and row[1] == 1.0:  # slow drift -> approx band
            signal += 0.8 * np.sin(ticks * 2 * np.pi / t)
        out.append(signal)
    return out


class TestWaveletPipeline:
    def make_dataset(self, n, seed):
        rng = np.random.default_rng(seed)
        values = (rng.random((n, 2)) < 0.5).astype(float)
        labels = label_matrix(values)
        return labels, synthetic_signals(labels, seed=seed + 1)

    def test_learns_synthetic_bands(self):
        train_labels, train_signals = self.make_dataset(160, seed=0)
        val_labels, val_signals = self.make_dataset(60, seed=10)
        test_labels, test_signals = self.make_dataset(60, seed=20)
        config = WaveletConfig(levels=3)
        x_train = extract_features(train_signals, config)
        x_val = extract_features(val_signals, config)
        model = train_wavelet_baseline(
            x_train,
            train_labels,
            x_val,
            val_labels,
            train_config=TrainConfig(hidden_dim=16, max_epochs=25, batch_size=32, seed=0),
            wavelet_config=config,
        )
        preds = predict_wavelet_baseline(model, test_signals, test_labels.record_ids)
        _, auc = macro_auc(preds, test_labels)
        assert auc > 0.9

    def test_windowed_prediction_path(self):
        labels, signals = self.make_dataset(40, seed=3)
        config = WaveletConfig(levels=3, window_len=128)
        x = extract_features(signals, config, crop_seed=5)
        assert x.shape[0] == 40
        model = train_wavelet_baseline(
            x, labels, x, labels,
            train_config=TrainConfig(hidden_dim=8, max_epochs=3, seed=1),
            wavelet_config=config,
        )
        preds = predict_wavelet_baseline(model, signals, labels.record_ids)
        assert preds.scores.shape == (40, 2)
        assert ((preds.scores > 0) & (preds.scores < 1)).all()

    def test_crop_seed_determinism(self):
        labels, signals = self.make_dataset(10, seed=4)
        config = WaveletConfig(levels=2, window_len=64)
        a = extract_features(signals, config, crop_seed=9)
        b = extract_features(signals, config, crop_seed=9)
        c = extract_features(signals, config, crop_seed=10)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_class_order_mismatch_rejected(self):
        labels, signals = self.make_dataset(20, seed=6)
        flipped = LabelMatrix(
            labels.record_ids, labels.class_codes[::-1], labels.values[:, ::-1]
        )
        x = extract_features(signals, WaveletConfig(levels=2))
        with pytest.raises(ValueError, match="class order"):
            train_wavelet_baseline(x, labels, x, flipped)
